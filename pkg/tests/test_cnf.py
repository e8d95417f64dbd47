import numpy as np
import pytest

from circuitsat.circuit import NodeKind, evaluate, truth_table, validate, xor_circuit
from circuitsat.cnf import (
    CnfError,
    CnfFormula,
    DimacsParseError,
    cnf_to_circuit,
    cnf_truth_table,
    eval_cnf,
    read_dimacs,
    tseitin,
    write_dimacs,
)
from circuitsat.oracle import brute_force_solve, dpll_solve

from test_circuit import random_circuit


def random_formula(rng, num_vars, num_clauses):
    clauses = []
    for _ in range(num_clauses):
        k = int(rng.integers(1, min(num_vars, 4) + 1))
        variables = rng.choice(np.arange(1, num_vars + 1), size=k, replace=False)
        clauses.append([int(v) if rng.random() < 0.5 else -int(v) for v in variables])
    return CnfFormula.from_clauses(num_vars, clauses)


def test_construction_rejects_tautology():
    with pytest.raises(CnfError):
        CnfFormula.from_clauses(1, [[1, -1]])


def test_construction_dedups_literals():
    f = CnfFormula.from_clauses(2, [[1, 1, 2]])
    assert f.clauses == ((1, 2),)


def test_eval_cnf_empty_clause_list_is_true():
    f = CnfFormula.from_clauses(2, [])
    assert eval_cnf(f, {1: 0, 2: 1}) == 1


def test_eval_cnf_unit():
    f = CnfFormula.from_clauses(1, [[1]])
    assert eval_cnf(f, {1: 0}) == 0
    assert eval_cnf(f, {1: 1}) == 1


def test_eval_cnf_requires_complete_assignment():
    f = CnfFormula.from_clauses(2, [[1]])
    with pytest.raises(CnfError):
        eval_cnf(f, {1: 1})


def test_eval_cnf_xor_tseitin_with_forced_auxiliaries():
    # Tseitin CNF of the XOR AIG under x=1, y=0, gate variables forced by
    # exact simulation, must evaluate to 1.
    circuit = xor_circuit()
    formula, tmap = tseitin(circuit)
    assignment = {}
    node_values = {}
    for node_id in range(len(circuit.nodes)):
        node = circuit.nodes[node_id]
        if node.kind is NodeKind.INPUT:
            node_values[node_id] = 1 if node_id == 0 else 0
        elif node.kind is NodeKind.AND:
            node_values[node_id] = (
                node_values[node.preds[0]] & node_values[node.preds[1]]
            )
        else:
            node_values[node_id] = 1 - node_values[node.preds[0]]
        assignment[tmap.gate_var[node_id]] = node_values[node_id]
    assert eval_cnf(formula, assignment) == 1


def test_tseitin_not_gate():
    from circuitsat.circuit import CircuitBuilder

    b = CircuitBuilder()
    x = b.input()
    c = b.build(b.not_(x))
    formula, tmap = tseitin(c)
    assert len(formula.clauses) == 3
    result = brute_force_solve(formula)
    assert result.sat
    assert result.model[tmap.input_var[x]] == 0


def test_tseitin_and_gate():
    from circuitsat.circuit import CircuitBuilder

    b = CircuitBuilder()
    x, y = b.input(), b.input()
    c = b.build(b.and_(x, y))
    formula, tmap = tseitin(c)
    assert len(formula.clauses) == 4
    result = brute_force_solve(formula)
    assert result.sat
    assert result.model[tmap.input_var[x]] == 1
    assert result.model[tmap.input_var[y]] == 1


def test_tseitin_clause_count_linear():
    rng = np.random.default_rng(3)
    for _ in range(20):
        c = random_circuit(rng, int(rng.integers(1, 5)), int(rng.integers(1, 15)))
        formula, _ = tseitin(c)
        n_and = sum(1 for n in c.nodes if n.kind is NodeKind.AND)
        n_not = sum(1 for n in c.nodes if n.kind is NodeKind.NOT)
        assert len(formula.clauses) == 3 * n_and + 2 * n_not + 1


def test_tseitin_equisatisfiable_on_random_circuits():
    rng = np.random.default_rng(5)
    for _ in range(200):
        c = random_circuit(rng, int(rng.integers(1, 6)), int(rng.integers(1, 15)))
        formula, tmap = tseitin(c)
        circuit_sat = bool(truth_table(c).any())
        result = dpll_solve(formula)
        assert result.sat == circuit_sat
        if result.sat:
            assert evaluate(c, tmap.inputs_from_model(result.model)) == 1


def test_cnf_to_circuit_unit_clause_is_input():
    f = CnfFormula.from_clauses(1, [[1]])
    c = cnf_to_circuit(f)
    assert len(c.nodes) == 1
    assert c.nodes[0].kind is NodeKind.INPUT


def test_cnf_to_circuit_binary_clause_de_morgan():
    f = CnfFormula.from_clauses(2, [[1, 2]])
    c = cnf_to_circuit(f)
    kinds = sorted(n.kind.value for n in c.nodes)
    assert kinds == ["A", "I", "I", "N", "N", "N"]
    assert np.array_equal(truth_table(c), cnf_truth_table(f))


def test_cnf_to_circuit_truth_table_exact():
    rng = np.random.default_rng(9)
    for _ in range(200):
        n = int(rng.integers(1, 11))
        f = random_formula(rng, n, int(rng.integers(0, 31)))
        c = cnf_to_circuit(f)
        assert validate(c) is None
        assert len(c.inputs) == n
        assert np.array_equal(truth_table(c), cnf_truth_table(f))


def test_cnf_to_circuit_preserves_symmetry():
    # x ^ y as CNF: (x | y) & (~x | ~y); inputs 0,1 must be symmetric.
    from circuitsat.circuit import semantic_symmetric_input_pairs

    f = CnfFormula.from_clauses(2, [[1, 2], [-1, -2]])
    c = cnf_to_circuit(f)
    assert (0, 1) in semantic_symmetric_input_pairs(c)


def test_read_dimacs_basic():
    f = read_dimacs("p cnf 1 1\n1 0\n")
    assert f.num_vars == 1
    assert f.clauses == ((1,),)


def test_read_dimacs_two_clauses():
    f = read_dimacs("c comment\np cnf 2 2\n1 2 0\n-1 -2 0\n")
    assert f.clauses == ((1, 2), (-1, -2))


def test_read_dimacs_rejects_tautology():
    with pytest.raises(DimacsParseError):
        read_dimacs("p cnf 1 1\n1 -1 0\n")


def test_read_dimacs_header_mismatch():
    with pytest.raises(DimacsParseError):
        read_dimacs("p cnf 2 2\n1 2 0\n")


def test_read_dimacs_out_of_range_literal():
    with pytest.raises(DimacsParseError):
        read_dimacs("p cnf 1 1\n2 0\n")


def test_read_dimacs_missing_terminator():
    with pytest.raises(DimacsParseError):
        read_dimacs("p cnf 2 1\n1 2\n")


def test_dimacs_roundtrip():
    rng = np.random.default_rng(13)
    for _ in range(25):
        f = random_formula(rng, int(rng.integers(1, 9)), int(rng.integers(0, 12)))
        f2 = read_dimacs(write_dimacs(f))
        assert f2 == f
