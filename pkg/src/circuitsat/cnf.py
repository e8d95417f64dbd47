"""CNF formulas, DIMACS I/O, and conversions to/from AIG circuits.

Literals are signed DIMACS-style integers: +v for the variable, -v for its
negation, variables numbered from 1. Clauses are stored as sorted tuples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit, CircuitBuilder, NodeKind, check_valid

Clause = tuple[int, ...]


class CnfError(Exception):
    pass


class DimacsParseError(CnfError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _normalize_clause(literals, num_vars: int) -> Clause:
    lits = set()
    for lit in literals:
        lit = int(lit)
        if lit == 0 or abs(lit) > num_vars:
            raise CnfError(f"literal {lit} out of range 1..{num_vars}")
        lits.add(lit)
    if not lits:
        raise CnfError("empty clause")
    for lit in lits:
        if -lit in lits:
            raise CnfError(f"tautological clause: contains both {lit} and {-lit}")
    return tuple(sorted(lits, key=lambda l: (abs(l), l)))


@dataclass(frozen=True)
class CnfFormula:
    """Conjunction of clauses; duplicate literals are removed and
    tautological clauses rejected at construction."""

    num_vars: int
    clauses: tuple[Clause, ...]

    @classmethod
    def from_clauses(cls, num_vars: int, clauses) -> "CnfFormula":
        if num_vars < 0:
            raise CnfError(f"negative variable count {num_vars}")
        return cls(num_vars, tuple(_normalize_clause(c, num_vars) for c in clauses))


def eval_cnf(formula: CnfFormula, assignment: dict[int, int]) -> int:
    """1 iff every clause has a satisfied literal; assignment must cover
    variables 1..num_vars."""
    for v in range(1, formula.num_vars + 1):
        if v not in assignment:
            raise CnfError(f"assignment missing variable {v}")
    for clause in formula.clauses:
        if not any(
            assignment[abs(lit)] == (1 if lit > 0 else 0) for lit in clause
        ):
            return 0
    return 1


def cnf_truth_table(formula: CnfFormula) -> np.ndarray:
    """Value for every assignment, indexed by the integer whose bit j-1 is
    the value of variable j. Variables capped at 20."""
    if formula.num_vars > 20:
        raise CnfError(f"too many variables for enumeration: {formula.num_vars}")
    idx = np.arange(1 << formula.num_vars, dtype=np.uint32)
    result = np.ones(len(idx), dtype=bool)
    for clause in formula.clauses:
        sat = np.zeros(len(idx), dtype=bool)
        for lit in clause:
            bit = ((idx >> (abs(lit) - 1)) & 1).astype(bool)
            sat |= bit if lit > 0 else ~bit
        result &= sat
    return result


@dataclass(frozen=True)
class TseitinMap:
    """CNF variable assigned to each circuit node (inputs included)."""

    gate_var: dict[int, int]
    input_var: dict[int, int]

    def inputs_from_model(self, model: dict[int, int]) -> dict[int, int]:
        return {node: model[var] for node, var in self.input_var.items()}


def tseitin(circuit: Circuit) -> tuple[CnfFormula, TseitinMap]:
    """Circuit -> equi-satisfiable CNF with one fresh variable per node and
    bidirectional gate encodings; 3 clauses per AND, 2 per NOT, plus the
    unit clause asserting the output."""
    check_valid(circuit)
    gate_var = {i: i + 1 for i in range(len(circuit.nodes))}
    clauses: list[list[int]] = []
    for i, node in enumerate(circuit.nodes):
        z = gate_var[i]
        if node.kind is NodeKind.AND:
            a, b = (gate_var[p] for p in node.preds)
            clauses += [[-z, a], [-z, b], [z, -a, -b]]
        elif node.kind is NodeKind.NOT:
            a = gate_var[node.preds[0]]
            clauses += [[z, a], [-z, -a]]
    clauses.append([gate_var[circuit.output]])
    formula = CnfFormula.from_clauses(len(circuit.nodes), clauses)
    input_var = {i: gate_var[i] for i in circuit.inputs}
    return formula, TseitinMap(gate_var, input_var)


def cnf_to_circuit(formula: CnfFormula) -> Circuit:
    """CNF -> truth-table-equivalent AIG via De Morgan: each clause becomes
    NOT(AND-chain of negated literals), clauses are AND-chained. One input
    node per variable; negated literals share one NOT node per variable."""
    if formula.num_vars < 1:
        raise CnfError("formula must have at least one variable")
    b = CircuitBuilder()
    var_node = {v: b.input() for v in range(1, formula.num_vars + 1)}
    not_node: dict[int, int] = {}

    def lit_node(lit: int) -> int:
        if lit > 0:
            return var_node[lit]
        if -lit not in not_node:
            not_node[-lit] = b.not_(var_node[-lit])
        return not_node[-lit]

    def negated_lit_node(lit: int) -> int:
        return lit_node(-lit)

    clause_outs = []
    for clause in formula.clauses:
        if len(clause) == 1:
            # NOT(NOT l) collapses to the literal node itself.
            clause_outs.append(lit_node(clause[0]))
            continue
        acc = negated_lit_node(clause[0])
        for lit in clause[1:]:
            acc = b.and_(acc, negated_lit_node(lit))
        clause_outs.append(b.not_(acc))
    if clause_outs:
        out = clause_outs[0]
        for c in clause_outs[1:]:
            out = b.and_(out, c)
    else:
        # Empty conjunction is constantly 1: AND all (v | ~v) tautologies.
        out = None
    # Variables not occurring in any clause (and the empty-clause case) are
    # anchored through always-true NOT(v & ~v) gadgets so the circuit has no
    # dead nodes and keeps exactly num_vars inputs.
    used = set()
    for clause in formula.clauses:
        used.update(abs(lit) for lit in clause)
    for v in range(1, formula.num_vars + 1):
        if v not in used:
            tautology = b.not_(b.and_(var_node[v], lit_node(-v)))
            out = tautology if out is None else b.and_(out, tautology)
    # A lone single-literal positive clause can leave `out` pointing at an
    # input that also feeds a shared NOT; that is still a valid single-sink
    # circuit only if nothing else succeeds it, so double-negate if needed.
    nodes = b.nodes
    succ_count = [0] * len(nodes)
    for node in nodes:
        for p in node.preds:
            succ_count[p] += 1
    if succ_count[out] > 0:
        out = b.not_(b.not_(out))
    return b.build(out)


def read_dimacs(text: str) -> CnfFormula:
    num_vars = num_clauses = None
    header_line = 0
    clauses: list[list[int]] = []
    current: list[int] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            if num_vars is not None:
                raise DimacsParseError("duplicate header", ln)
            fields = line.split()
            if len(fields) != 4 or fields[1] != "cnf":
                raise DimacsParseError(f"bad header {line!r}", ln)
            try:
                num_vars, num_clauses = int(fields[2]), int(fields[3])
            except ValueError:
                raise DimacsParseError(f"bad header counts {line!r}", ln) from None
            continue
        if num_vars is None:
            raise DimacsParseError("clause before 'p cnf' header", ln)
        try:
            tokens = [int(t) for t in line.split()]
        except ValueError:
            raise DimacsParseError(f"bad clause line {line!r}", ln) from None
        for tok in tokens:
            if tok == 0:
                try:
                    clauses.append(_normalize_clause(current, num_vars))
                except CnfError as e:
                    raise DimacsParseError(str(e), ln) from None
                current = []
            else:
                current.append(tok)
    if num_vars is None:
        raise DimacsParseError("missing 'p cnf' header", 1)
    if current:
        raise DimacsParseError("last clause missing 0 terminator", ln)
    if len(clauses) != num_clauses:
        raise DimacsParseError(
            f"header declares {num_clauses} clauses, found {len(clauses)}", header_line or 1
        )
    return CnfFormula(num_vars, tuple(clauses))


def write_dimacs(formula: CnfFormula) -> str:
    lines = [f"p cnf {formula.num_vars} {len(formula.clauses)}"]
    for clause in formula.clauses:
        lines.append(" ".join(str(lit) for lit in clause) + " 0")
    return "\n".join(lines) + "\n"
