"""Dataset generators: the hand-built symmetric circuit suite, random
clause-until-unsat CNF pairs with a one-literal-flip satisfiable twin, and
large random AIGs. Every emitted instance carries an oracle-verified label.

Generators are pure functions of (parameters, seed): per-instance RNG
streams are derived from a master seed by a counter-based scheme.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    Circuit,
    CircuitBuilder,
    CircuitError,
    evaluate,
    read_circuit,
    write_circuit,
)
from .cnf import CnfFormula, cnf_to_circuit, tseitin
from .oracle import dpll_solve


class DatagenError(Exception):
    pass


def derived_rng(seed: int, *path: int) -> np.random.Generator:
    """Deterministic child stream: master seed plus a counter path."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))


@dataclass(frozen=True)
class LabeledInstance:
    circuit: Circuit
    label: dict[int, int]  # input node id -> bit
    origin: str  # symmetric | sr | aig
    params: dict = field(default_factory=dict)

    def verify(self) -> None:
        if evaluate(self.circuit, self.label) != 1:
            raise DatagenError(
                f"label does not satisfy the circuit (origin={self.origin}, "
                f"params={self.params})"
            )


@dataclass(frozen=True)
class SrPair:
    sat: CnfFormula
    unsat: CnfFormula
    flipped: tuple[int, int]  # (clause index, literal as it appears in `sat`)


# ---------------------------------------------------------------------------
# Symmetric suite: 10 circuits, <= 3 inputs, each containing a pair of
# semantically symmetric inputs that must take distinct values in every
# satisfying assignment. All are XOR cores (possibly under extra gating),
# built in structurally mirrored form so the two inputs are exchangeable by
# a graph automorphism.


def _xor_conjunctive(b: CircuitBuilder, x: int, y: int) -> int:
    """x ^ y as ~(x & y) & ~(~x & ~y)."""
    not_both = b.not_(b.and_(x, y))
    either = b.not_(b.and_(b.not_(x), b.not_(y)))
    return b.and_(not_both, either)


def _xor_disjunctive(b: CircuitBuilder, x: int, y: int) -> int:
    """x ^ y as ~(~(x & ~y) & ~(~x & y))."""
    left = b.not_(b.and_(x, b.not_(y)))
    right = b.not_(b.and_(b.not_(x), y))
    return b.not_(b.and_(left, right))


def _suite_circuits() -> list[tuple[Circuit, tuple[int, int]]]:
    circuits = []

    def finish(b: CircuitBuilder, out: int, pair=(0, 1)):
        circuits.append((b.build(out), pair))

    # 1: x ^ y, conjunctive form.
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    finish(b, _xor_conjunctive(b, x, y))
    # 2: x ^ y, disjunctive form.
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    finish(b, _xor_disjunctive(b, x, y))
    # 3: (x ^ y) & z.
    b = CircuitBuilder()
    x, y, z = b.input(), b.input(), b.input()
    finish(b, b.and_(_xor_conjunctive(b, x, y), z))
    # 4: (x ^ y) & ~z.
    b = CircuitBuilder()
    x, y, z = b.input(), b.input(), b.input()
    finish(b, b.and_(_xor_conjunctive(b, x, y), b.not_(z)))
    # 5: z & (x ^ y), disjunctive XOR, z listed first.
    b = CircuitBuilder()
    z, x, y = b.input(), b.input(), b.input()
    finish(b, b.and_(z, _xor_disjunctive(b, x, y)), pair=(1, 2))
    # 6: (x ^ y) & (x | y) -- redundant gating, same function as XOR.
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    xor = _xor_conjunctive(b, x, y)
    either = b.not_(b.and_(b.not_(x), b.not_(y)))
    finish(b, b.and_(xor, either))
    # 7: (x ^ y) & ~(x & y).
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    xor = _xor_disjunctive(b, x, y)
    finish(b, b.and_(xor, b.not_(b.and_(x, y))))
    # 8: ~~(x ^ y), double-negation wrapper.
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    finish(b, b.not_(b.not_(_xor_conjunctive(b, x, y))))
    # 9: (x ^ y) & (z | ~z), always-true third input anchor.
    b = CircuitBuilder()
    x, y, z = b.input(), b.input(), b.input()
    tautology = b.not_(b.and_(z, b.not_(z)))
    finish(b, b.and_(_xor_conjunctive(b, x, y), tautology))
    # 10: (x ^ y) & ~z, disjunctive form.
    b = CircuitBuilder()
    x, y, z = b.input(), b.input(), b.input()
    finish(b, b.and_(_xor_disjunctive(b, x, y), b.not_(z)))
    return circuits


def oracle_label(circuit: Circuit) -> dict[int, int]:
    """Satisfying input assignment from the deterministic DPLL oracle on the
    Tseitin encoding; raises if the circuit is unsatisfiable."""
    formula, tmap = tseitin(circuit)
    result = dpll_solve(formula)
    if not result.sat:
        raise DatagenError("circuit is unsatisfiable, no label exists")
    return tmap.inputs_from_model(result.model)


def symmetric_suite() -> list[LabeledInstance]:
    """The fixed 10-circuit suite. Each instance's params record the
    designated symmetric input pair."""
    instances = []
    for idx, (circuit, pair) in enumerate(_suite_circuits()):
        label = oracle_label(circuit)
        instance = LabeledInstance(
            circuit,
            label,
            "symmetric",
            {"n": len(circuit.inputs), "seed": 0, "index": idx, "pair": pair},
        )
        instance.verify()
        instances.append(instance)
    return instances


# ---------------------------------------------------------------------------
# Random CNF pairs: sample clauses until the formula first becomes
# unsatisfiable, then flip one literal of the final clause to obtain the
# satisfiable member. Clause length is 1 + Bernoulli(0.7) + Geometric(0.4),
# capped at n; variables sampled without replacement, each negated with
# probability 1/2.

SR_BERNOULLI_P = 0.7
SR_GEOMETRIC_P = 0.4


def _sample_clause(rng: np.random.Generator, n: int) -> list[int]:
    k = int(1 + rng.binomial(1, SR_BERNOULLI_P) + rng.geometric(SR_GEOMETRIC_P))
    k = min(k, n)
    variables = rng.choice(np.arange(1, n + 1), size=k, replace=False)
    signs = rng.integers(0, 2, size=k)
    return [int(v) if s else -int(v) for v, s in zip(variables, signs)]


def gen_sr_pair(n: int, seed: int) -> SrPair:
    if n < 2:
        raise DatagenError(f"need at least 2 variables, got {n}")
    rng = derived_rng(seed)
    clauses: list[list[int]] = []
    while True:
        clause = _sample_clause(rng, n)
        clauses.append(clause)
        if not dpll_solve(CnfFormula.from_clauses(n, clauses)).sat:
            break
    flip_pos = int(rng.integers(len(clauses[-1])))
    flipped_lit = -clauses[-1][flip_pos]
    sat_final = list(clauses[-1])
    sat_final[flip_pos] = flipped_lit
    unsat = CnfFormula.from_clauses(n, clauses)
    sat = CnfFormula.from_clauses(n, clauses[:-1] + [sat_final])
    return SrPair(sat, unsat, (len(clauses) - 1, flipped_lit))


def sr_instance(n: int, seed: int) -> LabeledInstance:
    """Satisfiable member of a generated pair, converted to circuit form and
    labeled by the oracle's model on the original variables."""
    pair = gen_sr_pair(n, seed)
    circuit = cnf_to_circuit(pair.sat)
    result = dpll_solve(pair.sat)
    label = {v - 1: result.model[v] for v in range(1, n + 1)}
    instance = LabeledInstance(circuit, label, "sr", {"n": n, "seed": seed})
    instance.verify()
    return instance


# ---------------------------------------------------------------------------
# Random AIGs: layered growth where each AND consumes a pending sink (so the
# finished graph has no dead nodes) and any earlier node; new gates are
# wrapped by NOT with probability 1/2. Kept only if the oracle finds a
# satisfying input assignment.


def _grow_random_aig(rng: np.random.Generator, n_inputs: int, target_gates: int) -> Circuit:
    b = CircuitBuilder()
    for _ in range(n_inputs):
        b.input()
    sinks = set(range(n_inputs))

    def add_gate():
        pool = sorted(sinks)
        if len(b.nodes) < 2:
            src = pool[int(rng.integers(len(pool)))]
            sinks.discard(src)
            sinks.add(b.not_(src))
            return
        a = pool[int(rng.integers(len(pool)))]
        choices = [i for i in range(len(b.nodes)) if i != a]
        c = choices[int(rng.integers(len(choices)))]
        node = b.and_(a, c)
        sinks.difference_update((a, c))
        if rng.integers(0, 2):
            node = b.not_(node)
        sinks.add(node)

    while b.num_gates + max(0, len(sinks) - 1) < target_gates:
        add_gate()
    chain = sorted(sinks)
    out = chain[0]
    for s in chain[1:]:
        out = b.and_(out, s)
    return b.build(out)


def gen_random_aig(
    n_inputs: int, target_gates: int, seed: int, max_attempts: int = 100
) -> tuple[Circuit, dict[int, int]]:
    """Random satisfiable AIG with ~target_gates gates, plus its oracle
    label. Raises after max_attempts consecutive unsatisfiable draws."""
    if n_inputs < 1 or target_gates < 1:
        raise DatagenError("n_inputs and target_gates must be >= 1")
    for attempt in range(max_attempts):
        rng = derived_rng(seed, attempt)
        circuit = _grow_random_aig(rng, n_inputs, target_gates)
        formula, tmap = tseitin(circuit)
        result = dpll_solve(formula)
        if result.sat:
            return circuit, tmap.inputs_from_model(result.model)
    raise DatagenError(
        f"unsatisfiable region: {max_attempts} consecutive unsatisfiable draws"
    )


def aig_instance(n_inputs: int, target_gates: int, seed: int) -> LabeledInstance:
    circuit, label = gen_random_aig(n_inputs, target_gates, seed)
    instance = LabeledInstance(
        circuit, label, "aig", {"n": n_inputs, "seed": seed, "target_gates": target_gates}
    )
    instance.verify()
    return instance


# ---------------------------------------------------------------------------
# Manifests: one JSON record per line referencing a circuit file relative to
# the manifest, plus label bits in ascending input order. Labels are
# re-verified on load so a corrupt dataset fails fast.


def write_manifest(instances: list[LabeledInstance], path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    stem = os.path.splitext(os.path.basename(path))[0]
    with open(path, "w") as manifest:
        for idx, instance in enumerate(instances):
            instance.verify()
            circuit_file = f"{stem}_{idx:06d}.cir"
            with open(os.path.join(directory, circuit_file), "w") as f:
                f.write(write_circuit(instance.circuit))
            label_bits = "".join(
                str(instance.label[v]) for v in instance.circuit.inputs
            )
            record = {
                "circuit": circuit_file,
                "label": label_bits,
                "origin": instance.origin,
                "n": instance.params.get("n"),
                "seed": instance.params.get("seed"),
            }
            manifest.write(json.dumps(record) + "\n")


def read_manifest(path: str) -> list[LabeledInstance]:
    directory = os.path.dirname(os.path.abspath(path))
    instances = []
    with open(path) as manifest:
        for ln, line in enumerate(manifest, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise DatagenError(f"{path}:{ln}: bad record: {e}") from None
            with open(os.path.join(directory, record["circuit"])) as f:
                circuit = read_circuit(f.read())
            bits = record["label"]
            if len(bits) != len(circuit.inputs):
                raise DatagenError(f"{path}:{ln}: label length mismatch")
            label = {v: int(bit) for v, bit in zip(circuit.inputs, bits)}
            instance = LabeledInstance(
                circuit,
                label,
                record.get("origin", "unknown"),
                {"n": record.get("n"), "seed": record.get("seed")},
            )
            try:
                instance.verify()
            except DatagenError:
                raise DatagenError(
                    f"{path}:{ln}: label fails re-verification (corrupt dataset)"
                ) from None
            instances.append(instance)
    return instances
