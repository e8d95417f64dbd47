"""And-Inverter Graph data model: construction, validation, simulation, I/O.

Circuits are single-output DAGs over three node kinds (input, AND, NOT).
All functions here are pure; a Circuit is immutable after construction.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class NodeKind(Enum):
    INPUT = "I"
    AND = "A"
    NOT = "N"

    @property
    def arity(self) -> int:
        return {NodeKind.INPUT: 0, NodeKind.AND: 2, NodeKind.NOT: 1}[self]

    @property
    def one_hot_index(self) -> int:
        return {NodeKind.INPUT: 0, NodeKind.AND: 1, NodeKind.NOT: 2}[self]


class CircuitError(Exception):
    pass


class CircuitParseError(CircuitError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Node:
    kind: NodeKind
    preds: tuple[int, ...]


@dataclass(frozen=True)
class Circuit:
    """Single-output AIG. Node ids are positions in `nodes`."""

    nodes: tuple[Node, ...]
    output: int
    _succs: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        succs: list[list[int]] = [[] for _ in self.nodes]
        for i, node in enumerate(self.nodes):
            for p in node.preds:
                if 0 <= p < len(self.nodes):
                    succs[p].append(i)
        object.__setattr__(self, "_succs", tuple(tuple(s) for s in succs))

    def __len__(self) -> int:
        return len(self.nodes)

    def successors(self, node_id: int) -> tuple[int, ...]:
        return self._succs[node_id]

    @property
    def inputs(self) -> tuple[int, ...]:
        return tuple(i for i, n in enumerate(self.nodes) if n.kind is NodeKind.INPUT)

    @property
    def num_gates(self) -> int:
        return sum(1 for n in self.nodes if n.kind is not NodeKind.INPUT)


# An Assignment is a dict mapping input node id -> 0/1.
Assignment = dict


def validate(circuit: Circuit) -> str | None:
    """Check all Circuit invariants; return None if ok, else a description
    naming the first violated invariant and the offending node."""
    n = len(circuit.nodes)
    if n == 0:
        return "empty: circuit has no nodes"
    if not (0 <= circuit.output < n):
        return f"output: node {circuit.output} does not exist"
    for i, node in enumerate(circuit.nodes):
        if len(node.preds) != node.kind.arity:
            return (
                f"arity: node {i} ({node.kind.value}) has {len(node.preds)} "
                f"predecessors, expected {node.kind.arity}"
            )
        for p in node.preds:
            if not (0 <= p < n):
                return f"dangling: node {i} references missing node {p}"
    # Acyclicity via Kahn's algorithm.
    indeg = [len(node.preds) for node in circuit.nodes]
    ready = [i for i, d in enumerate(indeg) if d == 0]
    seen = 0
    while ready:
        v = ready.pop()
        seen += 1
        for s in circuit.successors(v):
            indeg[s] -= 1
            if indeg[s] == 0:
                ready.append(s)
    if seen != n:
        cyclic = next(i for i, d in enumerate(indeg) if d > 0)
        return f"cycle: node {cyclic} lies on a cycle"
    sinks = [i for i in range(n) if not circuit.successors(i)]
    if sinks != [circuit.output]:
        extra = next(s for s in sinks if s != circuit.output)
        return f"sink: node {extra} has no successors but is not the output"
    # Every node must feed the output (reverse reachability).
    reach = set()
    stack = [circuit.output]
    while stack:
        v = stack.pop()
        if v in reach:
            continue
        reach.add(v)
        stack.extend(circuit.nodes[v].preds)
    if len(reach) != n:
        dead = next(i for i in range(n) if i not in reach)
        return f"dead: node {dead} is not reachable from the output"
    return None


def check_valid(circuit: Circuit) -> Circuit:
    violation = validate(circuit)
    if violation is not None:
        raise CircuitError(violation)
    return circuit


def topological_order(circuit: Circuit) -> list[int]:
    """Node ids with every node after its predecessors; ties broken by
    ascending node id, so the order is deterministic."""
    indeg = [len(node.preds) for node in circuit.nodes]
    heap = [i for i, d in enumerate(indeg) if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        v = heapq.heappop(heap)
        order.append(v)
        for s in circuit.successors(v):
            indeg[s] -= 1
            if indeg[s] == 0:
                heapq.heappush(heap, s)
    if len(order) != len(circuit.nodes):
        raise CircuitError("cycle: no topological order exists")
    return order


def evaluate(circuit: Circuit, assignment: Assignment) -> int:
    """Exact simulation; returns the output bit."""
    inputs = set(circuit.inputs)
    if set(assignment) != inputs:
        missing = inputs - set(assignment)
        extra = set(assignment) - inputs
        raise CircuitError(
            f"assignment domain mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
        )
    value: dict[int, int] = {}
    for v in topological_order(circuit):
        node = circuit.nodes[v]
        if node.kind is NodeKind.INPUT:
            value[v] = int(assignment[v]) & 1
        elif node.kind is NodeKind.AND:
            value[v] = value[node.preds[0]] & value[node.preds[1]]
        else:
            value[v] = 1 - value[node.preds[0]]
    return value[circuit.output]


def truth_table(circuit: Circuit) -> np.ndarray:
    """Output bit for every input assignment, indexed by the integer whose
    bit j is the value of the j-th input (ascending input node id).
    Vectorized over all 2^i assignments; inputs capped at 20."""
    inputs = circuit.inputs
    if len(inputs) > 20:
        raise CircuitError(f"too many inputs for enumeration: {len(inputs)}")
    size = 1 << len(inputs)
    bit_of = {v: j for j, v in enumerate(inputs)}
    idx = np.arange(size, dtype=np.uint32)
    value: dict[int, np.ndarray] = {}
    for v in topological_order(circuit):
        node = circuit.nodes[v]
        if node.kind is NodeKind.INPUT:
            value[v] = ((idx >> bit_of[v]) & 1).astype(bool)
        elif node.kind is NodeKind.AND:
            value[v] = value[node.preds[0]] & value[node.preds[1]]
        else:
            value[v] = ~value[node.preds[0]]
    return value[circuit.output]


def semantic_symmetric_input_pairs(circuit: Circuit) -> set[tuple[int, int]]:
    """All unordered input pairs (a, b) such that swapping the values of a
    and b leaves the output unchanged for every full assignment."""
    inputs = circuit.inputs
    if len(inputs) > 20:
        raise CircuitError(f"too many inputs for symmetry enumeration: {len(inputs)}")
    table = truth_table(circuit)
    idx = np.arange(len(table), dtype=np.uint32)
    pairs = set()
    for j in range(len(inputs)):
        for k in range(j + 1, len(inputs)):
            bj = (idx >> j) & 1
            bk = (idx >> k) & 1
            swapped = idx ^ ((bj ^ bk) * ((1 << j) | (1 << k))).astype(np.uint32)
            if np.array_equal(table, table[swapped]):
                pairs.add((inputs[j], inputs[k]))
    return pairs


def write_circuit(circuit: Circuit) -> str:
    lines = [f"circuit {len(circuit.nodes)} {len(circuit.inputs)}"]
    for i, node in enumerate(circuit.nodes):
        parts = [str(i), node.kind.value] + [str(p) for p in node.preds]
        lines.append(" ".join(parts))
    lines.append(f"output {circuit.output}")
    return "\n".join(lines) + "\n"


def read_circuit(text: str) -> Circuit:
    lines = text.splitlines()
    records = [
        (ln, raw.strip())
        for ln, raw in enumerate(lines, start=1)
        if raw.strip() and not raw.strip().startswith("#")
    ]
    if not records:
        raise CircuitParseError("empty circuit file", 1)
    ln, header = records[0]
    fields = header.split()
    if len(fields) != 3 or fields[0] != "circuit":
        raise CircuitParseError(f"bad header {header!r}", ln)
    try:
        num_nodes, num_inputs = int(fields[1]), int(fields[2])
    except ValueError:
        raise CircuitParseError(f"bad header counts {header!r}", ln) from None
    if num_nodes < 1:
        raise CircuitParseError("empty node list", ln)
    body, tail = records[1:-1], records[-1]
    if len(body) != num_nodes:
        raise CircuitParseError(
            f"header declares {num_nodes} nodes, found {len(body)}", ln
        )
    kinds = {k.value: k for k in NodeKind}
    nodes: list[Node] = []
    for expect_id, (ln, line) in enumerate(body):
        fields = line.split()
        if len(fields) < 2:
            raise CircuitParseError(f"bad node line {line!r}", ln)
        try:
            node_id = int(fields[0])
            preds = tuple(int(f) for f in fields[2:])
        except ValueError:
            raise CircuitParseError(f"bad node line {line!r}", ln) from None
        if node_id != expect_id:
            raise CircuitParseError(
                f"node ids must be 0-based and strictly increasing, got {node_id}", ln
            )
        kind = kinds.get(fields[1])
        if kind is None:
            raise CircuitParseError(f"unknown node kind {fields[1]!r}", ln)
        if len(preds) != kind.arity:
            raise CircuitParseError(
                f"node {node_id} ({kind.value}) has {len(preds)} predecessors, "
                f"expected {kind.arity}",
                ln,
            )
        for p in preds:
            if not (0 <= p < node_id):
                raise CircuitParseError(
                    f"predecessor {p} must precede node {node_id}", ln
                )
        nodes.append(Node(kind, preds))
    ln, line = tail
    fields = line.split()
    if len(fields) != 2 or fields[0] != "output":
        raise CircuitParseError(f"missing output line, got {line!r}", ln)
    try:
        output = int(fields[1])
    except ValueError:
        raise CircuitParseError(f"bad output id {fields[1]!r}", ln) from None
    if not (0 <= output < num_nodes):
        raise CircuitParseError(f"output {output} does not exist", ln)
    circuit = Circuit(tuple(nodes), output)
    if len(circuit.inputs) != num_inputs:
        raise CircuitParseError(
            f"header declares {num_inputs} inputs, found {len(circuit.inputs)}", records[0][0]
        )
    return circuit


class CircuitBuilder:
    """Incremental construction helper; every added node gets the next id."""

    def __init__(self):
        self.nodes: list[Node] = []

    def input(self) -> int:
        return self._add(NodeKind.INPUT, ())

    def and_(self, a: int, b: int) -> int:
        return self._add(NodeKind.AND, (a, b))

    def not_(self, a: int) -> int:
        return self._add(NodeKind.NOT, (a,))

    def _add(self, kind: NodeKind, preds: tuple[int, ...]) -> int:
        self.nodes.append(Node(kind, preds))
        return len(self.nodes) - 1

    @property
    def num_gates(self) -> int:
        return sum(1 for n in self.nodes if n.kind is not NodeKind.INPUT)

    def build(self, output: int) -> Circuit:
        return check_valid(Circuit(tuple(self.nodes), output))


def xor_circuit() -> Circuit:
    """XOR over two inputs as an AIG: x^y = (x|y) & ~(x&y), with the OR
    realized by De Morgan. 2 inputs, 3 AND nodes, 4 NOT nodes."""
    b = CircuitBuilder()
    x, y = b.input(), b.input()
    both = b.and_(x, y)
    not_both = b.not_(both)
    nx, ny = b.not_(x), b.not_(y)
    neither = b.and_(nx, ny)
    either = b.not_(neither)
    return b.build(b.and_(not_both, either))
