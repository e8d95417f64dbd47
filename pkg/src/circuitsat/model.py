"""The Circuit-SAT network: message passing over the circuit DAG (one
forward pass in topological order plus one backward pass per iteration,
with three GRUs and a learnable message MLP) followed by either the
sequential bidirectional RNN assignment decoder or, for the ablation, a
per-node concurrent MLP decoder.

Nodes at the same DAG depth are updated as one batched cell application;
this is equivalent to the per-node sequential update (a node only reads
neighbors at strictly smaller depth) and keeps the tape short.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import GruParams, LstmParams, ParamStore, Tape, Tensor
from .circuit import Circuit, NodeKind, topological_order

TYPE_DIM = 3  # one-hot over {input, AND, NOT}


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class ModelConfig:
    hidden_dim: int = 64
    iterations: int = 10
    decoder_kind: str = "lstm"  # lstm | gru
    decoder_dim: int = 10
    aggregator: str = "sum"  # sum | mean
    message_hidden: int | None = None  # defaults to hidden_dim
    threshold: float = 0.5
    ablation_concurrent: bool = False
    swap_gru_roles: bool = False

    def __post_init__(self):
        if self.hidden_dim < 1 or self.iterations < 1 or self.decoder_dim < 1:
            raise ModelError("hidden_dim, iterations and decoder_dim must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ModelError(f"threshold must be in (0,1), got {self.threshold}")
        if self.decoder_kind not in ("lstm", "gru"):
            raise ModelError(f"unknown decoder kind {self.decoder_kind!r}")
        if self.aggregator not in ("sum", "mean"):
            raise ModelError(f"unknown aggregator {self.aggregator!r}")

    @property
    def msg_hidden(self) -> int:
        return self.message_hidden if self.message_hidden is not None else self.hidden_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ModelParams:
    store: ParamStore
    gru_init: GruParams
    gru_f: GruParams
    gru_b: GruParams
    msg: tuple[Tensor, Tensor, Tensor, Tensor]
    decoder_fwd: object | None = None
    decoder_bwd: object | None = None
    selector: tuple[Tensor, Tensor, Tensor, Tensor] | None = None
    concurrent: tuple[Tensor, Tensor, Tensor, Tensor] | None = None


def _gru(store: ParamStore, prefix: str, in_dim: int, d: int, rng) -> GruParams:
    tensors = []
    for gate in ("z", "r", "c"):
        tensors.append(store.uniform(f"{prefix}.w{gate}", d, in_dim, rng))
        tensors.append(store.uniform(f"{prefix}.u{gate}", d, d, rng))
        tensors.append(store.zeros(f"{prefix}.b{gate}", d))
    return GruParams(*tensors)


def _lstm(store: ParamStore, prefix: str, in_dim: int, d: int, rng) -> LstmParams:
    tensors = []
    for gate in ("i", "f", "g", "o"):
        tensors.append(store.uniform(f"{prefix}.w{gate}", d, in_dim, rng))
        tensors.append(store.uniform(f"{prefix}.u{gate}", d, d, rng))
        tensors.append(store.zeros(f"{prefix}.b{gate}", d))
    return LstmParams(*tensors)


def _mlp(store: ParamStore, prefix: str, in_dim: int, hidden: int, out_dim: int, rng):
    return (
        store.uniform(f"{prefix}.w1", hidden, in_dim, rng),
        store.zeros(f"{prefix}.b1", hidden),
        store.uniform(f"{prefix}.w2", out_dim, hidden, rng),
        store.zeros(f"{prefix}.b2", out_dim),
    )


def init_params(config: ModelConfig, seed: int) -> ModelParams:
    """All learnable parameters, created in a fixed order from one seeded
    stream so initialization is reproducible."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xA11,)))
    store = ParamStore()
    d = config.hidden_dim
    init_in = d if config.swap_gru_roles else TYPE_DIM
    gru_init = _gru(store, "embed.gru_init", init_in, d, rng)
    gru_f = _gru(store, "embed.gru_f", d, d, rng)
    gru_b = _gru(store, "embed.gru_b", d, d, rng)
    msg = _mlp(store, "embed.msg", d, config.msg_hidden, d, rng)
    params = ModelParams(store, gru_init, gru_f, gru_b, msg)
    if config.ablation_concurrent:
        params.concurrent = _mlp(
            store, "decode.concurrent", d, 2 * config.decoder_dim, 1, rng
        )
    else:
        cell = _lstm if config.decoder_kind == "lstm" else _gru
        params.decoder_fwd = cell(store, "decode.fwd", d, config.decoder_dim, rng)
        params.decoder_bwd = cell(store, "decode.bwd", d, config.decoder_dim, rng)
        params.selector = _mlp(
            store,
            "decode.selector",
            2 * config.decoder_dim,
            2 * config.decoder_dim,
            1,
            rng,
        )
    return params


def param_count(params: ModelParams) -> int:
    return sum(t.data.size for t in params.store.params.values())


# ---------------------------------------------------------------------------
# Level plan: group nodes by DAG depth per direction and precompute the
# gather routes for messages and state regrouping.


class _DirectionPlan:
    def __init__(self, order: list[int], neighbors_of, num_nodes: int):
        self.num_nodes = num_nodes
        depth = [0] * num_nodes
        for v in order:
            for n in neighbors_of(v):
                depth[v] = max(depth[v], depth[n] + 1)
        by_level: dict[int, list[int]] = {}
        for v in sorted(range(num_nodes)):
            by_level.setdefault(depth[v], []).append(v)
        self.levels: list[list[int]] = [by_level[k] for k in sorted(by_level)]
        pos = {}
        for li, nodes in enumerate(self.levels):
            for col, v in enumerate(nodes):
                pos[v] = (li, col)
        # Message routes per level: neighbor messages live in earlier levels
        # of the same pass.
        self.message_routes: list[list[tuple[int, np.ndarray, np.ndarray]]] = []
        self.neighbor_counts: list[np.ndarray] = []
        for nodes in self.levels:
            per_src: dict[int, tuple[list[int], list[int]]] = {}
            counts = np.zeros(len(nodes))
            for j, v in enumerate(nodes):
                neighbors = neighbors_of(v)
                counts[j] = max(1, len(neighbors))
                for n in neighbors:
                    sl, sc = pos[n]
                    per_src.setdefault(sl, ([], []))[0].append(sc)
                    per_src[sl][1].append(j)
            self.message_routes.append(
                [
                    (sl, np.array(cols), np.array(dsts))
                    for sl, (cols, dsts) in sorted(per_src.items())
                ]
            )
            self.neighbor_counts.append(counts)
        # Scatter: level tensors back into the full node-order state matrix.
        self.scatter_routes = [
            (li, np.arange(len(nodes)), np.array(nodes))
            for li, nodes in enumerate(self.levels)
        ]
        self.level_nodes = [np.array(nodes) for nodes in self.levels]


class EmbedPlan:
    def __init__(self, circuit: Circuit):
        order = topological_order(circuit)
        n = len(circuit.nodes)
        self.num_nodes = n
        self.forward = _DirectionPlan(order, lambda v: circuit.nodes[v].preds, n)
        self.backward = _DirectionPlan(
            list(reversed(order)), circuit.successors, n
        )
        onehot = np.zeros((TYPE_DIM, n))
        for v, node in enumerate(circuit.nodes):
            onehot[node.kind.one_hot_index, v] = 1.0
        self.type_onehot = onehot


def _run_pass(
    tape: Tape,
    plan: _DirectionPlan,
    prev_states: Tensor,
    cell: GruParams,
    params: ModelParams,
    config: ModelConfig,
    input_override: Tensor | None = None,
) -> Tensor:
    """One directional sweep. prev_states (or input_override, first pass
    only) supplies p_v; neighbor messages come from this pass's own earlier
    levels."""
    d = config.hidden_dim
    msg_w1, msg_b1, msg_w2, msg_b2 = params.msg
    level_states: list[Tensor] = []
    level_msgs: list[Tensor] = []
    source = input_override if input_override is not None else prev_states
    for li, nodes in enumerate(plan.level_nodes):
        cols = np.arange(len(nodes))
        p_v = tape.gather_sum([source], [(0, nodes, cols)], len(nodes), unique=True)
        if plan.message_routes[li]:
            agg = tape.gather_sum(level_msgs, plan.message_routes[li], len(nodes))
            if config.aggregator == "mean":
                inv = Tensor(np.tile(1.0 / plan.neighbor_counts[li], (d, 1)))
                agg = tape.mul(agg, inv)
        else:
            agg = Tensor(np.zeros((d, len(nodes))))
        if config.swap_gru_roles:
            state = tape.gru_cell(agg, p_v, cell)
        else:
            state = tape.gru_cell(p_v, agg, cell)
        level_states.append(state)
        level_msgs.append(tape.mlp2_tanh(state, msg_w1, msg_b1, msg_w2, msg_b2))
    return tape.gather_sum(
        level_states, plan.scatter_routes, plan.num_nodes, unique=True
    )


def _pad_types(onehot: np.ndarray, d: int) -> np.ndarray:
    padded = np.zeros((d, onehot.shape[1]))
    padded[:TYPE_DIM, :] = onehot
    return padded


def embed(
    circuit: Circuit,
    params: ModelParams,
    config: ModelConfig,
    tape: Tape,
    trace: list | None = None,
) -> Tensor:
    """Run `iterations` forward+backward sweeps; returns the final node
    state matrix (hidden_dim x num_nodes, columns in node-id order). If
    `trace` is given, the state matrix after every pass is appended to it
    as a plain array."""
    plan = EmbedPlan(circuit)
    d = config.hidden_dim
    if config.swap_gru_roles:
        first_input = Tensor(_pad_types(plan.type_onehot, d))
    else:
        first_input = Tensor(plan.type_onehot)
    states = Tensor(np.zeros((d, plan.num_nodes)))
    for iteration in range(config.iterations):
        if iteration == 0:
            states = _run_pass(
                tape, plan.forward, states, params.gru_init, params, config,
                input_override=first_input,
            )
        else:
            states = _run_pass(
                tape, plan.forward, states, params.gru_f, params, config
            )
        if trace is not None:
            trace.append(states.data.copy())
        states = _run_pass(tape, plan.backward, states, params.gru_b, params, config)
        if trace is not None:
            trace.append(states.data.copy())
    return states


def input_state_sequence(
    circuit: Circuit, states: Tensor, tape: Tape
) -> Tensor:
    """Columns for the circuit input nodes in ascending node-id order."""
    inputs = np.array(circuit.inputs)
    if len(inputs) == 0:
        raise ModelError("circuit has no input nodes")
    return tape.gather_sum(
        [states], [(0, inputs, np.arange(len(inputs)))], len(inputs), unique=True
    )


def _run_decoder_direction(
    tape: Tape, seq: Tensor, cell, config: ModelConfig, positions: list[int]
) -> list[Tensor]:
    dd = config.decoder_dim
    h = Tensor(np.zeros((dd, 1)))
    c = Tensor(np.zeros((dd, 1)))
    outputs: dict[int, Tensor] = {}
    for t in positions:
        x_t = tape.gather_sum(
            [seq], [(0, np.array([t]), np.array([0]))], 1, unique=True
        )
        if config.decoder_kind == "lstm":
            h, c = tape.lstm_cell(x_t, h, c, cell)
        else:
            h = tape.gru_cell(x_t, h, cell)
        outputs[t] = h
    return [outputs[t] for t in sorted(outputs)]


def decode_sequential(
    seq: Tensor, params: ModelParams, config: ModelConfig, tape: Tape
) -> Tensor:
    """Bidirectional recurrent decoding over the input-node state sequence;
    per position the two direction outputs are concatenated and mapped to a
    probability by the selector MLP. Returns a 1 x num_inputs tensor."""
    n = seq.shape[1]
    if n == 0:
        raise ModelError("empty input sequence")
    fwd = _run_decoder_direction(tape, seq, params.decoder_fwd, config, list(range(n)))
    bwd = _run_decoder_direction(
        tape, seq, params.decoder_bwd, config, list(range(n - 1, -1, -1))
    )
    features = tape.concat(
        [tape.concat(fwd, axis=1), tape.concat(bwd, axis=1)], axis=0
    )
    w1, b1, w2, b2 = params.selector
    logits = tape.mlp2_tanh(features, w1, b1, w2, b2)
    return tape.sigmoid(logits)


def decode_concurrent(
    seq: Tensor, params: ModelParams, config: ModelConfig, tape: Tape
) -> Tensor:
    """Ablation decoder: the same MLP applied independently to every input
    state, so equal states provably get equal probabilities."""
    if seq.shape[1] == 0:
        raise ModelError("empty input sequence")
    w1, b1, w2, b2 = params.concurrent
    return tape.sigmoid(tape.mlp2_tanh(seq, w1, b1, w2, b2))


def forward_probs(
    circuit: Circuit,
    params: ModelParams,
    config: ModelConfig,
    tape: Tape,
    trace: list | None = None,
) -> Tensor:
    states = embed(circuit, params, config, tape, trace=trace)
    seq = input_state_sequence(circuit, states, tape)
    if config.ablation_concurrent:
        return decode_concurrent(seq, params, config, tape)
    return decode_sequential(seq, params, config, tape)


def predict_assignment(
    circuit: Circuit, params: ModelParams, config: ModelConfig
) -> tuple[dict[int, int], np.ndarray]:
    """Threshold the decoded probabilities once; always returns a total
    assignment over the circuit's input nodes."""
    tape = Tape()
    probs = forward_probs(circuit, params, config, tape).data.reshape(-1)
    assignment = {
        v: int(p >= config.threshold) for v, p in zip(circuit.inputs, probs)
    }
    return assignment, probs
