"""Minimal reverse-mode automatic differentiation over dense fp64 matrices.

Tensors are always 2-D (vectors are column matrices). Operations are
recorded on an explicit Tape; backward traverses the recorded nodes in
exact reverse construction order, visiting each node once. Recurrent cells
(GRU/LSTM) and the two-layer MLP are fused ops with hand-written backward
passes to keep the per-node Python overhead low; all of them are covered by
the finite-difference checker.
"""

from __future__ import annotations

import struct

import numpy as np


class AutodiffError(Exception):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        elif arr.ndim != 2:
            raise AutodiffError(f"tensors are 2-D, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise AutodiffError(f"item() on non-scalar shape {self.shape}")
        return float(self.data[0, 0])

    def accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise AutodiffError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


class Tape:
    """Operation recorder. Each node is (inputs, outputs, backward_fn);
    backward_fn maps output gradients to input gradients."""

    def __init__(self):
        self.nodes: list[tuple[tuple[Tensor, ...], tuple[Tensor, ...], object]] = []

    def _record(self, inputs, outputs, backward_fn) -> None:
        if any(t.requires_grad for t in inputs):
            for out in outputs:
                out.requires_grad = True
            self.nodes.append((tuple(inputs), tuple(outputs), backward_fn))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/dt into t.grad for every tensor that
        requires_grad. Repeated calls accumulate."""
        if loss.data.shape != (1, 1):
            raise AutodiffError(f"loss must be scalar, got shape {loss.shape}")
        loss.accumulate(np.ones((1, 1)))
        for inputs, outputs, backward_fn in reversed(self.nodes):
            grads_out = [
                out.grad if out.grad is not None else np.zeros_like(out.data)
                for out in outputs
            ]
            grads_in = backward_fn(*grads_out)
            for tensor, grad in zip(inputs, grads_in):
                if grad is not None and tensor.requires_grad:
                    tensor.accumulate(grad)

    # -- elementwise and linear-algebra primitives ------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        # Broadcasting a column bias over columns is allowed.
        if a.shape != b.shape and not (
            a.shape[0] == b.shape[0] and b.shape[1] == 1
        ):
            raise AutodiffError(f"add: shape mismatch {a.shape} vs {b.shape}")
        out = Tensor(a.data + b.data)

        def backward(g):
            gb = g if b.shape == a.shape else g.sum(axis=1, keepdims=True)
            return g, gb

        self._record((a, b), (out,), backward)
        return out

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        _check_same_shape("sub", a, b)
        out = Tensor(a.data - b.data)
        self._record((a, b), (out,), lambda g: (g, -g))
        return out

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        _check_same_shape("mul", a, b)
        out = Tensor(a.data * b.data)
        self._record((a, b), (out,), lambda g: (g * b.data, g * a.data))
        return out

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.shape[1] != b.shape[0]:
            raise AutodiffError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
        out = Tensor(a.data @ b.data)
        self._record(
            (a, b), (out,), lambda g: (g @ b.data.T, a.data.T @ g)
        )
        return out

    # Matrix-vector product is matmul with a column vector.
    matvec = matmul

    def scalar_mul(self, a: Tensor, s: float) -> Tensor:
        out = Tensor(a.data * s)
        self._record((a,), (out,), lambda g: (g * s,))
        return out

    def concat(self, tensors: list[Tensor], axis: int = 0) -> Tensor:
        if axis not in (0, 1):
            raise AutodiffError(f"concat: axis must be 0 or 1, got {axis}")
        out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def backward(g):
            if axis == 0:
                return tuple(g[offsets[i] : offsets[i + 1], :] for i in range(len(sizes)))
            return tuple(g[:, offsets[i] : offsets[i + 1]] for i in range(len(sizes)))

        self._record(tuple(tensors), (out,), backward)
        return out

    def sum(self, a: Tensor) -> Tensor:
        out = Tensor(np.array([[a.data.sum()]]))
        self._record((a,), (out,), lambda g: (np.full_like(a.data, g[0, 0]),))
        return out

    def mean(self, a: Tensor) -> Tensor:
        n = a.data.size
        out = Tensor(np.array([[a.data.mean()]]))
        self._record((a,), (out,), lambda g: (np.full_like(a.data, g[0, 0] / n),))
        return out

    def sigmoid(self, a: Tensor) -> Tensor:
        s = _sigmoid(a.data)
        out = Tensor(s)
        self._record((a,), (out,), lambda g: (g * s * (1.0 - s),))
        return out

    def tanh(self, a: Tensor) -> Tensor:
        t = np.tanh(a.data)
        out = Tensor(t)
        self._record((a,), (out,), lambda g: (g * (1.0 - t * t),))
        return out

    def log(self, a: Tensor) -> Tensor:
        out = Tensor(np.log(a.data))
        self._record((a,), (out,), lambda g: (g / a.data,))
        return out

    # -- fused neural building blocks --------------------------------------

    def mlp2_tanh(self, x: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
        """Two-layer perceptron: w2 @ tanh(w1 @ x + b1) + b2."""
        if w1.shape[1] != x.shape[0] or w2.shape[1] != w1.shape[0]:
            raise AutodiffError(
                f"mlp2_tanh: shape mismatch x={x.shape} w1={w1.shape} w2={w2.shape}"
            )
        h = np.tanh(w1.data @ x.data + b1.data)
        out = Tensor(w2.data @ h + b2.data)

        def backward(g):
            dh = (w2.data.T @ g) * (1.0 - h * h)
            return (
                w1.data.T @ dh,
                dh @ x.data.T,
                dh.sum(axis=1, keepdims=True),
                g @ h.T,
                g.sum(axis=1, keepdims=True),
            )

        self._record((x, w1, b1, w2, b2), (out,), backward)
        return out

    def gru_cell(self, x: Tensor, h: Tensor, params: "GruParams") -> Tensor:
        """Standard GRU: update/reset gates, tanh candidate, convex mix
        h' = z*h + (1-z)*c."""
        p = params
        if p.wz.shape[1] != x.shape[0] or p.uz.shape[1] != h.shape[0]:
            raise AutodiffError(
                f"gru_cell: shape mismatch x={x.shape} h={h.shape} "
                f"wz={p.wz.shape} uz={p.uz.shape}"
            )
        xd, hd = x.data, h.data
        z = _sigmoid(p.wz.data @ xd + p.uz.data @ hd + p.bz.data)
        r = _sigmoid(p.wr.data @ xd + p.ur.data @ hd + p.br.data)
        rh = r * hd
        c = np.tanh(p.wc.data @ xd + p.uc.data @ rh + p.bc.data)
        out = Tensor(z * hd + (1.0 - z) * c)

        def backward(g):
            dz = g * (hd - c)
            dc_pre = (g * (1.0 - z)) * (1.0 - c * c)
            dh = g * z
            drh = p.uc.data.T @ dc_pre
            dr_pre = (drh * hd) * r * (1.0 - r)
            dh += drh * r
            dz_pre = dz * z * (1.0 - z)
            dx = p.wc.data.T @ dc_pre + p.wr.data.T @ dr_pre + p.wz.data.T @ dz_pre
            dh += p.ur.data.T @ dr_pre + p.uz.data.T @ dz_pre
            return (
                dx,
                dh,
                dz_pre @ xd.T,
                dz_pre @ hd.T,
                dz_pre.sum(axis=1, keepdims=True),
                dr_pre @ xd.T,
                dr_pre @ hd.T,
                dr_pre.sum(axis=1, keepdims=True),
                dc_pre @ xd.T,
                dc_pre @ rh.T,
                dc_pre.sum(axis=1, keepdims=True),
            )

        self._record((x, h) + p.tensors(), (out,), backward)
        return out

    def lstm_cell(
        self, x: Tensor, h: Tensor, c: Tensor, params: "LstmParams"
    ) -> tuple[Tensor, Tensor]:
        """Standard LSTM with input/forget/cell/output gates."""
        p = params
        if p.wi.shape[1] != x.shape[0] or p.ui.shape[1] != h.shape[0]:
            raise AutodiffError(
                f"lstm_cell: shape mismatch x={x.shape} h={h.shape} "
                f"wi={p.wi.shape} ui={p.ui.shape}"
            )
        xd, hd, cd = x.data, h.data, c.data
        gi = _sigmoid(p.wi.data @ xd + p.ui.data @ hd + p.bi.data)
        gf = _sigmoid(p.wf.data @ xd + p.uf.data @ hd + p.bf.data)
        gg = np.tanh(p.wg.data @ xd + p.ug.data @ hd + p.bg.data)
        go = _sigmoid(p.wo.data @ xd + p.uo.data @ hd + p.bo.data)
        c_new = gf * cd + gi * gg
        tc = np.tanh(c_new)
        h_out = Tensor(go * tc)
        c_out = Tensor(c_new)

        def backward(gh, gc):
            dc_total = gc + gh * go * (1.0 - tc * tc)
            di_pre = (dc_total * gg) * gi * (1.0 - gi)
            df_pre = (dc_total * cd) * gf * (1.0 - gf)
            dg_pre = (dc_total * gi) * (1.0 - gg * gg)
            do_pre = (gh * tc) * go * (1.0 - go)
            dx = (
                p.wi.data.T @ di_pre
                + p.wf.data.T @ df_pre
                + p.wg.data.T @ dg_pre
                + p.wo.data.T @ do_pre
            )
            dh = (
                p.ui.data.T @ di_pre
                + p.uf.data.T @ df_pre
                + p.ug.data.T @ dg_pre
                + p.uo.data.T @ do_pre
            )
            dc = dc_total * gf
            sums = lambda m: m.sum(axis=1, keepdims=True)
            return (
                dx,
                dh,
                dc,
                di_pre @ xd.T, di_pre @ hd.T, sums(di_pre),
                df_pre @ xd.T, df_pre @ hd.T, sums(df_pre),
                dg_pre @ xd.T, dg_pre @ hd.T, sums(dg_pre),
                do_pre @ xd.T, do_pre @ hd.T, sums(do_pre),
            )

        self._record((x, h, c) + p.tensors(), (h_out, c_out), backward)
        return h_out, c_out

    def gather_sum(
        self,
        sources: list[Tensor],
        routes: list[tuple[int, np.ndarray, np.ndarray]],
        out_cols: int,
        unique: bool = False,
    ) -> Tensor:
        """out[:, dst] += src[:, col] over all (source index, cols, dsts)
        routes; duplicate destinations sum. The permutation-invariant
        aggregation and all state regrouping reduce to this one op.
        `unique=True` promises that destination columns never repeat across
        routes and source columns never repeat within a source, enabling a
        faster assignment path."""
        rows = sources[0].shape[0]
        if unique:
            out_data = np.zeros((rows, out_cols))
            for si, src_cols, dst_cols in routes:
                out_data[:, dst_cols] = sources[si].data[:, src_cols]
            out = Tensor(out_data)

            def backward_unique(g):
                grads = [None] * len(sources)
                for si, src_cols, dst_cols in routes:
                    if grads[si] is None:
                        grads[si] = np.zeros_like(sources[si].data)
                    grads[si][:, src_cols] = g[:, dst_cols]
                return tuple(grads)

            self._record(tuple(sources), (out,), backward_unique)
            return out
        acc = np.zeros((out_cols, rows))
        for si, src_cols, dst_cols in routes:
            np.add.at(acc, dst_cols, sources[si].data.T[src_cols])
        out = Tensor(np.ascontiguousarray(acc.T))

        def backward(g):
            gt = g.T
            grads = [None] * len(sources)
            for si, src_cols, dst_cols in routes:
                if grads[si] is None:
                    grads[si] = np.zeros((sources[si].shape[1], rows))
                np.add.at(grads[si], src_cols, gt[dst_cols])
            return tuple(
                None if gr is None else np.ascontiguousarray(gr.T) for gr in grads
            )

        self._record(tuple(sources), (out,), backward)
        return out

    def bce_sum(self, probs: Tensor, targets: np.ndarray) -> Tensor:
        """Sum of -[g*log(p) + (1-g)*log(1-p)] with exact 0/1 targets;
        branch-selected so the zero-weighted side never produces NaN."""
        t = np.asarray(targets, dtype=np.float64).reshape(probs.shape)
        if not np.all((t == 0.0) | (t == 1.0)):
            raise AutodiffError("bce_sum: targets must be exactly 0 or 1")
        p = probs.data
        with np.errstate(divide="ignore"):
            terms = np.where(t == 1.0, -np.log(p), -np.log1p(-p))
        out = Tensor(np.array([[terms.sum()]]))

        def backward(g):
            with np.errstate(divide="ignore"):
                dp = np.where(t == 1.0, -1.0 / p, 1.0 / (1.0 - p))
            return (g[0, 0] * dp,)

        self._record((probs,), (out,), backward)
        return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# Parameter containers.


class GruParams:
    NAMES = ("wz", "uz", "bz", "wr", "ur", "br", "wc", "uc", "bc")

    def __init__(self, wz, uz, bz, wr, ur, br, wc, uc, bc):
        self.wz, self.uz, self.bz = wz, uz, bz
        self.wr, self.ur, self.br = wr, ur, br
        self.wc, self.uc, self.bc = wc, uc, bc

    def tensors(self) -> tuple[Tensor, ...]:
        return tuple(getattr(self, n) for n in self.NAMES)


class LstmParams:
    NAMES = ("wi", "ui", "bi", "wf", "uf", "bf", "wg", "ug", "bg", "wo", "uo", "bo")

    def __init__(self, *tensors):
        for name, tensor in zip(self.NAMES, tensors, strict=True):
            setattr(self, name, tensor)

    def tensors(self) -> tuple[Tensor, ...]:
        return tuple(getattr(self, n) for n in self.NAMES)


class ParamStore:
    """Named learnable tensors plus per-parameter Adam moments."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.moment1: dict[str, np.ndarray] = {}
        self.moment2: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, tensor: Tensor) -> Tensor:
        if name in self.params:
            raise AutodiffError(f"duplicate parameter name {name!r}")
        tensor.requires_grad = True
        self.params[name] = tensor
        self.moment1[name] = np.zeros_like(tensor.data)
        self.moment2[name] = np.zeros_like(tensor.data)
        return tensor

    def uniform(self, name: str, rows: int, cols: int, rng: np.random.Generator,
                fan_in: int | None = None) -> Tensor:
        """Weight matrix uniform in +-sqrt(3/fan_in), i.e. unit output
        variance for unit-variance inputs; fan_in defaults to cols. The
        network is effectively hundreds of layers deep (one cell application
        per DAG level per pass), so a variance-preserving scale is essential:
        smaller inits shrink the signal geometrically and the final states
        collapse to zero within a few passes."""
        bound = np.sqrt(3.0 / (fan_in if fan_in is not None else cols))
        return self.add(name, Tensor(rng.uniform(-bound, bound, size=(rows, cols))))

    def zeros(self, name: str, rows: int, cols: int = 1) -> Tensor:
        return self.add(name, Tensor(np.zeros((rows, cols))))

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, tensor in self.params.items():
            if name not in values:
                raise AutodiffError(f"checkpoint missing parameter {name!r}")
            if values[name].shape != tensor.data.shape:
                raise AutodiffError(
                    f"checkpoint shape mismatch for {name!r}: "
                    f"{values[name].shape} vs {tensor.data.shape}"
                )
            tensor.data = values[name].astype(np.float64).copy()


def adam_step(
    store: ParamStore,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    allow_unused: bool = False,
) -> None:
    """One Adam update with bias correction; gradients are cleared after.
    A parameter without a gradient is an error unless allow_unused is set
    (some configurations legitimately leave parameters out of the graph,
    e.g. the second-pass cell when only one iteration is run)."""
    store.step_count += 1
    t = store.step_count
    for name, tensor in store.params.items():
        if tensor.grad is None:
            if allow_unused:
                continue
            raise AutodiffError(f"missing gradient for parameter {name!r}")
        g = tensor.grad
        m = store.moment1[name]
        v = store.moment2[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    store.zero_grad()


# ---------------------------------------------------------------------------
# Finite-difference gradient checking.


def grad_check(build_loss, tensors: list[Tensor], h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.
    `build_loss()` must construct a fresh tape from the tensors' current
    values and return the scalar loss Tensor after calling backward through
    it (i.e. it returns (tape, loss))."""
    for tensor in tensors:
        tensor.zero_grad()
    tape, loss = build_loss()
    tape.backward(loss)
    worst = 0.0
    for tensor in tensors:
        analytic = (
            tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        )
        flat = tensor.data.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + h
            up = build_loss()[1].item()
            flat[idx] = original - h
            down = build_loss()[1].item()
            flat[idx] = original
            fd = (up - down) / (2.0 * h)
            a = analytic.reshape(-1)[idx]
            err = abs(a - fd) / max(abs(a), abs(fd), 1e-6)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint format: magic, version, tensor count, then per tensor a
# length-prefixed name, rows, cols, and row-major fp64 little-endian data.

_CHECKPOINT_MAGIC = b"CSCK"
_CHECKPOINT_VERSION = 1


def save_checkpoint(values: dict[str, np.ndarray], path: str) -> None:
    with open(path, "wb") as f:
        f.write(_CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", _CHECKPOINT_VERSION, len(values)))
        for name, array in values.items():
            encoded = name.encode("utf-8")
            arr = np.ascontiguousarray(array, dtype="<f8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            f.write(arr.tobytes())


def load_checkpoint(path: str) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        if f.read(4) != _CHECKPOINT_MAGIC:
            raise AutodiffError(f"{path}: not a checkpoint file")
        version, count = struct.unpack("<II", f.read(8))
        if version != _CHECKPOINT_VERSION:
            raise AutodiffError(f"{path}: unsupported checkpoint version {version}")
        values = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            rows, cols = struct.unpack("<II", f.read(8))
            raw = f.read(rows * cols * 8)
            values[name] = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).copy()
        return values
