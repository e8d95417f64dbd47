import numpy as np
import pytest

from circuitsat.autodiff import (
    AutodiffError,
    GruParams,
    LstmParams,
    ParamStore,
    Tape,
    Tensor,
    adam_step,
    grad_check,
    load_checkpoint,
    save_checkpoint,
)


def make_gru_params(store, prefix, in_dim, d, rng):
    tensors = []
    for gate in ("z", "r", "c"):
        tensors.append(store.uniform(f"{prefix}.w{gate}", d, in_dim, rng))
        tensors.append(store.uniform(f"{prefix}.u{gate}", d, d, rng))
        tensors.append(store.zeros(f"{prefix}.b{gate}", d))
    w = {n.split(".")[-1]: t for n, t in zip(
        [f"{prefix}.{k}{g}" for g in "zrc" for k in ("w", "u", "b")], tensors)}
    return GruParams(
        w["wz"], w["uz"], w["bz"], w["wr"], w["ur"], w["br"], w["wc"], w["uc"], w["bc"]
    )


def make_lstm_params(store, prefix, in_dim, d, rng):
    tensors = []
    for gate in ("i", "f", "g", "o"):
        tensors.append(store.uniform(f"{prefix}.w{gate}", d, in_dim, rng))
        tensors.append(store.uniform(f"{prefix}.u{gate}", d, d, rng))
        tensors.append(store.zeros(f"{prefix}.b{gate}", d))
    return LstmParams(*tensors)


def test_sigmoid_at_zero():
    tape = Tape()
    out = tape.sigmoid(Tensor(np.zeros((3, 1))))
    assert np.allclose(out.data, 0.5)


def test_matvec_identity():
    tape = Tape()
    x = Tensor([[1.0], [2.0], [3.0]])
    out = tape.matmul(Tensor(np.eye(3)), x)
    assert np.allclose(out.data, x.data)


def test_tanh_derivative_at_zero():
    tape = Tape()
    x = Tensor(np.zeros((1, 1)), requires_grad=True)
    loss = tape.sum(tape.tanh(x))
    tape.backward(loss)
    assert np.allclose(x.grad, 1.0)


def test_backward_requires_scalar():
    tape = Tape()
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    y = tape.add(x, x)
    with pytest.raises(AutodiffError):
        tape.backward(y)


def test_backward_elementwise_product():
    tape = Tape()
    w = Tensor([[1.0], [2.0]], requires_grad=True)
    x = Tensor([[3.0], [4.0]])
    loss = tape.sum(tape.mul(w, x))
    tape.backward(loss)
    assert np.allclose(w.grad, x.data)


def test_backward_constant_loss_zero_grads():
    tape = Tape()
    w = Tensor([[1.0]], requires_grad=True)
    _ = tape.mul(w, w)
    loss = tape.sum(Tensor([[5.0]]))
    tape.backward(loss)
    assert w.grad is None or np.allclose(w.grad, 0.0)


def test_shape_mismatch_names_shapes():
    tape = Tape()
    with pytest.raises(AutodiffError, match=r"\(2, 1\).*\(3, 1\)"):
        tape.mul(Tensor(np.ones((2, 1))), Tensor(np.ones((3, 1))))


@pytest.mark.parametrize("op", ["add", "sub", "mul", "matmul", "concat0",
                                "concat1", "sum", "mean", "sigmoid", "tanh",
                                "log", "scalar_mul", "bias_add"])
def test_primitive_grad_check(op):
    rng = np.random.default_rng(hash(op) % 2**32)
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    m = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    bias = Tensor(rng.normal(size=(4, 1)), requires_grad=True)
    pos = Tensor(rng.uniform(0.5, 2.0, size=(4, 3)), requires_grad=True)

    def build():
        tape = Tape()
        if op == "add":
            out = tape.add(a, b)
        elif op == "bias_add":
            out = tape.add(a, bias)
        elif op == "sub":
            out = tape.sub(a, b)
        elif op == "mul":
            out = tape.mul(a, b)
        elif op == "matmul":
            out = tape.matmul(m, a)
        elif op == "concat0":
            out = tape.concat([a, b], axis=0)
        elif op == "concat1":
            out = tape.concat([a, b], axis=1)
        elif op == "sum":
            out = tape.sum(a)
        elif op == "mean":
            out = tape.mean(a)
        elif op == "sigmoid":
            out = tape.sigmoid(a)
        elif op == "tanh":
            out = tape.tanh(a)
        elif op == "log":
            out = tape.log(pos)
        elif op == "scalar_mul":
            out = tape.scalar_mul(a, 2.5)
        # Squash through tanh so the reduction is nontrivial.
        loss = tape.sum(tape.tanh(out)) if out.shape != (1, 1) else out
        return tape, loss

    err = grad_check(build, [a, b, m, bias, pos])
    assert err < 1e-4


def test_mlp_grad_check_matches_finite_differences():
    rng = np.random.default_rng(0)
    store = ParamStore()
    w1 = store.uniform("w1", 5, 4, rng)
    b1 = store.zeros("b1", 5)
    w2 = store.uniform("w2", 3, 5, rng)
    b2 = store.zeros("b2", 3)
    w3 = store.uniform("w3", 1, 3, rng)
    b3 = store.zeros("b3", 1)
    x = Tensor(rng.normal(size=(4, 2)))

    def build():
        tape = Tape()
        h = tape.mlp2_tanh(x, w1, b1, w2, b2)
        out = tape.add(tape.matmul(w3, tape.tanh(h)), b3)
        return tape, tape.sum(out)

    err = grad_check(build, list(store.params.values()))
    assert err < 1e-4


def test_gru_zero_everything_is_zero():
    store = ParamStore()
    rng = np.random.default_rng(1)
    p = make_gru_params(store, "g", 3, 4, rng)
    for t in p.tensors():
        t.data[:] = 0.0
    tape = Tape()
    out = tape.gru_cell(Tensor(np.zeros((3, 1))), Tensor(np.zeros((4, 1))), p)
    assert np.allclose(out.data, 0.0)


def test_gru_output_bounded_from_zero_state():
    store = ParamStore()
    rng = np.random.default_rng(2)
    p = make_gru_params(store, "g", 3, 6, rng)
    tape = Tape()
    x = Tensor(rng.normal(size=(3, 5)) * 10)
    out = tape.gru_cell(x, Tensor(np.zeros((6, 5))), p)
    assert np.all(np.abs(out.data) < 1.0)


def test_gru_grad_check():
    store = ParamStore()
    rng = np.random.default_rng(3)
    p = make_gru_params(store, "g", 3, 4, rng)
    x = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    h = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

    def build():
        tape = Tape()
        return tape, tape.sum(tape.tanh(tape.gru_cell(x, h, p)))

    err = grad_check(build, [x, h, *p.tensors()])
    assert err < 1e-4


def test_lstm_zero_everything_is_zero():
    store = ParamStore()
    rng = np.random.default_rng(4)
    p = make_lstm_params(store, "l", 3, 4, rng)
    for t in p.tensors():
        t.data[:] = 0.0
    tape = Tape()
    h, c = tape.lstm_cell(
        Tensor(np.zeros((3, 1))), Tensor(np.zeros((4, 1))), Tensor(np.zeros((4, 1))), p
    )
    assert np.allclose(h.data, 0.0)
    assert np.allclose(c.data, 0.0)


def test_lstm_hidden_bounded():
    store = ParamStore()
    rng = np.random.default_rng(5)
    p = make_lstm_params(store, "l", 3, 6, rng)
    tape = Tape()
    h, _ = tape.lstm_cell(
        Tensor(rng.normal(size=(3, 4)) * 5),
        Tensor(np.zeros((6, 4))),
        Tensor(np.zeros((6, 4))),
        p,
    )
    assert np.all(np.abs(h.data) < 1.0)


def test_lstm_grad_check():
    store = ParamStore()
    rng = np.random.default_rng(6)
    p = make_lstm_params(store, "l", 3, 4, rng)
    x = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    h0 = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    c0 = Tensor(rng.normal(size=(4, 2)), requires_grad=True)

    def build():
        tape = Tape()
        h1, c1 = tape.lstm_cell(x, h0, c0, p)
        h2, _ = tape.lstm_cell(x, h1, c1, p)
        return tape, tape.sum(tape.tanh(h2))

    err = grad_check(build, [x, h0, c0, *p.tensors()])
    assert err < 1e-4


def test_gather_sum_grad_check():
    rng = np.random.default_rng(7)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    routes = [
        (0, np.array([0, 1, 1, 3]), np.array([0, 0, 1, 2])),
        (1, np.array([0, 1]), np.array([2, 2])),
    ]

    def build():
        tape = Tape()
        out = tape.gather_sum([a, b], routes, out_cols=3)
        return tape, tape.sum(tape.tanh(out))

    err = grad_check(build, [a, b])
    assert err < 1e-4


def test_bce_sum_value_and_grad():
    probs = Tensor(np.full((3, 1), 0.5), requires_grad=True)
    targets = np.array([[1.0], [0.0], [1.0]])

    def build():
        tape = Tape()
        return tape, tape.bce_sum(probs, targets)

    tape, loss = build()
    assert np.isclose(loss.item(), 3 * np.log(2))
    err = grad_check(build, [probs])
    assert err < 1e-4


def test_adam_first_step_magnitude():
    store = ParamStore()
    w = store.add("w", Tensor(np.zeros((4, 1))))
    g = np.array([[0.3], [-0.7], [1.2], [-0.01]])
    w.grad = g.copy()
    adam_step(store, lr=1e-3)
    expected = 1e-3 * np.abs(g) / (np.abs(g) + 1e-8)
    assert np.allclose(np.abs(w.data), expected, rtol=1e-6)
    assert np.allclose(np.sign(w.data), -np.sign(g))
    assert w.grad is None


def test_adam_zero_gradient_zero_update():
    store = ParamStore()
    w = store.add("w", Tensor(np.ones((2, 2))))
    w.grad = np.zeros((2, 2))
    adam_step(store)
    assert np.allclose(w.data, 1.0)


def test_adam_missing_gradient_is_error():
    store = ParamStore()
    store.add("w", Tensor(np.ones((2, 2))))
    with pytest.raises(AutodiffError, match="w"):
        adam_step(store)


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(11)
        store = ParamStore()
        w = store.uniform("w", 3, 3, rng)
        x = Tensor(rng.normal(size=(3, 1)))
        for _ in range(10):
            tape = Tape()
            loss = tape.sum(tape.tanh(tape.matmul(w, x)))
            tape.backward(loss)
            adam_step(store, lr=1e-2)
        return w.data.copy()

    assert np.array_equal(run(), run())


def test_grad_check_linear_is_exact():
    w = Tensor(np.array([[2.0, -1.0]]), requires_grad=True)
    x = Tensor(np.array([[3.0], [4.0]]))

    def build():
        tape = Tape()
        return tape, tape.matmul(w, x)

    assert grad_check(build, [w]) < 1e-9


def test_grad_check_detects_corruption():
    w = Tensor(np.array([[1.0, 2.0]]), requires_grad=True)
    x = Tensor(np.array([[3.0], [4.0]]))

    class BadTape(Tape):
        def matmul(self, a, b):
            out = super().matmul(a, b)
            inputs, outputs, _ = self.nodes[-1]
            self.nodes[-1] = (inputs, outputs, lambda g: (g @ b.data.T * 2.0, None))
            return out

    def build():
        tape = BadTape()
        return tape, tape.matmul(w, x)

    assert grad_check(build, [w]) > 1e-4


def test_backward_visits_each_node_once():
    calls = []
    tape = Tape()
    x = Tensor(np.ones((2, 1)), requires_grad=True)
    y = tape.add(x, x)
    z = tape.mul(y, y)
    loss = tape.sum(z)
    original = tape.nodes
    tape.nodes = [
        (i, o, (lambda fn: (lambda *g: (calls.append(1), fn(*g))[1]))(f))
        for i, o, f in original
    ]
    tape.backward(loss)
    assert len(calls) == len(original)


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(13)
    values = {
        "layer.w": rng.normal(size=(4, 3)),
        "layer.b": rng.normal(size=(4, 1)),
    }
    path = str(tmp_path / "model.ckpt")
    save_checkpoint(values, path)
    back = load_checkpoint(path)
    assert set(back) == set(values)
    for name in values:
        assert np.array_equal(back[name], values[name])


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(AutodiffError):
        load_checkpoint(str(path))


def test_load_values_shape_mismatch():
    store = ParamStore()
    store.add("w", Tensor(np.zeros((2, 2))))
    with pytest.raises(AutodiffError):
        store.load_values({"w": np.zeros((3, 3))})
