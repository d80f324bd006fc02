import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bcanet import functional as fn
from bcanet import tensor as T
from bcanet.gradcheck import check_gradients, numerical_grad, relative_error
from bcanet.tensor import Tape, Tensor, no_grad


def assert_grads_ok(loss_fn, tensors, tol=1e-6):
    for rep in check_gradients(loss_fn, tensors):
        assert rep.max_rel_err < tol, rep


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- matmul -----------------------------------------------------------------


def test_matmul_identity():
    out = T.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[3.0, 4.0], [5.0, 6.0]]))
    np.testing.assert_array_equal(out.data, [[3, 4], [5, 6]])


def test_matmul_hand_value():
    assert T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_gradient_matches_finite_differences():
    a = T.parameter([[1.0, 2.0]])
    b = Tensor([[3.0], [4.0]])
    T.sum(T.matmul(a, b)).backward()
    num = numerical_grad(lambda: float((a.data @ b.data).sum()), a.data)
    np.testing.assert_allclose(num, [[3.0, 4.0]], atol=1e-8)
    np.testing.assert_allclose(a.grad, [[3.0, 4.0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_batched_matmul_gradients(rng):
    a = T.parameter(rng.standard_normal((2, 3, 4)))
    b = T.parameter(rng.standard_normal((2, 4, 5)))
    w = Tensor(rng.standard_normal((2, 3, 5)))
    assert_grads_ok(lambda: T.sum(T.mul(T.matmul(a, b), w)), {"a": a, "b": b})


# -- softmax ----------------------------------------------------------------


def test_softmax_uniform():
    np.testing.assert_allclose(T.softmax(Tensor([0.0, 0.0, 0.0]), 0).data, [1 / 3] * 3, rtol=0, atol=1e-15)


def test_softmax_two_logits():
    e2 = np.exp(2.0)
    out = T.softmax(Tensor([2.0, 0.0]), 0).data
    np.testing.assert_allclose(out, [e2 / (e2 + 1), 1 / (e2 + 1)], rtol=1e-15)
    np.testing.assert_allclose(out, [0.8808, 0.1192], atol=1e-4)


def test_softmax_large_logits_do_not_overflow():
    out = T.softmax(Tensor([1000.0, 1000.0]), 0).data
    assert np.all(np.isfinite(out))
    np.testing.assert_array_equal(out, [0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-50, 50)), st.integers(0, 1))
def test_softmax_slices_sum_to_one(x, axis):
    out = T.softmax(Tensor(x), axis).data
    np.testing.assert_allclose(out.sum(axis=axis), 1.0, atol=1e-9)
    assert np.all(out >= 0) and np.all(out <= 1)


def test_softmax_and_log_softmax_gradients(rng):
    x = T.parameter(rng.standard_normal((3, 5)))
    w = Tensor(rng.standard_normal((3, 5)))
    assert_grads_ok(lambda: T.sum(T.mul(T.softmax(x, 0), w)), {"x": x})
    assert_grads_ok(lambda: T.sum(T.mul(T.log_softmax(x, 1), w)), {"x": x})


# -- conv2d -----------------------------------------------------------------


def test_conv_1x1_identity():
    x = np.random.default_rng(0).standard_normal((2, 3, 5, 5))
    w = np.eye(3).reshape(3, 3, 1, 1)
    out = fn.conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.data, x)


def test_conv_all_ones_sum():
    out = fn.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.shape == (1, 1, 1, 1) and out.data.item() == 9.0


def naive_conv(x, w, b, stride, dilation, padding):
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    wo = (wd + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for b_ in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = b[o]
                    for c in range(cin):
                        for u in range(k):
                            for v in range(k):
                                acc += w[o, c, u, v] * xp[b_, c, i * stride + u * dilation, j * stride + v * dilation]
                    out[b_, o, i, j] = acc
    return out


@pytest.mark.parametrize("stride,dilation,padding", [(1, 1, 0), (1, 1, 1), (2, 1, 1), (1, 2, 2), (2, 2, 1)])
def test_conv_matches_naive_loops(rng, stride, dilation, padding):
    x = rng.standard_normal((2, 3, 7, 6))
    w = rng.standard_normal((4, 3, 3, 3))
    b = rng.standard_normal(4)
    out = fn.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, dilation, padding)
    np.testing.assert_allclose(out.data, naive_conv(x, w, b, stride, dilation, padding), atol=1e-12)


@pytest.mark.parametrize("stride,dilation,padding", [(1, 1, 1), (2, 1, 1), (1, 2, 2), (1, 4, 4)])
def test_conv_gradients(rng, stride, dilation, padding):
    x = T.parameter(rng.standard_normal((2, 3, 5, 5)))
    w = T.parameter(rng.standard_normal((2, 3, 3, 3)))
    b = T.parameter(rng.standard_normal(2))
    ho = (5 + 2 * padding - dilation * 2 - 1) // stride + 1
    r = Tensor(rng.standard_normal((2, 2, ho, ho)))
    assert_grads_ok(lambda: T.sum(T.mul(fn.conv2d(x, w, b, stride, dilation, padding), r)), {"x": x, "w": w, "b": b})


def test_conv_negative_output_size_raises():
    with pytest.raises(ValueError, match="non-positive output"):
        fn.conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros((1, 1, 3, 3))), dilation=2)


# -- bilinear ---------------------------------------------------------------


def test_bilinear_same_size_is_identity():
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    np.testing.assert_array_equal(fn.bilinear_resize(x, 4, 4).data, x.data)


def test_bilinear_upsample_half_pixel_convention():
    x = Tensor(np.array([[[[1.0, 3.0], [5.0, 7.0]]]]))
    out = fn.bilinear_resize(x, 4, 4).data[0, 0]
    # hand evaluation: rows at src -0.25->0, 0.25, 0.75, 1.25->clamped neighbour
    row0 = [1.0, 1.5, 2.5, 3.0]
    expected = np.array([row0, [2.0, 2.5, 3.5, 4.0], [4.0, 4.5, 5.5, 6.0], [5.0, 5.5, 6.5, 7.0]])
    np.testing.assert_array_equal(out, expected)
    assert out[0, 0] == 1.0 and out[0, -1] == 3.0 and out[-1, 0] == 5.0 and out[-1, -1] == 7.0


def test_bilinear_downsample_average():
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    out = fn.bilinear_resize(x, 2, 2).data[0, 0]
    # src = 0.5 and 2.5: mean of 2x2 blocks
    np.testing.assert_array_equal(out, [[2.5, 4.5], [10.5, 12.5]])


def test_bilinear_gradient(rng):
    x = T.parameter(rng.standard_normal((2, 3, 3, 5)))
    r = Tensor(rng.standard_normal((2, 3, 7, 4)))
    assert_grads_ok(lambda: T.sum(T.mul(fn.bilinear_resize(x, 7, 4), r)), {"x": x})


# -- elementwise, shape ops ---------------------------------------------------


def test_elementwise_and_shape_gradients(rng):
    a = T.parameter(rng.standard_normal((2, 3, 4)))
    b = T.parameter(rng.standard_normal((2, 3, 4)))
    p = T.parameter(rng.uniform(0.2, 2.0, (2, 3, 4)))
    r = Tensor(rng.standard_normal((3, 2, 8)))

    def loss():
        x = T.add(T.mul(a, b), T.sigmoid(a))
        x = T.sub(x, T.relu(b))
        x = T.add(x, T.log(p))
        x = T.concat([x, T.scale(a, 0.5)], axis=2)
        x = T.transpose(x, (1, 0, 2))
        return T.add(T.sum(T.mul(x, r)), T.mean(T.sum(a, axis=1)))

    assert_grads_ok(loss, {"a": a, "b": b, "p": p})


def test_sigmoid_is_finite_for_extremes():
    out = T.sigmoid(Tensor([-800.0, 0.0, 800.0])).data
    assert np.all(np.isfinite(out))
    assert out[1] == 0.5


def test_log_of_nonpositive_raises():
    with pytest.raises(ValueError):
        T.log(Tensor([0.0, 1.0]))


# -- backward ---------------------------------------------------------------


def test_backward_sum_gives_ones():
    x = T.parameter(np.zeros((2, 2)))
    T.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 2)))


def test_backward_square_analytic():
    x = T.parameter([1.0, 2.0])
    T.sum(T.mul(x, x)).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_conv_relu_sum_chain(rng):
    x = T.parameter(rng.standard_normal((1, 2, 6, 6)))
    w = T.parameter(rng.standard_normal((3, 2, 3, 3)))
    b = T.parameter(rng.standard_normal(3))
    assert_grads_ok(lambda: T.mean(T.relu(fn.conv2d(x, w, b, padding=1))), {"x": x, "w": w, "b": b})


def test_backward_requires_scalar():
    x = T.parameter(np.ones(3))
    with pytest.raises(ValueError, match="scalar"):
        T.backward(T.scale(x, 2.0))


def test_backward_twice_raises():
    x = T.parameter(np.ones(3))
    loss = T.sum(T.mul(x, x))
    loss.backward()
    with pytest.raises(RuntimeError, match="consumed"):
        loss.backward()


def test_backward_detached_raises():
    with pytest.raises(RuntimeError, match="detached"):
        T.sum(Tensor(np.ones(3))).backward()
    x = T.parameter(np.ones(3))
    with no_grad():
        loss = T.sum(x)
    with pytest.raises(RuntimeError, match="detached"):
        loss.backward()


def test_shared_subexpression_accumulates():
    x = T.parameter([3.0])
    y = T.mul(x, x)
    T.sum(T.add(y, y)).backward()
    np.testing.assert_array_equal(x.grad, [12.0])


def test_tape_is_topological_and_each_entry_once(rng):
    x = T.parameter(rng.standard_normal((2, 2)))
    y = T.relu(x)
    loss = T.sum(T.add(T.mul(y, y), y))
    tape = Tape.record(loss)
    seen = set()
    for node in tape.nodes:
        for p in node._parents:
            if p.requires_grad:
                assert p.node_id in seen
        seen.add(node.node_id)
    ids = [e.output_id for e in tape.entries]
    assert len(ids) == len(set(ids))
    assert tape.nodes[-1] is loss


def test_deterministic_forward_and_backward(rng):
    xd = rng.standard_normal((2, 3, 8, 8))
    wd = rng.standard_normal((4, 3, 3, 3))

    def run():
        x, w = T.parameter(xd.copy()), T.parameter(wd.copy())
        out = T.softmax(T.reshape(fn.conv2d(x, w, padding=1, dilation=1), (2, -1)), 1)
        T.sum(T.mul(out, out)).backward()
        return out.data, x.grad, w.grad

    for a, b in zip(run(), run()):
        assert a.tobytes() == b.tobytes()


def test_relative_error_floor():
    assert relative_error(np.array([0.0]), np.array([5e-9]))[0] == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1]))[0] == pytest.approx(0.1 / 1.1)
