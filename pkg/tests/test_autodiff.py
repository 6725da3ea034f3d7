import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ctaf_goalcast import autodiff as ad
from ctaf_goalcast.autodiff import Tape, Tensor


def grads_of(f, params):
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = f()
    return ad.backward(tape, loss, params)


def naive_conv(x, w, b, d):
    C, T = x.shape
    O, _, k = w.shape
    out = np.zeros((O, T))
    for o in range(O):
        for t in range(T):
            acc = b[o]
            for c in range(C):
                for j in range(k):
                    if t - j * d >= 0:
                        acc += w[o, c, j] * x[c, t - j * d]
            out[o, t] = acc
    return out


# -- conv


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(3, 7))
    w = np.eye(3)[:, :, None]
    out = ad.conv1d_causal(Tensor(x), Tensor(w), Tensor(np.zeros(3)))
    np.testing.assert_array_equal(out.value, x)


def test_conv_zero_input_gives_bias():
    b = np.array([0.5, -1.0])
    out = ad.conv1d_causal(Tensor(np.zeros((3, 6))), Tensor(np.ones((2, 3, 3))), Tensor(b), 2)
    np.testing.assert_array_equal(out.value, np.repeat(b[:, None], 6, axis=1))


def test_conv_matches_direct_sum():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(2, 8)), rng.normal(size=(4, 2, 3)), rng.normal(size=4)
    out = ad.conv1d_causal(Tensor(x), Tensor(w), Tensor(b), dilation=2)
    np.testing.assert_allclose(out.value, naive_conv(x, w, b, 2), atol=1e-12)


def test_conv_batched_equals_unbatched():
    rng = np.random.default_rng(2)
    x, w = rng.normal(size=(3, 2, 9)), rng.normal(size=(4, 2, 3))
    batched = ad.conv1d_causal(Tensor(x), Tensor(w), None, 4).value
    for i in range(3):
        np.testing.assert_allclose(batched[i], ad.conv1d_causal(Tensor(x[i]), Tensor(w), None, 4).value, atol=1e-14)


def test_conv_shape_errors():
    with pytest.raises(ValueError):
        ad.conv1d_causal(Tensor(np.zeros((3, 5))), Tensor(np.zeros((2, 4, 3))), None)
    with pytest.raises(ValueError):
        ad.conv1d_causal(Tensor(np.zeros((3, 5))), Tensor(np.zeros((2, 3, 3))), Tensor(np.zeros(3)))
    with pytest.raises(ValueError):
        ad.conv1d_causal(Tensor(np.zeros((3, 5))), Tensor(np.zeros((2, 3, 3))), None, dilation=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(2, 12), st.data())
def test_conv_causality(k, d, T, data):
    t0 = data.draw(st.integers(0, T - 1))
    rng = np.random.default_rng(T * 100 + k * 10 + d)
    x, w = rng.normal(size=(2, T)), rng.normal(size=(3, 2, k))
    cut = x.copy()
    cut[:, t0 + 1 :] = 0.0
    a = ad.conv1d_causal(Tensor(x), Tensor(w), None, d).value
    b = ad.conv1d_causal(Tensor(cut), Tensor(w), None, d).value
    np.testing.assert_array_equal(a[:, : t0 + 1], b[:, : t0 + 1])


# -- standard kernels


def test_gap_softmax_logsumexp():
    np.testing.assert_array_equal(ad.global_average_pool(Tensor(np.full((4, 6), 2.5))).value, np.full(4, 2.5))
    np.testing.assert_allclose(ad.softmax(Tensor(np.full(5, 3.0))).value, 0.2, atol=1e-15)
    assert ad.logsumexp(Tensor(np.array([1000.0, 1000.0]))).value == pytest.approx(1000 + np.log(2), abs=1e-12)
    with pytest.raises(ValueError):
        ad.global_average_pool(Tensor(np.zeros((3, 0))))


def test_embedding_gather_rows_and_range():
    table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    np.testing.assert_array_equal(ad.embedding_gather(table, [2, 0]).value, [[6, 7, 8], [0, 1, 2]])
    with pytest.raises(IndexError):
        ad.embedding_gather(table, [4])
    g = grads_of(lambda: ad.tsum(ad.embedding_gather(table, [1, 1, 3])), [table])[0]
    np.testing.assert_array_equal(g[:, 0], [0, 2, 0, 1])


# -- backward


def test_backward_examples():
    x = Tensor(np.array(3.0), requires_grad=True)
    assert grads_of(lambda: ad.square(x), [x])[0] == 6.0
    y = Tensor(np.array([-1.0, 2.0]), requires_grad=True)
    np.testing.assert_array_equal(grads_of(lambda: ad.tsum(ad.relu(y)), [y])[0], [0.0, 1.0])


def test_backward_fanout_and_untouched():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    unused = Tensor(np.ones(3), requires_grad=True)
    gx, gu = grads_of(lambda: ad.tsum(ad.add(ad.mul(x, x), x)), [x, unused])
    np.testing.assert_array_equal(gx, [3.0, 5.0])
    np.testing.assert_array_equal(gu, np.zeros(3))


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = ad.mul(x, 2.0)
    with pytest.raises(ValueError, match="scalar"):
        ad.backward(tape, y, [x])


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
def test_backward_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    w = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    x = rng.normal(size=(5, 4))
    l1 = lambda: ad.tsum(ad.square(ad.linear(Tensor(x), w)))
    l2 = lambda: ad.tsum(ad.exp(ad.mul(ad.linear(Tensor(x), w), 0.1)))
    g1 = grads_of(l1, [w])[0].copy()
    g2 = grads_of(l2, [w])[0].copy()
    gab = grads_of(lambda: ad.add(ad.mul(l1(), a), ad.mul(l2(), b)), [w])[0]
    np.testing.assert_allclose(gab, a * g1 + b * g2, rtol=1e-10, atol=1e-9)


def test_forward_and_backward_are_deterministic():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 3, 10))
    w = Tensor(rng.normal(size=(4, 3, 3)), requires_grad=True)
    f = lambda: ad.tmean(ad.global_average_pool(ad.relu(ad.conv1d_causal(Tensor(x), w, None, 2))))
    a = grads_of(f, [w])[0].copy()
    b = grads_of(f, [w])[0]
    assert a.tobytes() == b.tobytes()


def test_checked_mode_trips_on_nonfinite():
    with ad.checked(), np.errstate(all="ignore"):
        with pytest.raises(ad.NonFiniteError):
            ad.log(Tensor(np.array([0.0, -1.0])))
    with ad.checked(False), np.errstate(all="ignore"):
        assert np.isnan(ad.log(Tensor(np.array([-1.0]))).value[0])


# -- grad_check


def test_grad_check_linear_is_exact():
    rng = np.random.default_rng(0)
    w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    x = rng.normal(size=(6, 3))
    assert ad.grad_check(lambda: ad.tsum(ad.linear(Tensor(x), w)), [w], samples=12) < 1e-9


def test_grad_check_constant_has_zero_grads():
    w = Tensor(np.ones(4), requires_grad=True)
    f = lambda: ad.add(ad.mul(ad.tsum(w), 0.0), 7.0)
    assert ad.grad_check(f, [w], samples=4) == 0.0
    np.testing.assert_array_equal(w.grad, 0.0)


def test_grad_check_catches_a_wrong_derivative():
    w = Tensor(np.array([0.7, -1.3]), requires_grad=True)

    def bad():
        out = ad.tsum(ad.square(w))
        out.backward_fn = lambda g: (np.zeros_like(out.parents[0].value),)
        return out

    assert ad.grad_check(bad, [w], samples=2) > 0.5
