"""The tape must reproduce finite-difference gradients for every op."""

import numpy as np
import pytest

from hyperscene import autodiff as ad


def fd_grad(f, x, h=1e-6):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xp[i] += h
        xm = flat.copy()
        xm[i] -= h
        g.reshape(-1)[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2 * h)
    return g


UNARY_CASES = [
    (np.exp, (-1.0, 1.0)),
    (np.log, (0.5, 3.0)),
    (np.log1p, (-0.5, 2.0)),
    (np.expm1, (-1.0, 1.0)),
    (np.sqrt, (0.1, 4.0)),
    (np.square, (-2.0, 2.0)),
    (np.sinh, (-2.0, 2.0)),
    (np.cosh, (-2.0, 2.0)),
    (np.tanh, (-2.0, 2.0)),
    (np.arcsinh, (-3.0, 3.0)),
    (np.arccosh, (1.1, 5.0)),
    (np.arcsin, (-0.9, 0.9)),
    (np.arccos, (-0.9, 0.9)),
]


@pytest.mark.parametrize("fn,domain", UNARY_CASES, ids=[c[0].__name__ for c in UNARY_CASES])
def test_unary_gradients(fn, domain, rng):
    x = rng.uniform(*domain, size=(3, 4))
    t = ad.Tensor(x)
    out = fn(t).sum()
    out.backward()
    numeric = fd_grad(lambda v: float(fn(v).sum()), x)
    assert np.allclose(t.grad, numeric, rtol=1e-6, atol=1e-8)


def test_arithmetic_and_broadcasting(rng):
    a = rng.normal(size=(4, 3))
    b = rng.normal(size=(3,)) + 3.0
    ta, tb = ad.Tensor(a), ad.Tensor(b)
    out = ((ta * tb - ta / tb + 2.0 * ta) ** 2).sum()
    out.backward()

    def f(av, bv):
        return float(((av * bv - av / bv + 2.0 * av) ** 2).sum())

    ga = fd_grad(lambda v: f(v, b), a)
    gb = fd_grad(lambda v: f(a, v), b)
    assert np.allclose(ta.grad, ga, rtol=1e-5, atol=1e-8)
    assert np.allclose(tb.grad, gb, rtol=1e-5, atol=1e-8)


def test_matmul_gradients(rng):
    a = rng.normal(size=(4, 3))
    w = rng.normal(size=(3, 2))
    tw = ad.Tensor(w)
    out = (a @ tw).sum()
    out.backward()
    numeric = fd_grad(lambda v: float((a @ v).sum()), w)
    assert np.allclose(tw.grad, numeric, rtol=1e-6, atol=1e-9)


def test_getitem_scatter(rng):
    x = rng.normal(size=(5, 3))
    idx = np.array([0, 2, 2, 4])
    t = ad.Tensor(x)
    out = (t[idx] * t[idx]).sum()
    out.backward()
    numeric = fd_grad(lambda v: float((v[idx] * v[idx]).sum()), x)
    assert np.allclose(t.grad, numeric, rtol=1e-6, atol=1e-9)


def test_pair_indexing(rng):
    x = rng.normal(size=(4, 4))
    rows = np.array([0, 1, 3])
    cols = np.array([2, 0, 3])
    t = ad.Tensor(x)
    out = np.exp(t[rows, cols]).sum()
    out.backward()
    numeric = fd_grad(lambda v: float(np.exp(v[rows, cols]).sum()), x)
    assert np.allclose(t.grad, numeric, rtol=1e-6, atol=1e-9)


def test_where_dead_branch_produces_finite_gradient():
    v = ad.Tensor(np.array([0.0, 1e-12, 2.0]))
    t2 = v * v
    safe = ad.clip(t2, 1e-300, None)
    pref = ad.where(ad.value_of(t2) < 1e-8, 1.0 + t2 / 6.0, np.sinh(np.sqrt(safe)) / np.sqrt(safe))
    pref.sum().backward()
    assert np.all(np.isfinite(v.grad))


def test_clip_gradient_mask():
    x = ad.Tensor(np.array([0.5, 1.5, 2.5]))
    out = ad.clip(x, 1.0, 2.0).sum()
    out.backward()
    assert np.array_equal(x.grad, np.array([0.0, 1.0, 0.0]))


def test_maximum_hinge_subgradient_zero_at_kink():
    x = ad.Tensor(np.array([-1.0, 0.0, 1.0]))
    np.maximum(x, 0.0).sum().backward()
    assert np.array_equal(x.grad, np.array([0.0, 0.0, 1.0]))


def test_logsumexp_matches_reference_and_handles_neg_inf(rng):
    x = rng.normal(size=(3, 5)) * 10
    x[0, 2] = -np.inf
    t = ad.Tensor(x)
    out = ad.logsumexp(t, axis=1)
    ref = np.log(np.sum(np.exp(x - x.max(axis=1, keepdims=True)), axis=1)) + x.max(axis=1)
    assert np.allclose(ad.value_of(out), ref, rtol=1e-12)
    out.sum().backward()
    softmax = np.exp(x - ref[:, None])
    assert np.allclose(t.grad, softmax, rtol=1e-10, atol=1e-12)


def test_softplus_stable_and_invertible():
    big = ad.softplus(np.float64(800.0))
    assert np.isfinite(big) and abs(big - 800.0) < 1e-9
    for c in (1e-3, 1.0, 80.0, 1e4):
        u = ad.inverse_softplus(np.float64(c))
        assert abs(float(ad.softplus(u)) - c) < 1e-9 * max(1.0, c)
    t = ad.Tensor(np.array([-3.0, 0.0, 3.0]))
    ad.softplus(t).sum().backward()
    sig = 1.0 / (1.0 + np.exp(-t.value))
    assert np.allclose(t.grad, sig, rtol=1e-12)


def test_shared_subexpression_accumulates_once(rng):
    x = ad.Tensor(np.array(2.0))
    y = x * x  # reused twice below
    out = y + y
    out.backward()
    assert np.allclose(x.grad, 8.0)


def test_concatenate_gradients(rng):
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 2))
    ta, tb = ad.Tensor(a), ad.Tensor(b)
    out = (ad.concatenate([ta, tb], axis=1) ** 2).sum()
    out.backward()
    assert np.allclose(ta.grad, 2 * a)
    assert np.allclose(tb.grad, 2 * b)


def test_mean_and_reshape(rng):
    x = rng.normal(size=(4, 6))
    t = ad.Tensor(x)
    out = t.reshape((2, 12)).mean(axis=1).sum()
    out.backward()
    assert np.allclose(t.grad, np.full_like(x, 1 / 12))
