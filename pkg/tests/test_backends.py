"""Parity between the compiled backend and the numpy fallback."""

import numpy as np
import pytest

from trendeq.backends import compiled_backend, pure
from trendeq.errors import IllConditionedKernel

compiled = compiled_backend()

needs_compiled = pytest.mark.skipif(compiled is None, reason="extension not built")


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@needs_compiled
def test_se_gram_parity(rng):
    x = np.sort(rng.uniform(30, 90, 25))
    a = pure.se_gram(x, 4.2, 77.0)
    b = compiled.se_gram(x, 4.2, 77.0)
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(b, b.T, rtol=0, atol=0)


@needs_compiled
def test_se_cross_parity(rng):
    a = rng.uniform(30, 90, 12)
    b = rng.uniform(30, 90, 19)
    np.testing.assert_allclose(pure.se_cross(a, b, 3.0, 10.0),
                               compiled.se_cross(a, b, 3.0, 10.0),
                               rtol=1e-14, atol=1e-14)


@needs_compiled
def test_sq_dists_parity(rng):
    a = rng.normal(size=(14, 6))
    b = rng.normal(size=(9, 6))
    np.testing.assert_allclose(pure.sq_dists(a, b), compiled.sq_dists(a, b),
                               rtol=1e-12, atol=1e-12)


@needs_compiled
def test_lml_parity(rng):
    for _ in range(20):
        n = int(rng.integers(2, 30))
        x = np.sort(rng.uniform(30, 90, n))
        resid = rng.normal(0, 10, n)
        d2 = (x[:, None] - x[None, :]) ** 2
        z = rng.normal([np.log(5), np.log(50), np.log(5)], 0.8)
        vp = pure.lml_value(d2, resid, *z, 1e-9)
        vc = compiled.lml_value(d2, resid, *z, 1e-9)
        assert vp == pytest.approx(vc, rel=1e-10, abs=1e-9)
        fp, gp = pure.lml_value_grad(d2, resid, *z, 1e-9)
        fc, gc = compiled.lml_value_grad(d2, resid, *z, 1e-9)
        assert fp == pytest.approx(fc, rel=1e-10, abs=1e-9)
        np.testing.assert_allclose(gp, gc, rtol=1e-8, atol=1e-8)


@needs_compiled
def test_lml_nonfinite_raises_in_both(rng):
    d2 = np.array([[0.0, 1.0], [1.0, 0.0]])
    resid = np.array([1.0, -1.0])
    for mod in (pure, compiled):
        with pytest.raises(IllConditionedKernel):
            # signal variance exp(800) overflows
            mod.lml_value(d2, resid, np.log(5.0), 800.0, np.log(1.0), 1e-9)


@needs_compiled
def test_smo_parity(rng):
    for trial in range(10):
        n = int(rng.integers(6, 40))
        x = rng.normal(size=(n, 3))
        y = np.where(x[:, 0] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
        if np.all(y == y[0]):
            y[0] = -y[0]
        k = np.exp(pure.sq_dists(x, x) / (-2.0 * 1.5 ** 2))
        ap, bp, ip_, vp = pure.smo_solve(k, y, 1.0, 1e-3, 100 * n)
        ac, bc, ic_, vc = compiled.smo_solve(k, y, 1.0, 1e-3, 100 * n)
        assert ip_ == ic_
        np.testing.assert_allclose(ap, ac, rtol=1e-10, atol=1e-12)
        assert bp == pytest.approx(bc, rel=1e-10, abs=1e-12)


def test_active_backend_name():
    from trendeq.backends import active_backend

    assert active_backend() in ("pure", "compiled")
