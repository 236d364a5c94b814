"""The numba kernels and their pure-numpy fallbacks must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathwise_hj import _kernels_numba as nb
from pathwise_hj import _kernels_numpy as npk
from pathwise_hj._codes import (
    FK_DEGENERATE,
    FK_LINEAR,
    FK_NONE,
    HK_CONCAVE,
    HK_EIKONAL,
    HK_LINEAR,
    HK_QUADRATIC,
    HK_SMOOTH,
    SCHEME_LF1,
    SCHEME_LF2,
    SCHEME_TK,
    SCHEME_UPWIND,
)
from pathwise_hj.paths import sample_brownian

HP = np.array([1.0, 1.0])
FP = np.array([0.1])
ALL_HK = [HK_EIKONAL, HK_QUADRATIC, HK_SMOOTH, HK_LINEAR, HK_CONCAVE]
CONVEX_HK = [HK_EIKONAL, HK_QUADRATIC, HK_SMOOTH, HK_LINEAR]


def both(name, *args, out_shape=None):
    outs = []
    for mod in (nb, npk):
        a = [np.array(x, copy=True) if isinstance(x, np.ndarray) else x for x in args]
        if out_shape is not None:
            o = np.empty(out_shape)
            getattr(mod, name)(*a, o)
            outs.append(o)
        else:
            outs.append(getattr(mod, name)(*a))
    return outs


@pytest.fixture
def u(rng):
    return np.cumsum(rng.uniform(-1, 1, 64)) * 2.0 / 64


@pytest.mark.parametrize("hk", ALL_HK)
def test_hamiltonian_pointwise(hk, rng):
    p = rng.uniform(-3, 3, 200)
    a = np.array([nb.ham(hk, HP, x) for x in p])
    b = npk.ham(hk, HP, p)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)
    a = np.array([nb.ham_d(hk, HP, x) for x in p])
    np.testing.assert_allclose(a, npk.ham_d(hk, HP, p), rtol=0, atol=1e-15)


@pytest.mark.parametrize("hk", ALL_HK)
def test_lf1(hk, u):
    a, b = both("lf1_step", u, 0.01, 0.8, hk, HP, 2 / 64, out_shape=u.shape)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


@pytest.mark.parametrize("fk", [FK_NONE, FK_LINEAR, FK_DEGENERATE])
def test_lf2(fk, u):
    a, b = both("lf2_step", u, 0.001, 1e-4, 0.3, HK_QUADRATIC, HP, fk, FP, 2 / 64, out_shape=u.shape)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


@pytest.mark.parametrize("hk", [HK_EIKONAL, HK_QUADRATIC, HK_SMOOTH])
@pytest.mark.parametrize("dz", [0.01, -0.01])
def test_upwind(hk, dz, u):
    a, b = both("upwind_step", u, dz, hk, HP, 2 / 64, out_shape=u.shape)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)


@pytest.mark.parametrize("hk", CONVEX_HK)
@given(c=st.floats(-0.5, 0.5))
def test_hopf_lax(hk, c):
    u = np.cos(np.arange(64) * np.pi / 32)
    a, b = both("hopf_lax", u, c, 2 / 64, hk, HP, out_shape=u.shape)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


@pytest.mark.parametrize("fk", [FK_LINEAR, FK_DEGENERATE])
def test_tk_and_diffusion(fk, u):
    a, b = both("diffusion_substeps", u, 0.01, fk, FP, 2 / 64, out_shape=u.shape)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)
    a, b = both("tk_step", u, 0.02, 0.01, HK_QUADRATIC, HP, fk, FP, 2 / 64, out_shape=u.shape)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


@pytest.mark.parametrize("scheme,fk,eps", [(SCHEME_LF1, FK_NONE, 0.0), (SCHEME_UPWIND, FK_NONE, 0.0),
                                           (SCHEME_LF2, FK_LINEAR, 0.2), (SCHEME_TK, FK_LINEAR, 0.0)])
def test_evolve(scheme, fk, eps, u, rng):
    n = 200
    h = 2 / 64
    dt = np.full(n, h * h / (2 * (0.1 + eps)) if scheme == SCHEME_LF2 else 1e-3)
    lim = 0.5 * h if scheme != SCHEME_LF2 else 2 * dt[0] * eps / h
    dz = rng.uniform(-1, 1, n) * lim * 0.9
    probes = np.array([0, 50, 200], dtype=np.int64)
    ra = nb.evolve(u.copy(), dz, dt, scheme, 1.0, eps, HK_QUADRATIC, HP, fk, FP, h, probes)
    rb = npk.evolve(u.copy(), dz, dt, scheme, 1.0, eps, HK_QUADRATIC, HP, fk, FP, h, probes)
    for x, y in zip(ra, rb):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-13)


@pytest.mark.parametrize("seed", range(4))
def test_stopping_times(seed):
    W = sample_brownian(seed, 0.5, 2.0**-14)
    a, b = both("stopping_times", W.times, np.ascontiguousarray(W.scalar), 0.07, 0.5)
    np.testing.assert_array_equal(a, b)


def test_pair_candidates_and_holder():
    W = sample_brownian(1, 0.5, 2.0**-9)
    (Ba, Aa), (Bb, Ab) = both("pair_candidates", W.times, np.ascontiguousarray(W.scalar))
    oa = np.lexsort((Aa, Ba))
    ob = np.lexsort((Ab, Bb))
    np.testing.assert_allclose(Ba[oa], Bb[ob], rtol=1e-15)
    np.testing.assert_allclose(Aa[oa], Ab[ob], rtol=1e-15)
    a, b = both("holder_constant", np.ascontiguousarray(W.scalar), 2.0**-9, 0.45)
    assert a == pytest.approx(b, rel=1e-14)


def test_env_flag_selects_numpy():
    code = "import pathwise_hj.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, PATHWISE_HJ_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["PATHWISE_HJ_BACKEND"] = "fortran"
    bad = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert bad.returncode != 0 and "PATHWISE_HJ_BACKEND" in bad.stderr
