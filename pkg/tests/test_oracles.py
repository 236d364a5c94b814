import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from pathwise_hj.harness import build_driver
from pathwise_hj.oracles import (
    BudgetError,
    RunReducer,
    characteristics_solution,
    lax_oleinik_segment,
    pathwise_oracle,
    reduce_runs,
    reference_fallback,
)
from pathwise_hj.paths import Partition, PiecewisePath, brownian_modulus, regular_recipe, sample_brownian
from pathwise_hj.problems import constant, cosine, eikonal, get_problem, heat, linear_transport, quadratic, sawtooth, smooth_bounded
from pathwise_hj.schemes import Grid1D, SchemeSpec, discrete_lipschitz, evolve


def brute_hopf_lax(u, c, H, h, sub=64):
    """O(M^2 sub) reference: sup over a fine sample of the interpolant, all periodic images."""
    M = u.shape[0]
    P = M * h
    y = np.arange(M * sub) * (h / sub)
    uy = np.interp(y, np.arange(M + 1) * h, np.append(u, u[0]))
    x = np.arange(M) * h
    out = np.empty(M)
    s = 1.0 if c > 0 else -1.0
    for i in range(M):
        best = -np.inf
        for k in (-1, 0, 1):
            q = (y + k * P - x[i]) / abs(c)
            val = s * uy - abs(c) * H.legendre(s * q)
            best = max(best, np.max(val))
        out[i] = s * best
    return out


class TestLaxOleinik:
    @pytest.mark.parametrize("k", [3, 13, 50, -21])
    def test_eikonal_is_dilation(self, k):
        M = 128
        h = 2.0 / M
        c = k * h / 8
        u = np.random.default_rng(1).uniform(-1, 1, M)
        out = lax_oleinik_segment(u, c, eikonal(), h)
        fine = np.interp(np.arange(M * 8) * h / 8, np.arange(M + 1) * h, np.append(u, u[0]))
        w = 2 * int(round(abs(c) / (h / 8))) + 1
        filt = maximum_filter1d if c > 0 else minimum_filter1d
        np.testing.assert_allclose(out, filt(fine, w, mode="wrap")[::8], atol=1e-14)

    def test_zero_is_identity(self):
        u = np.arange(8.0)
        np.testing.assert_array_equal(lax_oleinik_segment(u, 0.0, quadratic(), 0.25), u)

    @pytest.mark.parametrize("H", [quadratic(1.0), smooth_bounded(1.0)], ids=lambda H: H.name)
    @pytest.mark.parametrize("c", [0.07, -0.11])
    def test_matches_brute_force(self, H, c):
        M = 48
        h = 2.0 / M
        u = cosine(1.0, 2.0).sample(M)
        fast = lax_oleinik_segment(u, c, H, h)
        slow = brute_hopf_lax(u, c, H, h)
        # the fast kernel is exact for the interpolant; brute force samples it
        assert np.max(np.abs(fast - slow)) < 2e-4
        assert np.all(fast >= slow - 1e-12) if c > 0 else np.all(fast <= slow + 1e-12)

    @pytest.mark.parametrize("c", [0.7 * 2 / 64, -5 * 2 / 64, 0.13])
    def test_linear_transport_is_shift(self, c):
        M = 64
        h = 2.0 / M
        u = cosine(1.0, 2.0).sample(M)
        H = linear_transport(0.5)
        out = lax_oleinik_segment(u, c, H, h)
        x = np.arange(M) * h
        shifted = np.interp((x + 0.5 * c) % 2.0, np.arange(M + 1) * h, np.append(u, u[0]))
        np.testing.assert_allclose(out, shifted, atol=1e-13)

    @given(st.integers(1, 12), st.integers(1, 12), st.sampled_from([-1, 1]), st.integers(0, 1000))
    def test_semigroup_eikonal_grid_aligned(self, i, j, sign, seed):
        M = 64
        h = 2.0 / M
        u = np.random.default_rng(seed).uniform(-1, 1, M) * h
        H = eikonal()
        two = lax_oleinik_segment(lax_oleinik_segment(u, sign * i * h, H, h), sign * j * h, H, h)
        one = lax_oleinik_segment(u, sign * (i + j) * h, H, h)
        np.testing.assert_allclose(two, one, atol=1e-10)

    @given(st.floats(0.001, 0.3), st.floats(0.001, 0.3), st.sampled_from([-1, 1]), st.integers(0, 1000))
    def test_semigroup_off_grid_within_cell_oscillation(self, a, b, sign, seed):
        # off the grid the intermediate result is re-interpolated, which moves
        # values by at most the largest one-cell oscillation
        M = 64
        h = 2.0 / M
        u = np.random.default_rng(seed).uniform(-1, 1, M) * h
        H = eikonal()
        two = lax_oleinik_segment(lax_oleinik_segment(u, sign * a, H, h), sign * b, H, h)
        one = lax_oleinik_segment(u, sign * (a + b), H, h)
        assert np.max(np.abs(one - two)) <= np.max(np.abs(np.diff(np.append(u, u[0])))) + 1e-12

    def test_semigroup_exact_on_linear_data(self):
        M = 64
        h = 2.0 / M
        u = sawtooth(1.0, 2.0).sample(M)
        for H in (quadratic(1.0), smooth_bounded(1.0), eikonal()):
            two = lax_oleinik_segment(lax_oleinik_segment(u, 0.05, H, h), 0.08, H, h)
            one = lax_oleinik_segment(u, 0.13, H, h)
            mask = np.abs(np.arange(M) * h - 1.0) > 0.3
            mask &= np.abs(np.arange(M) * h - 1.0) < 0.8
            np.testing.assert_allclose(two[mask], one[mask], atol=1e-10)

    def test_rejects_nonconvex(self):
        with pytest.raises(ValueError):
            lax_oleinik_segment(np.zeros(8), 0.1, get_problem("concave_cosine").H, 0.25)

    @pytest.mark.parametrize("c", [0.1, -0.1])
    def test_monotone_direction(self, c):
        M = 64
        u = cosine(1.0, 2.0).sample(M)
        out = lax_oleinik_segment(u, c, eikonal(), 2.0 / M)
        assert np.all(out >= u) if c > 0 else np.all(out <= u)
        assert discrete_lipschitz(out, 2.0 / M) <= 1.0 + 1e-12


class TestRunReduction:
    def test_merge_same_sign(self):
        assert reduce_runs([0.1, 0.2, -0.05, -0.05, 0.3]) == pytest.approx([0.5])

    def test_keeps_large_alternation(self):
        assert reduce_runs([0.1, -0.5, 0.2]) == pytest.approx([0.1, -0.5, 0.2])

    def test_online_equals_batch(self):
        inc = np.random.default_rng(0).normal(size=500)
        r = RunReducer()
        for d in inc:
            r.push(float(d))
        assert r.stack == reduce_runs(inc)

    @given(st.lists(st.floats(-0.3, 0.3), min_size=1, max_size=30), st.integers(0, 100))
    def test_reduction_preserves_solution(self, incs, seed):
        M = 64
        h = 2.0 / M
        u = cosine(1.0, 2.0).sample(M)
        H = eikonal()
        full = u
        for d in incs:
            full = lax_oleinik_segment(full, d, H, h)
        red = u
        for d in reduce_runs(incs):
            red = lax_oleinik_segment(red, d, H, h)
        # on the grid each alternation can only add interpolation error; both
        # stay within one step of grid error of each other
        assert np.max(np.abs(full - red)) <= 2 * h * len(incs) + 1e-12


class TestPathwiseOracle:
    def test_zero_path(self):
        z = PiecewisePath(np.array([0.0, 1.0]), np.zeros(2))
        res = pathwise_oracle(sawtooth(), z, eikonal(), [0.0, 0.5, 1.0], 64)
        for s in res.snapshots:
            np.testing.assert_array_equal(s, sawtooth().sample(64))

    def test_single_segment(self):
        z = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 0.2]))
        res = pathwise_oracle(cosine(), z, quadratic(), [1.0], 64)
        np.testing.assert_allclose(res.snapshots[0], lax_oleinik_segment(cosine().sample(64), 0.2, quadratic(), 2 / 64))

    def test_closing_square_wave(self):
        M = 256
        h = 2.0 / M
        x = np.arange(M) * h
        u = ((x % 0.5) < 0.25).astype(float)
        a = 12 * h
        z = PiecewisePath(np.array([0.0, 0.5, 1.0]), np.array([0.0, a, 0.0]))
        res = pathwise_oracle(u, z, eikonal(), [1.0], M, period=2.0)
        # brute force: windowed max then min over |y - x| <= a on a fine sample
        k = 16
        fine = np.interp(np.arange(M * k) * h / k, np.arange(M + 1) * h, np.append(u, u[0]))
        w = 2 * int(round(a / (h / k))) + 1
        closing = minimum_filter1d(maximum_filter1d(fine, w, mode="wrap"), w, mode="wrap")[::k]
        np.testing.assert_allclose(res.snapshots[0], closing, atol=1e-12)

    def test_budget(self):
        W = sample_brownian(0, 0.5, 2.0**-12)
        rho, P, Wh = regular_recipe(W, 2.0**-6, 0.5, brownian_modulus())
        res = pathwise_oracle(cosine(), Wh, eikonal(), [0.5], 128, target=W)
        assert res.budget == pytest.approx(W.sup_distance(Wh))

    def test_lipschitz_preserved(self):
        W = sample_brownian(1, 0.5, 2.0**-12)
        res = pathwise_oracle(sawtooth(), W, quadratic(), np.linspace(0, 0.5, 5), 256)
        for s in res.snapshots:
            assert discrete_lipschitz(s, 2.0 / 256) <= 1.0 + 1e-12

    def test_probe_between_breakpoints(self):
        z = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 0.4]))
        res = pathwise_oracle(cosine(), z, eikonal(), [0.25], 64)
        np.testing.assert_allclose(res.snapshots[0], lax_oleinik_segment(cosine().sample(64), 0.1, eikonal(), 2 / 64))

    def test_nonconvex_rejected(self):
        z = PiecewisePath(np.array([0.0, 1.0]), np.zeros(2))
        with pytest.raises(ValueError, match="fallback"):
            pathwise_oracle(cosine(), z, get_problem("concave_cosine").H, [1.0], 16)


class TestCharacteristics:
    def test_constant_path(self):
        z = PiecewisePath(np.array([0.0, 1.0]), np.zeros(2))
        win = characteristics_solution(quadratic(5.0), cosine(), z, 0.0)
        x = np.linspace(0, 2, 50)
        np.testing.assert_allclose(win.evaluate(x, 0.7), cosine()(x), atol=1e-14)

    def test_quadratic_formula(self):
        phi = cosine()
        dz = 0.15
        z = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, dz]))
        win = characteristics_solution(quadratic(5.0), phi, z, 0.0)
        y = np.linspace(0, 2, 37)
        X = y - phi.d1(y) * dz
        np.testing.assert_allclose(win.evaluate(X, 1.0), phi(y) - 0.5 * phi.d1(y) ** 2 * dz, atol=1e-12)

    @pytest.mark.parametrize("H", [quadratic(5.0), smooth_bounded(5.0)], ids=lambda H: H.name)
    def test_gradient_transport(self, H):
        phi = cosine()
        z = PiecewisePath(np.array([0.0, 0.5, 1.0]), np.array([0.0, 0.2, -0.1]))
        win = characteristics_solution(H, phi, z, 0.0)
        y = np.linspace(0, 2, 41)
        for t in (0.3, 0.5, 1.0):
            dz = float(z.at(t))
            X = y - H.derivative(phi.d1(y)) * dz
            np.testing.assert_allclose(win.gradient(X, t), phi.d1(y), atol=1e-8)

    def test_window_exceeded(self):
        z = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 5.0]))
        win = characteristics_solution(quadratic(5.0), cosine(), z, 0.0)
        assert not win.valid(1.0)
        with pytest.raises(ValueError, match="window"):
            win.evaluate(np.zeros(1), 1.0)
        lo, hi = win.window()
        assert lo == 0.0 and hi == 0.0

    def test_matches_pathwise_oracle_before_shocks(self):
        phi = cosine()
        H = quadratic(5.0)
        z = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 0.1]))
        win = characteristics_solution(H, phi, z, 0.0)
        M = 512
        res = pathwise_oracle(phi, z, H, [1.0], M)
        x = np.arange(M) * 2.0 / M
        assert np.max(np.abs(res.snapshots[0] - win.evaluate(x, 1.0))) < 1e-4


class TestFallback:
    def test_constant_exact(self):
        sp = SchemeSpec("lf_second_order", quadratic(), heat(0.1))

        def drv(h):
            d = build_driver("brownian_blocks", sample_brownian(0, 0.1, 2.0**-12), h, 0.5, 1.0, spec=sp)
            return d.partition, d.path

        res = reference_fallback(sp, constant(2.0), drv, 2.0**-3, 4, [0.1])
        np.testing.assert_allclose(res.snapshots[-1], 2.0, atol=1e-14)
        assert not res.exact

    def test_budget_error(self):
        sp = SchemeSpec("lf_first_order", eikonal())

        def drv(h):
            P = Partition(np.linspace(0, 1, 10_001))
            return P, PiecewisePath(np.array([0.0, 1.0]), np.zeros(2))

        with pytest.raises(BudgetError, match="budget"):
            reference_fallback(sp, sawtooth(), drv, 2.0**-4, 8, [1.0], max_work=1e5)
        with pytest.raises(ValueError):
            reference_fallback(sp, sawtooth(), drv, 2.0**-4, 2, [1.0])

    def test_agrees_with_exact_oracle(self):
        pr = get_problem("eikonal_sawtooth")
        sp = SchemeSpec("lf_first_order", pr.H)
        W = sample_brownian(2, 0.25, 2.0**-14)
        h = 2.0**-5

        def drv(hh):
            rho, P, Wh = regular_recipe(W, hh, 0.5, brownian_modulus())
            return P, Wh

        ref = reference_fallback(sp, pr.u0, drv, h, 8, [0.25])
        exact = pathwise_oracle(pr.u0, W, pr.H, [0.25], int(2.0 / ref.h))
        P, Wh = drv(h)
        coarse = evolve(sp, pr.u0, Wh, P, Grid1D(2.0, int(2.0 / h)))
        e_coarse = np.max(np.abs(coarse.final - exact.snapshots[-1][::8]))
        assert np.max(np.abs(ref.snapshots[-1] - exact.snapshots[-1])) <= 3 * e_coarse

    def test_richardson_self_consistency(self):
        pr = get_problem("quadratic_cosine_heat")
        sp = SchemeSpec("lf_second_order", pr.H, pr.F)
        W = sample_brownian(3, 0.25, 2.0**-14)

        def drv(hh):
            d = build_driver("brownian_blocks", W, hh, 1.0, 1.0, spec=sp)
            return d.partition, d.path

        h = 2.0**-4
        r4 = reference_fallback(sp, pr.u0, drv, h, 4, [0.25])
        r8 = reference_fallback(sp, pr.u0, drv, h, 8, [0.25])
        P, Wh = drv(h)
        d = build_driver("brownian_blocks", W, h, 1.0, 1.0, spec=sp)
        coarse = evolve(sp, pr.u0, d.path, d.partition, Grid1D(2.0, int(2.0 / h)), eps_h=d.eps_h)
        e_coarse = np.max(np.abs(coarse.final - r8.snapshots[-1][::8]))
        shift = np.max(np.abs(r4.snapshots[-1][::4] - r8.snapshots[-1][::8]))
        assert shift * 2 <= e_coarse
