import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from pathwise_hj.oracles import characteristics_solution, pathwise_oracle
from pathwise_hj.paths import CFLError, Partition, PiecewisePath, sample_brownian
from pathwise_hj.problems import constant, cosine, eikonal, get_problem, heat, linear_transport, quadratic, sawtooth
from pathwise_hj.schemes import (
    GridFunction,
    GuardError,
    Grid1D,
    SchemeSpec,
    discrete_lipschitz,
    evolve,
    lf_first_order_step,
    lf_second_order_step,
    trotter_kato_step,
    upwind_step,
    verify_consistency,
    verify_monotonicity,
    verify_scheme_properties,
)

EIK = SchemeSpec("lf_first_order", eikonal())
QUAD = SchemeSpec("lf_first_order", quadratic(1.0))


class TestGrid:
    def test_small_grid_rejected(self):
        with pytest.raises(ValueError):
            Grid1D(1.0, 3)

    def test_grid_function(self):
        g = Grid1D(2.0, 8)
        f = GridFunction(g, np.arange(8.0) * 0.25)
        assert f.lipschitz == pytest.approx(7 * 0.25 / 0.25)
        with pytest.raises(ValueError):
            GridFunction(g, np.zeros(7))


class TestSpecBuild:
    def test_lambda0(self):
        assert EIK.lambda0 == 1.0
        assert SchemeSpec("lf_first_order", eikonal(), theta=0.5).lambda0 == 0.5
        assert SchemeSpec("upwind", eikonal()).lambda0 == 0.5
        assert SchemeSpec("upwind", quadratic(2.0)).lambda0 == 0.25

    def test_rejections(self):
        with pytest.raises(ValueError, match="upwind"):
            SchemeSpec("upwind", linear_transport(1.0))
        with pytest.raises(ValueError, match="first order"):
            SchemeSpec("lf_first_order", quadratic(), heat(0.1))
        with pytest.raises(ValueError, match="Legendre"):
            SchemeSpec("trotter_kato", get_problem("concave_cosine").H)
        with pytest.raises(ValueError):
            SchemeSpec("lf_first_order", eikonal(), theta=0.0)
        with pytest.raises(ValueError):
            SchemeSpec("bogus", eikonal())


class TestLFFirstOrder:
    def test_constant(self):
        u = np.full(16, 3.0)
        out = lf_first_order_step(u, 0.05, SchemeSpec("lf_first_order", quadratic(1.0, 2.0)), 0.1)
        np.testing.assert_allclose(out, 3.0)

    def test_linear_interior(self):
        h = 0.05
        x = np.arange(40) * h
        p = 0.6
        u = p * x
        out = lf_first_order_step(u, 0.03, QUAD, h)
        np.testing.assert_allclose(out[1:-1], u[1:-1] + 0.5 * p * p * 0.03, atol=1e-15)

    @pytest.mark.parametrize("theta", [1.0, 0.6, 0.25])
    def test_spike_diffusion(self, theta):
        u = np.zeros(10)
        u[4] = 1.0
        out = lf_first_order_step(u, 0.0, SchemeSpec("lf_first_order", eikonal(), theta=theta), 0.1)
        assert out[4] == pytest.approx(1 - theta)
        assert out[3] == pytest.approx(theta / 2) and out[5] == pytest.approx(theta / 2)
        assert out.sum() == pytest.approx(1.0)

    def test_cfl_rejected_not_clipped(self):
        with pytest.raises(CFLError) as ei:
            lf_first_order_step(np.zeros(8), 0.2, EIK, 0.1)
        assert ei.value.ratio == pytest.approx(2.0)


class TestLFSecondOrder:
    def spec(self, nu=0.1, H=None):
        return SchemeSpec("lf_second_order", H or quadratic(1.0), heat(nu))

    def test_constant(self):
        out = lf_second_order_step(np.full(8, 2.0), 0.001, 0.001, 0.5, self.spec(), 0.1)
        np.testing.assert_allclose(out, 2.0)

    def test_fourier_mode(self):
        H0 = linear_transport(0.0)
        sp = SchemeSpec("lf_second_order", H0, heat(0.2))
        M, P = 64, 2.0
        h = P / M
        x = np.arange(M) * h
        u = np.cos(2 * math.pi * x / P)
        eps = 0.3
        dt = 0.8 * h * h / (2 * (0.2 + eps))
        out = lf_second_order_step(u, 0.0, dt, eps, sp, h)
        g = 1 - 2 * (0.2 + eps) * dt * (1 - math.cos(2 * math.pi * h / P)) / h**2
        np.testing.assert_allclose(out, g * u, atol=1e-14)

    def test_dt_zero_is_centered_transport(self):
        h = 0.1
        u = np.sin(np.arange(20) * h * math.pi)
        sp = self.spec()
        out = lf_second_order_step(u, 0.0, 0.0, 0.0, sp, h, check=False)
        np.testing.assert_array_equal(out, u)
        dz = 0.01
        out = lf_second_order_step(u, dz, 0.0, 0.0, sp, h, check=False)
        slope = (np.roll(u, -1) - np.roll(u, 1)) / (2 * h)
        np.testing.assert_allclose(out, u + quadratic(1.0)(slope) * dz, atol=1e-15)

    def test_guard_names_inequality(self):
        sp = self.spec()
        h = 0.1
        with pytest.raises(GuardError) as ei:
            lf_second_order_step(np.zeros(8), 0.0, 1.0, 0.5, sp, h)
        assert ei.value.which == "i"
        with pytest.raises(GuardError) as ei:
            lf_second_order_step(np.zeros(8), 0.05, 1e-3, 0.01, sp, h)
        assert ei.value.which == "ii"
        with pytest.raises(GuardError) as ei:
            lf_second_order_step(np.zeros(8), 0.0, 1e-3, -1.0, sp, h)
        assert ei.value.which == "iii"


class TestUpwind:
    spec = SchemeSpec("upwind", eikonal())

    def test_constant(self):
        np.testing.assert_allclose(upwind_step(np.full(8, 1.5), 0.04, self.spec, 0.1), 1.5)

    @pytest.mark.parametrize("sign", [1, -1])
    def test_dilation_erosion_direction(self, sign):
        M = 64
        h = 2.0 / M
        u = sawtooth(1.0, 2.0).sample(M)
        dz = sign * 0.5 * h
        out = upwind_step(u, dz, self.spec, h)
        # brute-force windowed extrema of the interpolant: max/min over |y - x| <= |dz|
        fine = np.interp(np.arange(4 * M) * h / 4, np.arange(M + 1) * h, np.append(u, u[0]))
        win = 2 * int(round(abs(dz) / (h / 4))) + 1
        if sign > 0:
            dil = maximum_filter1d(fine, win, mode="wrap")[::4]
            assert np.all(out >= u - 1e-15)
            assert np.all(out >= dil - 1e-15)
        else:
            ero = minimum_filter1d(fine, win, mode="wrap")[::4]
            assert np.all(out <= u + 1e-15)
            assert np.all(out <= ero + 1e-15)

    def test_exact_on_sawtooth_interior(self):
        # away from kinks the eikonal upwind step is exact transport by |dz|
        M = 64
        h = 2.0 / M
        u = sawtooth(1.0, 2.0).sample(M)
        dz = 0.5 * h
        out = upwind_step(u, dz, self.spec, h)
        mask = np.ones(M, bool)
        mask[[0, 1, M - 1, M // 2 - 1, M // 2, M // 2 + 1]] = False
        np.testing.assert_allclose(out[mask], u[mask] + dz, atol=1e-14)
        np.testing.assert_array_less(out[[M // 2]], u[M // 2] + dz)


class TestTrotterKato:
    def test_dt_zero_is_hopf_lax(self):
        pr = get_problem("quadratic_cosine")
        sp = SchemeSpec("trotter_kato", pr.H, heat(0.1))
        M = 64
        u = pr.u0.sample(M)
        out = trotter_kato_step(u, 0.0, 0.03, sp, 2.0 / M)
        path = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 0.03]))
        ref = pathwise_oracle(u, path, pr.H, [1.0], M, period=2.0).snapshots[-1]
        np.testing.assert_allclose(out, ref, atol=1e-14)

    def test_pure_heat_conserves_mass(self):
        sp = SchemeSpec("trotter_kato", quadratic(), heat(0.3))
        M = 64
        u = np.random.default_rng(0).uniform(-1, 1, M)
        out = trotter_kato_step(u, 0.05, 0.0, sp, 2.0 / M)
        assert out.mean() == pytest.approx(u.mean(), abs=1e-12)
        assert np.ptp(out) < np.ptp(u)

    def test_constant(self):
        sp = SchemeSpec("trotter_kato", quadratic(), heat(0.3))
        np.testing.assert_allclose(trotter_kato_step(np.full(16, 4.0), 0.01, -0.02, sp, 0.125), 4.0)


ALL_SPECS = [
    EIK,
    QUAD,
    SchemeSpec("lf_first_order", get_problem("smooth_cosine").H, theta=0.5),
    SchemeSpec("lf_first_order", get_problem("concave_cosine").H),
    SchemeSpec("upwind", eikonal()),
    SchemeSpec("upwind", quadratic()),
    SchemeSpec("lf_second_order", quadratic(), heat(0.1)),
    SchemeSpec("lf_second_order", quadratic(), get_problem("quadratic_cosine_degenerate").F),
    SchemeSpec("trotter_kato", quadratic(), heat(0.1)),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: f"{s.kind}-{s.H.name}-{s.F.name}")
def test_structural_properties(spec):
    rep = verify_scheme_properties(spec, 2.0**-5, 300, seed=3)
    assert rep.total == 0, rep


class TestMonotonicity:
    def test_lf_theta_one(self):
        rep = verify_monotonicity(EIK, 2.0**-5, 1000, seed=1)
        assert rep.violations == 0

    def test_bypass_guard_finds_violation(self):
        rep = verify_monotonicity(SchemeSpec("lf_first_order", quadratic()), 2.0**-5, 300, seed=2, scale=2.0,
                                  bypass_guard=True)
        assert rep.violations > 0

    @given(st.integers(0, 2**31), st.floats(-1, 1))
    def test_equal_inputs(self, seed, frac):
        u = np.random.default_rng(seed).uniform(-1, 1, 16)
        a = lf_first_order_step(u, frac * 0.1, EIK, 0.1)
        b = lf_first_order_step(u.copy(), frac * 0.1, EIK, 0.1)
        np.testing.assert_array_equal(a, b)


class TestConsistency:
    def test_quadratic_order_two(self):
        rep = verify_consistency(QUAD, cosine(1.0, 2.0), [2.0**-k for k in range(4, 10)])
        assert rep.slope >= 1.9

    def test_theta_only_step(self):
        # a zero increment leaves the theta diffusion, error ~ (theta/2) |phi''| h^2
        u0 = cosine(1.0, 2.0)
        errs = []
        hs = [2.0**-k for k in range(4, 9)]
        for h in hs:
            M = int(round(2.0 / h))
            out = lf_first_order_step(u0.sample(M), 0.0, EIK, h)
            errs.append(np.max(np.abs(out - u0.sample(M))))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.02)
        k = math.pi
        assert errs[-1] == pytest.approx(0.5 * k * hs[-1] ** 2, rel=1e-3)

    def test_constant_profile(self):
        rep = verify_consistency(QUAD, constant(1.0, 2.0), [0.1, 0.05, 0.025])
        np.testing.assert_array_equal(rep.errors, 0.0)


class TestEvolve:
    def test_single_step(self):
        grid = Grid1D(2.0, 32)
        P = Partition(np.array([0.0, 0.1]))
        z = PiecewisePath(P.times, np.array([0.0, 0.03]))
        rec = evolve(EIK, sawtooth(), z, P, grid, probe_times=[0.0])
        u0 = sawtooth().sample(32)
        np.testing.assert_array_equal(rec.snapshots[0], u0)
        np.testing.assert_array_equal(rec.final, lf_first_order_step(u0, 0.03, EIK, grid.h))

    def test_zero_path_diffusion_cascade(self):
        grid = Grid1D(2.0, 64)
        P = Partition(np.linspace(0, 1, 51))
        z = PiecewisePath(np.array([0.0, 1.0]), np.zeros(2))
        rec = evolve(EIK, sawtooth(), z, P, grid)
        assert np.all(np.diff(rec.vmax) <= 1e-15)
        assert np.all(np.diff(rec.vmin) >= -1e-15)

    def test_cfl_abort_names_interval(self):
        grid = Grid1D(2.0, 64)
        P = Partition(np.linspace(0, 1, 11))
        v = np.zeros(11)
        v[6:] = 0.05
        with pytest.raises(CFLError) as ei:
            evolve(EIK, sawtooth(), PiecewisePath(P.times, v), P, grid)
        assert ei.value.index == 5

    @pytest.mark.parametrize("name", ["eikonal_sawtooth", "eikonal_cosine", "quadratic_cosine", "smooth_cosine"])
    def test_lipschitz_preserved_brownian(self, name):
        from pathwise_hj.paths import brownian_modulus, regular_recipe

        pr = get_problem(name)
        spec = SchemeSpec("lf_first_order", pr.H)
        W = sample_brownian(4, 0.5, 2.0**-14)
        h = 2.0**-7
        rho, P, Wh = regular_recipe(W, h, 0.5 * spec.lambda0, brownian_modulus())
        rec = evolve(spec, pr.u0, Wh, P, Grid1D(pr.period, int(pr.period / h)))
        assert rec.lip_max <= pr.L + 1e-10

    def test_snapshot_csv(self, tmp_path):
        grid = Grid1D(2.0, 8)
        P = Partition(np.linspace(0, 1, 5))
        z = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, 0.2]))
        rec = evolve(EIK, sawtooth(), z, P, grid, probe_times=[0.5])
        f = tmp_path / "s.csv"
        rec.to_csv(f)
        lines = f.read_text().splitlines()
        assert lines[0] == "t,x,value" and len(lines) == 1 + 2 * 8


def test_discrete_lipschitz_wraps():
    u = np.array([0.0, 1.0, 2.0, 3.0])
    assert discrete_lipschitz(u, 1.0) == 3.0
