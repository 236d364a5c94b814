"""Monotone scheme operators on periodic 1-D grids and the time-stepping driver.

Four operators are provided: the first-order Lax-Friedrichs step with
numerical diffusion ``theta``, the second-order (parabolic) Lax-Friedrichs
step with artificial viscosity ``eps_h``, an upwind step for Hamiltonians
with ``H >= H(0) = 0`` and the Trotter-Kato splitting that follows an exact
Hopf-Lax step with substepped diffusion.  Every step checks its
monotonicity guard and raises instead of clipping the driver increment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._codes import SCHEME_LF1, SCHEME_LF2, SCHEME_TK, SCHEME_UPWIND
from .paths import CFLError, Partition, PiecewisePath, check_cfl, osc
from .problems import Diffusion, Hamiltonian, InitialData, no_diffusion

__all__ = [
    "SCHEME_KINDS",
    "GuardError",
    "Grid1D",
    "GridFunction",
    "SchemeSpec",
    "EvolveRecord",
    "lf_first_order_step",
    "lf_second_order_step",
    "upwind_step",
    "trotter_kato_step",
    "step",
    "second_order_guard",
    "second_order_eps",
    "evolve",
    "verify_monotonicity",
    "MonotonicityReport",
    "verify_scheme_properties",
    "PropertyReport",
    "verify_consistency",
    "ConsistencyReport",
    "discrete_lipschitz",
]

SCHEME_KINDS = ("lf_first_order", "lf_second_order", "trotter_kato", "upwind")
_CODES = {
    "lf_first_order": SCHEME_LF1,
    "lf_second_order": SCHEME_LF2,
    "upwind": SCHEME_UPWIND,
    "trotter_kato": SCHEME_TK,
}
_RTOL = 1e-9


class GuardError(CFLError):
    """A second-order monotonicity inequality failed; ``which`` is ``'i'``, ``'ii'`` or ``'iii'``."""

    def __init__(self, message, which, ratio=float("nan"), index=-1):
        super().__init__(message, ratio, index)
        self.which = which


@dataclass(frozen=True)
class Grid1D:
    """Periodic grid ``x_i = i h``, ``i = 0..M-1``, ``h = P / M``."""

    period: float
    M: int

    def __post_init__(self):
        if self.M < 4:
            raise ValueError("a periodic grid needs at least 4 nodes")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def h(self) -> float:
        return self.period / self.M

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) * self.h


@dataclass(frozen=True)
class GridFunction:
    grid: Grid1D
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise ValueError("values do not match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def lipschitz(self) -> float:
        return discrete_lipschitz(self.values, self.grid.h)


def discrete_lipschitz(u: np.ndarray, h: float) -> float:
    """``max_i |u_{i+1} - u_i| / h`` with periodic wrap."""
    return float(np.max(np.abs(np.roll(u, -1) - u))) / h


@dataclass(frozen=True)
class SchemeSpec:
    """Scheme choice with its parameters.

    Parameters
    ----------
    kind : str
        One of ``SCHEME_KINDS``.
    H : Hamiltonian
    F : Diffusion
        Must be zero for the two first-order schemes.
    theta : float
        Numerical diffusion in ``(0, 1]`` for ``lf_first_order``.
    eps_factor : float
        ``eps_h = eps_factor * h * ||dW_h/dt||`` for ``lf_second_order``.
    """

    kind: str
    H: Hamiltonian
    F: Diffusion = field(default_factory=no_diffusion)
    theta: float = 1.0
    eps_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in _CODES:
            raise ValueError(f"unknown scheme {self.kind!r}; choose from {SCHEME_KINDS}")
        if not self.H.has_kernel:
            raise ValueError(f"Hamiltonian {self.H.name!r} has no compiled kernel")
        if not self.F.monotone:
            raise ValueError("diffusion is not degenerate elliptic (F must be nondecreasing)")
        if self.kind == "lf_first_order" and not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.kind in ("lf_first_order", "upwind") and not self.F.is_zero:
            raise ValueError(f"{self.kind} is first order; use lf_second_order or trotter_kato with F != 0")
        if self.kind == "upwind" and not self.H.monotone_structure:
            raise ValueError(f"upwind needs H >= H(0) = 0, increasing for p > 0; {self.H.name!r} lacks it")
        if self.kind == "trotter_kato" and not (self.H.convex and self.H.has_legendre):
            raise ValueError(f"trotter_kato needs a convex H with a Legendre transform; {self.H.name!r} has none")
        if self.kind == "lf_second_order" and not self.eps_factor > 0:
            raise ValueError("eps_factor must be positive")

    @property
    def code(self) -> int:
        return _CODES[self.kind]

    @property
    def lambda0(self) -> float:
        """Largest admissible ``|dzeta| / h``.

        ``theta/||H'||`` for Lax-Friedrichs, ``1/(2||H'||)`` for upwind.  The
        second-order scheme is governed by its own guards and the
        Trotter-Kato step is exact in ``zeta``; both report ``1/||H'||`` as
        the nominal value used to build regularized drivers.
        """
        lip = self.H.lipschitz_bound
        if lip == 0.0:
            return math.inf
        if self.kind == "lf_first_order":
            return self.theta / lip
        if self.kind == "upwind":
            return 0.5 / lip
        return 1.0 / lip

    @property
    def enforces_path_cfl(self) -> bool:
        return self.kind in ("lf_first_order", "upwind")


def _guard_increment(spec: SchemeSpec, dzeta: float, h: float) -> None:
    lim = spec.lambda0 * h
    if abs(dzeta) > lim * (1 + _RTOL):
        raise CFLError(
            f"{spec.kind}: |dzeta| = {abs(dzeta):.6g} exceeds lambda0*h = {lim:.6g}", abs(dzeta) / lim
        )


def second_order_eps(spec: SchemeSpec, h: float, dz: np.ndarray, dt: np.ndarray) -> float:
    """``eps_h = eps_factor * h * max |dz/dt|`` over the partition."""
    speed = float(np.max(np.abs(np.asarray(dz) / np.asarray(dt)))) if np.size(dz) else 0.0
    return spec.eps_factor * h * speed


def second_order_guard(spec: SchemeSpec, h: float, dz, dt, eps: float) -> None:
    """Check the three monotonicity inequalities of the second-order step.

    (i) ``dt (||F'|| + eps) 2 / h^2 <= 1``;
    (ii) ``||H'|| |dz| / (2h) <= dt eps / h^2``;
    (iii) ``eps >= 0`` and finite.

    Raises
    ------
    GuardError
        Naming the failed inequality and the first offending step.
    """
    if not (eps >= 0.0 and math.isfinite(eps)):
        raise GuardError(f"(iii) eps_h = {eps!r} must be finite and nonnegative", "iii")
    dz = np.atleast_1d(np.asarray(dz, dtype=float))
    dt = np.atleast_1d(np.asarray(dt, dtype=float))
    r1 = dt * (spec.F.derivative_bound + eps) * 2.0 / h**2
    bad = np.flatnonzero(r1 > 1.0 + _RTOL)
    if bad.size:
        k = int(bad[0])
        raise GuardError(f"(i) dt (||F'|| + eps) 2/h^2 = {r1[k]:.6g} > 1 at step {k}", "i", float(r1[k]), k)
    lhs = spec.H.lipschitz_bound * np.abs(dz) / (2.0 * h)
    rhs = dt * eps / h**2
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(lhs > 0, lhs / rhs, 0.0)
    bad = np.flatnonzero(lhs > rhs * (1 + _RTOL))
    if bad.size:
        k = int(bad[0])
        raise GuardError(f"(ii) ||H'|| |dz|/(2h) exceeds dt eps/h^2 (ratio {r2[k]:.6g}) at step {k}", "ii", float(r2[k]), k)


def _arr(u) -> np.ndarray:
    if isinstance(u, GridFunction):
        u = u.values
    return np.ascontiguousarray(u, dtype=float)


def lf_first_order_step(u, dzeta: float, spec: SchemeSpec, h: float, check: bool = True) -> np.ndarray:
    """``u + H((u_+ - u_-)/2h) dzeta + theta/2 (u_+ + u_- - 2u)``."""
    if check:
        _guard_increment(spec, dzeta, h)
    u = _arr(u)
    out = np.empty_like(u)
    kernels.lf1_step(u, float(dzeta), float(spec.theta), spec.H.kind, spec.H.params, float(h), out)
    return out


def lf_second_order_step(u, dzeta: float, dt: float, eps_h: float, spec: SchemeSpec, h: float, check: bool = True) -> np.ndarray:
    """``u + H(D_0 u) dzeta + (F(D^2 u) + eps_h D^2 u) dt``."""
    if check:
        second_order_guard(spec, h, dzeta, dt, eps_h)
    u = _arr(u)
    out = np.empty_like(u)
    kernels.lf2_step(u, float(dzeta), float(dt), float(eps_h), spec.H.kind, spec.H.params,
                     spec.F.kind, spec.F.params, float(h), out)
    return out


def upwind_step(u, dzeta: float, spec: SchemeSpec, h: float, check: bool = True) -> np.ndarray:
    """``u + [H(p+) + H(q-)] dzeta+ - [H(q+) + H(p-)] dzeta-`` with ``p = D^+ u``, ``q = D^- u``.

    Here ``x+ = max(x, 0)`` and ``x- = min(x, 0)`` inside ``H``, while
    ``dzeta+-`` are the magnitudes of the positive and negative parts.
    """
    if check:
        _guard_increment(spec, dzeta, h)
    u = _arr(u)
    out = np.empty_like(u)
    kernels.upwind_step(u, float(dzeta), spec.H.kind, spec.H.params, float(h), out)
    return out


def trotter_kato_step(u, dt: float, dzeta: float, spec: SchemeSpec, h: float) -> np.ndarray:
    """Exact Hopf-Lax step for ``dzeta`` followed by substepped diffusion for ``dt``."""
    if spec.kind != "trotter_kato":
        raise ValueError("spec is not a trotter_kato spec")
    u = _arr(u)
    out = np.empty_like(u)
    kernels.tk_step(u, float(dzeta), float(dt), spec.H.kind, spec.H.params,
                    spec.F.kind, spec.F.params, float(h), out)
    return out


def step(u, spec: SchemeSpec, h: float, dzeta: float, dt: float = 0.0, eps_h: float = 0.0, check: bool = True) -> np.ndarray:
    """Dispatch one step of ``spec.kind``."""
    if spec.kind == "lf_first_order":
        return lf_first_order_step(u, dzeta, spec, h, check)
    if spec.kind == "lf_second_order":
        return lf_second_order_step(u, dzeta, dt, eps_h, spec, h, check)
    if spec.kind == "upwind":
        return upwind_step(u, dzeta, spec, h, check)
    return trotter_kato_step(u, dt, dzeta, spec, h)


@dataclass
class EvolveRecord:
    """Snapshots of ``v_h`` at the requested probe times.

    ``probe_times`` are partition times (requests are snapped to the
    nearest one); ``vmax``/``vmin`` hold the discrete extrema after every
    step and ``lip_max`` the largest discrete Lipschitz constant seen.
    """

    grid: Grid1D
    partition: Partition
    probe_steps: np.ndarray
    probe_times: np.ndarray
    snapshots: np.ndarray
    lip_max: float
    vmax: np.ndarray
    vmin: np.ndarray
    eps_h: float
    periodic_margin_ok: bool
    scheme: str

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]

    def to_csv(self, path) -> None:
        """Write columns ``t,x,value`` (one row per probe time and node)."""
        x = self.grid.x
        with open(path, "w") as fh:
            fh.write("t,x,value\n")
            for t, snap in zip(self.probe_times, self.snapshots):
                for xi, v in zip(x, snap):
                    fh.write(f"{t:.17g},{xi:.17g},{v:.17g}\n")


def snap_probe_steps(partition: Partition, probe_times) -> np.ndarray:
    """Partition indices closest to each requested time, sorted, with the final index added."""
    pt = partition.times
    idx = [] if probe_times is None else [int(np.argmin(np.abs(pt - t))) for t in np.atleast_1d(probe_times)]
    idx.append(partition.N)
    return np.array(sorted(set(idx)), dtype=np.int64)


def evolve(spec: SchemeSpec, u0, zeta: PiecewisePath, partition: Partition, grid: Grid1D,
           probe_times=None, eps_h: float | None = None, check: bool = True) -> EvolveRecord:
    """Iterate the scheme over ``partition`` driven by ``zeta``.

    Parameters
    ----------
    spec : SchemeSpec
    u0 : InitialData or ndarray
        Sampled on ``grid`` if callable.
    zeta : PiecewisePath
        Must be affine on each partition interval.
    partition : Partition
    grid : Grid1D
    probe_times : array_like, optional
        Times at which to keep snapshots (snapped to partition times).  The
        final time is always kept.
    eps_h : float, optional
        Artificial viscosity for ``lf_second_order``; defaults to the
        ``eps_factor * h * ||dzeta/dt||`` rule.

    Raises
    ------
    CFLError
        On the first offending interval; nothing is clipped.
    """
    h = grid.h
    v0 = u0.sample(grid.M) if isinstance(u0, InitialData) else _arr(u0)
    if v0.shape != (grid.M,):
        raise ValueError("initial data does not match the grid")
    zt = np.ascontiguousarray(zeta.at(partition.times))
    dz = np.ascontiguousarray(np.diff(zt))
    dt = np.ascontiguousarray(partition.steps)
    if check:
        rep = check_cfl(zeta, partition, h, spec.lambda0 if math.isfinite(spec.lambda0) else 1.0)
        if spec.enforces_path_cfl and not rep.ok:
            raise CFLError(
                f"{spec.kind}: CFL violated on interval {rep.worst_index} at h={h:g} "
                f"(|dzeta|/(lambda0 h) = {rep.worst_ratio:.6g})",
                rep.worst_ratio,
                rep.worst_index,
            )
    eps = 0.0
    if spec.kind == "lf_second_order":
        eps = second_order_eps(spec, h, dz, dt) if eps_h is None else float(eps_h)
        if check:
            second_order_guard(spec, h, dz, dt, eps)
    probe_steps = snap_probe_steps(partition, probe_times)
    snaps, lip, vmax, vmin = kernels.evolve(
        v0, dz, dt, spec.code, float(spec.theta), float(eps), spec.H.kind, spec.H.params,
        spec.F.kind, spec.F.params, float(h), probe_steps,
    )
    swing = osc(zeta, 0.0, partition.horizon)
    margin_ok = max(float(np.max(np.abs(np.diff(v0)))) / h, 0.0) * spec.H.lipschitz_bound * swing < grid.period / 4
    return EvolveRecord(grid, partition, probe_steps, partition.times[probe_steps], snaps, float(lip),
                        vmax, vmin, eps, bool(margin_ok), spec.kind)


@dataclass(frozen=True)
class MonotonicityReport:
    trials: int
    violations: int
    worst: float


def _random_admissible(spec: SchemeSpec, h: float, rng: np.random.Generator, scale: float):
    """Draw ``(dzeta, dt, eps)`` satisfying the spec's guard (scaled by ``scale``)."""
    if spec.kind == "lf_second_order":
        eps = rng.uniform(0.05, 1.0)
        dt = h * h / (2.0 * (spec.F.derivative_bound + eps))
        lim = 2.0 * dt * eps / (spec.H.lipschitz_bound * h) if spec.H.lipschitz_bound > 0 else 1.0
        return rng.uniform(-1, 1) * lim * scale, dt, eps
    lam = spec.lambda0 if math.isfinite(spec.lambda0) else 1.0
    dt = rng.uniform(0.0, h * h) if spec.kind == "trotter_kato" else 0.0
    return rng.uniform(-1, 1) * lam * h * scale, dt, 0.0


def verify_monotonicity(spec: SchemeSpec, h: float, trials: int, seed: int, M: int = 32,
                        scale: float = 1.0, bypass_guard: bool = False) -> MonotonicityReport:
    """Randomized check that ``u1 <= u2`` implies ``step(u1) <= step(u2)``.

    ``scale > 1`` with ``bypass_guard=True`` pushes the increment beyond the
    guard to show that violations then appear.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    bad = 0
    for _ in range(trials):
        u1 = rng.uniform(-1.0, 1.0, M) * h * M * rng.uniform(0.1, 2.0)
        mask = rng.random(M) < rng.uniform(0.05, 1.0)
        u2 = u1 + mask * rng.exponential(h, M)
        dz, dt, eps = _random_admissible(spec, h, rng, scale)
        a = step(u1, spec, h, dz, dt, eps, check=not bypass_guard)
        b = step(u2, spec, h, dz, dt, eps, check=not bypass_guard)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(u2))))
        v = float(np.max(a - b))
        worst = max(worst, v)
        bad += v > tol
    return MonotonicityReport(trials, int(bad), worst)


@dataclass(frozen=True)
class PropertyReport:
    """Violation counts of the structural scheme properties over random trials."""

    trials: int
    monotonicity: int
    contraction: int
    constant_commutation: int
    translation_commutation: int
    worst: dict

    @property
    def total(self) -> int:
        return self.monotonicity + self.contraction + self.constant_commutation + self.translation_commutation


def verify_scheme_properties(spec: SchemeSpec, h: float, trials: int, seed: int, M: int = 32,
                             tol: float = 1e-12) -> PropertyReport:
    """Randomized admissible steps checked for the four structural properties.

    For random ``u1 <= u2``, a random pair ``(v, w)``, a constant ``k`` and
    a node shift ``j``:

    * monotonicity: ``S(u1) <= S(u2)``;
    * contraction: ``max(S(v) - S(w)) <= max(v - w)``;
    * constant commutation: ``S(v + k) = S(v) + k``;
    * translation commutation: ``S(roll(v, j)) = roll(S(v), j)``.

    Tolerances are ``tol`` times the magnitude of the values involved.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    bad = dict(monotonicity=0, contraction=0, constant_commutation=0, translation_commutation=0)
    worst = dict.fromkeys(bad, 0.0)

    def record(name, excess, scale):
        worst[name] = max(worst[name], excess)
        bad[name] += excess > tol * max(1.0, scale)

    for _ in range(trials):
        amp = h * M * rng.uniform(0.1, 2.0)
        u1 = rng.uniform(-1.0, 1.0, M) * amp
        u2 = u1 + (rng.random(M) < rng.uniform(0.05, 1.0)) * rng.exponential(h, M)
        w = rng.uniform(-1.0, 1.0, M) * amp
        k = rng.uniform(-10.0, 10.0)
        j = int(rng.integers(1, M))
        dz, dt, eps = _random_admissible(spec, h, rng, 1.0)

        def S(v):
            return step(v, spec, h, dz, dt, eps)

        s1, s2, sw = S(u1), S(u2), S(w)
        mag = float(max(np.max(np.abs(u2)), np.max(np.abs(w)), abs(k)))
        record("monotonicity", float(np.max(s1 - s2)), mag)
        record("contraction", float(np.max(s1 - sw) - np.max(u1 - w)), mag)
        record("constant_commutation", float(np.max(np.abs(S(u1 + k) - (s1 + k)))), mag)
        record("translation_commutation", float(np.max(np.abs(S(np.roll(u1, j)) - np.roll(s1, j)))), mag)
    return PropertyReport(trials, worst=worst, **bad)


@dataclass(frozen=True)
class ConsistencyReport:
    h_list: np.ndarray
    errors: np.ndarray
    slope: float


def verify_consistency(spec: SchemeSpec, u0: InitialData, h_list, cfl_fraction: float = 0.5, period: float | None = None) -> ConsistencyReport:
    """One-step truncation error against the characteristics solution.

    For each ``h`` a single step with ``dzeta = cfl_fraction * lambda0 * h``
    is applied to the exact profile ``phi = u0`` and compared with
    ``Phi(., dzeta)`` from the method of characteristics.
    """
    from .oracles import characteristics_solution

    h_list = np.asarray(h_list, dtype=float)
    P = u0.period if period is None else period
    errs = []
    for h in h_list:
        M = int(round(P / h))
        grid = Grid1D(P, M)
        dz = cfl_fraction * min(spec.lambda0, 1.0 / max(spec.H.lipschitz_bound, 1e-300)) * grid.h
        path = PiecewisePath(np.array([0.0, 1.0]), np.array([0.0, dz]))
        win = characteristics_solution(spec.H, u0, path, 0.0)
        exact = win.evaluate(grid.x, 1.0)
        dt = 0.0
        eps = 0.0
        if spec.kind == "lf_second_order":
            eps = spec.eps_factor * grid.h * abs(dz)
            dt = 1.0 if eps == 0 else min(1.0, grid.h**2 / (2.0 * (spec.F.derivative_bound + eps)))
        approx = step(u0.sample(M), spec, grid.h, dz, dt, eps)
        errs.append(float(np.max(np.abs(approx - exact))))
    errs = np.array(errs)
    pos = errs > 0
    slope = float(np.polyfit(np.log(h_list[pos]), np.log(errs[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    return ConsistencyReport(h_list, errs, slope)
