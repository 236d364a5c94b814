"""Driving signals and their regularizations.

A driver is stored as a :class:`PiecewisePath`: breakpoint times and
values, linearly interpolated in between.  The constructions here turn a
finely sampled path ``W`` into a pair ``(P_h, W_h)`` of a partition and a
milder path such that every per-step increment of ``W_h`` stays below
``lambda0 * h``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import bisect

from . import kernels

__all__ = [
    "CFLError",
    "PiecewisePath",
    "Partition",
    "StoppingTimeFamily",
    "CFLReport",
    "Modulus",
    "lipschitz_modulus",
    "holder_modulus",
    "brownian_modulus",
    "sample_brownian",
    "osc",
    "regularize_regular",
    "solve_rho_implicit",
    "regular_recipe",
    "stopping_eta",
    "stopping_time_partition",
    "scaled_random_walk",
    "check_cfl",
    "require_cfl",
    "empirical_holder_constant",
]


class CFLError(ValueError):
    """Raised when a (path, partition) pair violates ``|dzeta| <= lambda0 * h``."""

    def __init__(self, message: str, ratio: float = float("nan"), index: int = -1):
        super().__init__(message)
        self.ratio = ratio
        self.index = index


class NotAffineError(ValueError):
    """Raised when a path bends strictly inside a partition interval."""


@dataclass(frozen=True)
class PiecewisePath:
    """Continuous path on ``[0, T]`` given by its breakpoints.

    Parameters
    ----------
    times : ndarray, shape (n,)
        Strictly increasing breakpoint times, ``times[0] == 0``.
    values : ndarray, shape (n,) or (n, m)
        Values at the breakpoints. A 1-D array is promoted to one column.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v = np.ascontiguousarray(v)
        if t.ndim != 1 or t.shape[0] < 2:
            raise ValueError("a path needs at least two breakpoints")
        if v.shape[0] != t.shape[0]:
            raise ValueError("times and values disagree in length")
        if t[0] != 0.0:
            raise ValueError(f"first breakpoint must be at t=0, got {t[0]!r}")
        if not np.all(np.diff(t) > 0):
            raise ValueError("breakpoint times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        t.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def components(self) -> int:
        return int(self.values.shape[1])

    @property
    def scalar(self) -> np.ndarray:
        """Values of the first component (the driver used by the schemes)."""
        return self.values[:, 0]

    def __call__(self, t):
        """Evaluate by linear interpolation; returns shape ``t.shape + (m,)``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.horizon):
            raise ValueError("evaluation time outside [0, T]")
        out = np.stack([np.interp(t, self.times, self.values[:, j]) for j in range(self.components)], axis=-1)
        return out

    def at(self, t) -> np.ndarray:
        """First-component values at ``t``."""
        return self(t)[..., 0]

    def sup_distance(self, other: "PiecewisePath") -> float:
        """Exact ``max_t |self(t) - other(t)|`` (attained at a breakpoint of either path)."""
        if not math.isclose(self.horizon, other.horizon, rel_tol=0, abs_tol=1e-12 * max(1.0, self.horizon)):
            raise ValueError("paths have different horizons")
        grid = np.union1d(self.times, np.minimum(other.times, self.horizon))
        return float(np.max(np.abs(self(grid) - other(grid))))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# components={self.components} horizon={self.horizon!r}\n")
            w = csv.writer(fh)
            w.writerow(["time"] + [f"w{j}" for j in range(self.components)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "PiecewisePath":
        with open(path, newline="") as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise ValueError("missing '# components=.. horizon=..' header line")
            meta = dict(kv.split("=", 1) for kv in first[1:].split())
            data = np.loadtxt(fh, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] - 1 != int(meta["components"]):
            raise ValueError("component count in header does not match the columns")
        out = cls(data[:, 0], data[:, 1:])
        if not math.isclose(out.horizon, float(meta["horizon"]), rel_tol=1e-15):
            raise ValueError("horizon in header does not match the last breakpoint")
        return out


@dataclass(frozen=True)
class Partition:
    """Time grid ``0 = t_0 < ... < t_N = T``."""

    times: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=float)
        if t.ndim != 1 or t.shape[0] < 2 or t[0] != 0.0:
            raise ValueError("a partition starts at 0 and has at least one interval")
        if not np.all(np.diff(t) > 0):
            raise ValueError("partition times must be strictly increasing")
        t.flags.writeable = False
        object.__setattr__(self, "times", t)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def N(self) -> int:
        return self.times.shape[0] - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def mesh(self) -> float:
        return float(self.steps.max())

    @property
    def sum_sq(self) -> float:
        return float(np.sum(self.steps**2))


@dataclass(frozen=True)
class StoppingTimeFamily:
    """Oscillation stopping times ``T_1 < T_2 < ...`` below the horizon.

    ``times`` excludes ``T_0 = 0``; ``K`` is the number of completed blocks.
    """

    times: np.ndarray
    eta: float
    dt_fine: float
    M: int

    @property
    def K(self) -> int:
        return int(self.times.shape[0])

    @property
    def taus(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.times)))


@dataclass(frozen=True)
class Modulus:
    """Nondecreasing modulus of continuity ``omega`` with ``omega(0) = 0``."""

    func: Callable[[float], float]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, r: float) -> float:
        return self.func(r)


def lipschitz_modulus(C: float = 1.0) -> Modulus:
    return Modulus(lambda r: C * r, "lipschitz", {"C": C})


def holder_modulus(alpha: float, C: float = 1.0) -> Modulus:
    if not 0.0 < alpha <= 1.0:
        raise ValueError("Hölder exponent must lie in (0, 1]")
    return Modulus(lambda r: C * r**alpha, "holder", {"alpha": alpha, "C": C})


def brownian_modulus() -> Modulus:
    """``omega(r) = sqrt(r |log r^2|)``, held constant for ``r > 1/e`` to stay monotone.

    With this choice ``rho^{1/2} omega(rho^{1/2}) = rho^{3/4} |log rho|^{1/2}``.
    """
    cap = math.exp(-1.0)

    def f(r):
        r = min(r, cap)
        return 0.0 if r <= 0.0 else math.sqrt(r * abs(math.log(r * r)))

    return Modulus(f, "brownian")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def sample_brownian(seed: int, T: float, dt_fine: float, components: int = 1) -> PiecewisePath:
    """Standard Brownian motion sampled at ``k * dt_fine`` and interpolated linearly.

    Increments are ``sqrt(dt) * Z`` with ``Z`` drawn by numpy's PCG64
    ``standard_normal`` (ziggurat).  If ``T`` is not a multiple of
    ``dt_fine`` the final step is shorter.
    """
    if not (T > 0.0 and dt_fine > 0.0):
        raise ValueError("T and dt_fine must be positive")
    n = int(math.floor(T / dt_fine + 1e-9))
    times = np.arange(n + 1) * dt_fine
    if times[-1] < T * (1 - 1e-12):
        times = np.append(times, T)
    else:
        times[-1] = T
    steps = np.diff(times)
    z = _rng(seed).standard_normal((steps.shape[0], components))
    vals = np.vstack([np.zeros((1, components)), np.cumsum(z * np.sqrt(steps)[:, None], axis=0)])
    return PiecewisePath(times, vals)


def osc(path: PiecewisePath, s: float, t: float) -> float:
    """Oscillation ``max - min`` of the path over ``[min(s,t), max(s,t)]``.

    Exact for piecewise-linear paths.  For ``m > 1`` the largest
    componentwise oscillation is returned.
    """
    a, b = min(s, t), max(s, t)
    if a < 0.0 or b > path.horizon:
        raise ValueError(f"interval [{a}, {b}] outside [0, {path.horizon}]")
    lo = np.searchsorted(path.times, a, side="right")
    hi = np.searchsorted(path.times, b, side="left")
    pts = np.vstack([path(np.array([a, b])), path.values[lo:hi]])
    return float(np.max(pts.max(axis=0) - pts.min(axis=0)))


def _block_knots(partition_times: np.ndarray, M: int) -> np.ndarray:
    knots = partition_times[::M]
    if knots[-1] != partition_times[-1]:
        knots = np.append(knots, partition_times[-1])
    return knots


def _regular_partition(rho: float, T: float) -> np.ndarray:
    n = int(math.ceil(T / rho - 1e-9))
    times = np.arange(n + 1) * rho
    times[-1] = T
    if times.shape[0] > 2 and times[-1] - times[-2] <= 1e-12 * rho:
        times = np.delete(times, -2)
    return times


def regularize_regular(W: PiecewisePath, rho: float, T: float | None = None) -> tuple[Partition, PiecewisePath]:
    """Regular partition ``{n rho ^ T}`` and the block interpolant of ``W``.

    ``W_h`` interpolates ``W`` linearly between the block knots
    ``k M rho ^ T`` with ``M = floor(rho^{-1/2})``.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1); got {rho!r} (M_h undefined)")
    T = W.horizon if T is None else float(T)
    if T > W.horizon * (1 + 1e-12):
        raise ValueError("horizon beyond the sampled path")
    M = int(math.floor(rho**-0.5))
    times = _regular_partition(rho, T)
    knots = _block_knots(times, M)
    return Partition(times), PiecewisePath(knots, W(knots))


def solve_rho_implicit(omega: Callable[[float], float], h: float, lam: float) -> float:
    """Solve ``rho^{1/2} omega(rho^{1/2}) = lam * h`` by bisection on ``[0, 1]``."""
    if h <= 0.0 or lam <= 0.0:
        raise ValueError("h and lambda must be positive")
    target = lam * h

    def f(r):
        q = math.sqrt(r)
        return q * omega(q) - target

    if f(1.0) < 0.0:
        raise ValueError(f"no root in [0, 1]: h={h} is too large for this modulus")
    rho = bisect(f, 0.0, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=4000)
    if abs(f(rho)) > 1e-12 * target:
        raise ValueError(f"bisection residual {abs(f(rho))} above tolerance")
    return float(rho)


def regular_recipe(W: PiecewisePath, h: float, lam: float, omega: Callable[[float], float]):
    """Solve for ``rho_h`` then build the regular ``(P_h, W_h)``; returns ``(rho, P_h, W_h)``."""
    rho = solve_rho_implicit(omega, h, lam)
    P, Wh = regularize_regular(W, rho)
    return rho, P, Wh


def stopping_eta(h: float) -> float:
    """Oscillation threshold ``h^{1/3} |log h|^{-2/3}``."""
    return h ** (1.0 / 3.0) * abs(math.log(h)) ** (-2.0 / 3.0)


def stopping_time_partition(W: PiecewisePath, h: float, lambda0: float, fine_factor: float = 64.0):
    """Oscillation stopping times, the subdivided partition and the interpolant.

    Crossing times are located exactly on the piecewise-linear ``W``, so
    ``|W(T_{k+1}) - W(T_k)| = eta_h`` and every partition increment equals
    ``eta_h / M_h <= lambda0 * h``.  The trailing block ``[T_K, T]`` is
    split into ``M_h`` steps as well.

    Returns
    -------
    family : StoppingTimeFamily
    partition : Partition
    Wh : PiecewisePath
    """
    if not 0.0 < h < math.exp(-1.0):
        raise ValueError("stopping-time construction needs 0 < h < 1/e")
    eta = stopping_eta(h)
    dt_fine = float(np.max(np.diff(W.times)))
    if dt_fine > eta**2 / fine_factor * (1 + 1e-9):
        raise ValueError(f"fine resolution {dt_fine:.3g} coarser than eta^2/{fine_factor:g} = {eta**2 / fine_factor:.3g}")
    M = int(math.ceil(eta / (lambda0 * h)))
    T = W.horizon
    Tk = kernels.stopping_times(W.times, np.ascontiguousarray(W.scalar), eta, T)
    knots = np.concatenate(([0.0], Tk))
    if T - knots[-1] > 1e-14 * max(T, 1.0):
        knots = np.append(knots, T)
    else:
        knots[-1] = T
    frac = np.arange(M) / M
    times = (knots[:-1, None] + frac[None, :] * np.diff(knots)[:, None]).ravel()
    times = np.append(times, T)
    fam = StoppingTimeFamily(Tk, eta, dt_fine, M)
    return fam, Partition(times), PiecewisePath(knots, W(knots))


def scaled_random_walk(seed: int, h: float, lam: float, lambda0: float, T: float):
    """Parabolically scaled simple random walk ``(P_h, W_h)``.

    ``rho_h = (lam h)^{4/3}``, blocks of ``M_h = floor(rho^{-1/2})`` steps,
    block slopes ``+-(M rho)^{-1/2}``.  Per-step increments are
    ``sqrt(rho/M)``, slightly above ``rho^{3/4}``, so the result is
    re-checked against ``lambda0``.

    Returns
    -------
    rho : float
    partition : Partition
    Wh : PiecewisePath
    """
    if lam > lambda0:
        raise CFLError(f"lambda={lam} exceeds lambda0={lambda0}", lam / lambda0)
    rho = (lam * h) ** (4.0 / 3.0)
    if not rho < 1.0:
        raise ValueError("h too large: rho_h >= 1")
    M = int(math.floor(rho**-0.5))
    times = _regular_partition(rho, T)
    knots = _block_knots(times, M)
    xi = _rng(seed).integers(0, 2, size=knots.shape[0] - 1) * 2.0 - 1.0
    slope = 1.0 / math.sqrt(M * rho)
    vals = np.concatenate(([0.0], np.cumsum(xi * slope * np.diff(knots))))
    P = Partition(times)
    Wh = PiecewisePath(knots, vals)
    require_cfl(Wh, P, h, lambda0)
    return rho, P, Wh


@dataclass(frozen=True)
class CFLReport:
    ok: bool
    worst_ratio: float
    worst_index: int


def check_cfl(path: PiecewisePath, partition: Partition, h: float, lambda0: float, rtol: float = 1e-9) -> CFLReport:
    """Check that ``path`` is affine on every partition interval and ``|dzeta| <= lambda0 h``.

    Raises
    ------
    NotAffineError
        If a breakpoint with a genuine slope change lies strictly inside a
        partition interval.
    """
    pt = partition.times
    bt = path.times
    inside = np.searchsorted(pt, bt, side="left")
    # breakpoints that do not coincide with a partition time
    on = (inside < pt.shape[0]) & np.isclose(pt[np.minimum(inside, pt.shape[0] - 1)], bt, rtol=0, atol=1e-12 * max(1.0, pt[-1]))
    off = np.flatnonzero(~on & (bt < pt[-1]))
    if off.size:
        j = inside[off]
        t0, t1 = pt[j - 1], pt[j]
        v0, v1 = path(t0), path(t1)
        w = ((bt[off] - t0) / (t1 - t0))[:, None]
        bend = np.abs(path.values[off] - ((1 - w) * v0 + w * v1)).max(axis=1)
        scale = 1e-10 * max(1.0, float(np.abs(path.values).max()))
        bad = np.flatnonzero(bend > scale)
        if bad.size:
            k = int(j[bad[0]] - 1)
            raise NotAffineError(f"path bends inside partition interval {k} [{pt[k]}, {pt[k + 1]}]")
    inc = np.abs(np.diff(path(pt), axis=0)).max(axis=1)
    ratio = inc / (lambda0 * h)
    k = int(np.argmax(ratio))
    worst = float(ratio[k])
    return CFLReport(bool(worst <= 1.0 + rtol), worst, k)


def require_cfl(path: PiecewisePath, partition: Partition, h: float, lambda0: float) -> CFLReport:
    rep = check_cfl(path, partition, h, lambda0)
    if not rep.ok:
        raise CFLError(
            f"CFL violated at h={h:g}: interval {rep.worst_index} has |dzeta|/(lambda0 h) = {rep.worst_ratio:.6g}",
            rep.worst_ratio,
            rep.worst_index,
        )
    return rep


def empirical_holder_constant(W: PiecewisePath, alpha: float) -> float:
    """``max |W(t) - W(s)| / |t - s|^alpha`` over all pairs of breakpoints (uniform sampling assumed)."""
    dt = np.diff(W.times)
    if not np.allclose(dt, dt[0], rtol=1e-9):
        raise ValueError("empirical Hölder constant expects uniformly sampled breakpoints")
    w = np.ascontiguousarray(W.scalar[: dt.shape[0] + 1])
    return float(kernels.holder_constant(w, float(dt[0]), float(alpha)))
