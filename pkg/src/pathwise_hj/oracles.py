"""Reference solutions.

For convex ``H`` and ``F = 0`` the solution driven by a piecewise-linear
path is a composition of Hopf-Lax semigroup steps, one per monotone run
of the path.  Runs are first reduced with the identity

    S(a) S(-b) S(c) = S(a - b + c)   whenever  0 <= b <= min(a, c),

(an opening/closing absorption property of sup/inf-convolutions), which
collapses a Brownian path with tens of thousands of breakpoints into a
few dozen steps without changing the exact solution.  Each step is
evaluated exactly for the piecewise-linear interpolant of the current
grid values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from . import kernels
from ._codes import HK_EIKONAL
from .paths import Partition, PiecewisePath
from .problems import Hamiltonian, InitialData

__all__ = [
    "OracleResult",
    "SmoothSolutionWindow",
    "BudgetError",
    "lax_oleinik_segment",
    "reduce_runs",
    "RunReducer",
    "pathwise_oracle",
    "characteristics_solution",
    "reference_fallback",
    "default_path_constant",
]


class BudgetError(RuntimeError):
    """The requested fine-grid reference exceeds the work budget."""


def _values(u) -> np.ndarray:
    return np.ascontiguousarray(getattr(u, "values", u), dtype=float)


def _dilate_pl(u: np.ndarray, r: float, h: float, sign: int) -> np.ndarray:
    """Max (``sign=+1``) or min of the periodic p.l. interpolant over ``[x - r, x + r]``."""
    M = u.shape[0]
    k = int(math.floor(r / h))
    f = r / h - k
    if 2 * k + 1 >= M:
        return np.full(M, u.max() if sign > 0 else u.min())
    filt = maximum_filter1d if sign > 0 else minimum_filter1d
    core = filt(u, size=2 * k + 1, mode="wrap")
    right = (1.0 - f) * np.roll(u, -k) + f * np.roll(u, -k - 1)
    left = (1.0 - f) * np.roll(u, k) + f * np.roll(u, k + 1)
    pick = np.maximum if sign > 0 else np.minimum
    return pick(core, pick(left, right))


def lax_oleinik_segment(u, c_dt: float, H: Hamiltonian, h: float) -> np.ndarray:
    """One Hopf-Lax step for a monotone driver displacement ``c_dt``.

    For ``c_dt > 0`` returns ``sup_y [u(y) - c H*((y - x)/c)]``; for
    ``c_dt < 0`` the inf counterpart ``inf_y [u(y) + |c| H*((x - y)/|c|)]``;
    the identity for ``c_dt = 0``.  ``u`` is the periodic piecewise-linear
    interpolant of the grid values and the supremum is exact for it.

    Notes
    -----
    The argument of ``H*`` is written ``(y - x)/c`` so that transport
    ``H(p) = a p`` moves data the right way; for even ``H`` this equals the
    more common ``(x - y)/c``.

    Raises
    ------
    ValueError
        If ``H`` has no Legendre transform.
    """
    if not (H.convex and H.has_legendre):
        raise ValueError(f"Hamiltonian {H.name!r} has no Legendre transform; use reference_fallback")
    v = _values(u)
    if c_dt == 0.0:
        return v.copy()
    if H.kind == HK_EIKONAL:
        return _dilate_pl(v, H.a * abs(c_dt), h, 1 if c_dt > 0 else -1)
    out = np.empty_like(v)
    kernels.hopf_lax(v, float(c_dt), float(h), H.kind, H.params, out)
    return out


def reduce_runs(increments) -> list[float]:
    """Collapse signed increments into a short list of alternating displacements."""
    r = RunReducer()
    for d in np.asarray(increments, dtype=float):
        r.push(float(d))
    return list(r.stack)


class RunReducer:
    """Online monotone-run reduction.

    Same-sign increments are merged; then any interior run whose
    magnitude is at most both neighbours is absorbed into them.
    """

    __slots__ = ("stack",)

    def __init__(self, stack=None):
        self.stack = [] if stack is None else list(stack)

    def copy(self) -> "RunReducer":
        return RunReducer(self.stack)

    def push(self, d: float) -> None:
        s = self.stack
        if d == 0.0:
            return
        if s and (s[-1] > 0) == (d > 0):
            s[-1] += d
        else:
            s.append(d)
        while len(s) >= 3 and abs(s[-2]) <= min(abs(s[-3]), abs(s[-1])):
            c = s.pop()
            b = s.pop()
            s[-1] += b + c


@dataclass
class OracleResult:
    """Reference snapshots on ``grid`` at ``probe_times``."""

    probe_times: np.ndarray
    snapshots: np.ndarray
    h: float
    exact: bool
    budget: Optional[float] = None
    steps: int = 0

    def restrict(self, factor: int) -> np.ndarray:
        """Snapshots at every ``factor``-th node (a coarser nested grid)."""
        return self.snapshots[:, ::factor]


def default_path_constant(H: Hamiltonian, L: float) -> float:
    """``max_{|p| <= L} |H(p)|``: the rate at which the solution moves per unit driver."""
    p = np.linspace(-L, L, 2001)
    return float(np.max(np.abs(H(p))))


def pathwise_oracle(u0, zeta: PiecewisePath, H: Hamiltonian, probe_times, M: int,
                    period: float | None = None, target: PiecewisePath | None = None,
                    C_L: float | None = None) -> OracleResult:
    """Exact-in-time solution of ``du = H(u_x) dzeta`` at each probe time.

    Parameters
    ----------
    u0 : InitialData or ndarray
        Sampled on ``M`` nodes of one period if callable.
    zeta : PiecewisePath
    H : Hamiltonian
        Convex with a Legendre transform.
    probe_times : array_like
        Sorted times in ``[0, T]``.
    M : int
        Oracle grid size; use a multiple of the scheme grid for comparisons.
    target : PiecewisePath, optional
        If given, the budget ``C_L * ||zeta - target||`` bounds the distance
        to the solution driven by ``target``.
    """
    if not (H.convex and H.has_legendre):
        raise ValueError(f"non-convex or transform-free Hamiltonian {H.name!r}: use reference_fallback")
    if isinstance(u0, InitialData):
        P = u0.period
        v0 = u0.sample(M)
        L = u0.lipschitz
    else:
        if period is None:
            raise ValueError("period is required when u0 is an array")
        P = period
        v0 = _values(u0)
        L = float(np.max(np.abs(np.diff(np.append(v0, v0[0]))))) / (P / M)
    h = P / M
    probe = np.asarray(probe_times, dtype=float)
    if np.any(np.diff(probe) < 0):
        raise ValueError("probe times must be sorted")
    z = zeta.scalar
    zt = zeta.times
    red = RunReducer()
    snaps = np.empty((probe.shape[0], M))
    j = 0  # breakpoints strictly before the current probe have been pushed
    nops = 0
    for p, t in enumerate(probe):
        while j + 1 < zt.shape[0] and zt[j + 1] <= t:
            red.push(z[j + 1] - z[j])
            j += 1
        tail = red.copy()
        tail.push(float(zeta.at(t)) - z[j])
        v = v0
        for c in tail.stack:
            v = lax_oleinik_segment(v, c, H, h)
        nops += len(tail.stack)
        snaps[p] = v
    budget = None
    if target is not None:
        CL = default_path_constant(H, L) if C_L is None else C_L
        budget = CL * zeta.sup_distance(target)
    return OracleResult(probe, snaps, h, True, budget, nops)


@dataclass
class SmoothSolutionWindow:
    """Classical solution ``Phi`` built by characteristics from base time ``t0``.

    ``X(y, t) = y - H'(phi'(y)) dz`` and
    ``Z(y, t) = phi(y) + (H(phi') - phi' H'(phi')) dz`` with
    ``dz = zeta(t) - zeta(t0)``; ``Phi(X(y, t), t) = Z(y, t)``.
    """

    H: Hamiltonian
    phi: InitialData
    zeta: PiecewisePath
    t0: float
    margin: float = 0.05

    def jacobian_min(self, t: float, n: int = 4096) -> float:
        dz = float(self.zeta.at(t) - self.zeta.at(self.t0))
        y = np.linspace(0.0, self.phi.period, n, endpoint=False)
        return float(np.min(1.0 - self.H.second_derivative(self.phi.d1(y)) * self.phi.d2(y) * dz))

    def valid(self, t: float) -> bool:
        return self.jacobian_min(t) > self.margin

    def window(self) -> tuple[float, float]:
        """Largest interval of path breakpoints around ``t0`` on which the map stays invertible."""
        ts = self.zeta.times
        ok = np.array([self.valid(t) for t in ts])
        i0 = int(np.searchsorted(ts, self.t0))
        lo = i0
        while lo > 0 and ok[lo - 1]:
            lo -= 1
        hi = min(i0, ts.shape[0] - 1)
        while hi + 1 < ts.shape[0] and ok[hi + 1]:
            hi += 1
        return float(ts[lo]), float(ts[hi])

    def _dz(self, t: float) -> float:
        if not self.valid(t):
            raise ValueError(f"t={t} lies outside the characteristics window (map not invertible)")
        return float(self.zeta.at(t) - self.zeta.at(self.t0))

    def foot(self, x, t: float) -> np.ndarray:
        """Solve ``X(y, t) = x`` for ``y`` (Newton from an interpolated start)."""
        dz = self._dz(t)
        H, phi = self.H, self.phi
        x = np.asarray(x, dtype=float)
        P = phi.period
        yf = np.linspace(-P, 2 * P, 12289)
        Xf = yf - H.derivative(phi.d1(yf)) * dz
        y = np.interp(x, Xf, yf)
        for _ in range(50):
            g = y - H.derivative(phi.d1(y)) * dz - x
            dg = 1.0 - H.second_derivative(phi.d1(y)) * phi.d2(y) * dz
            step = g / dg
            y = y - step
            if np.max(np.abs(step)) < 1e-15 * max(1.0, P):
                break
        return y

    def evaluate(self, x, t: float) -> np.ndarray:
        dz = self._dz(t)
        y = self.foot(x, t)
        p = self.phi.d1(y)
        return self.phi(y) + (self.H(p) - p * self.H.derivative(p)) * dz

    def gradient(self, x, t: float) -> np.ndarray:
        """``D Phi(x, t) = phi'(y)`` at the foot ``y`` of ``x``."""
        return self.phi.d1(self.foot(x, t))


def characteristics_solution(H: Hamiltonian, phi: InitialData, zeta: PiecewisePath, t0: float) -> SmoothSolutionWindow:
    if phi.d1 is None or phi.d2 is None:
        raise ValueError("initial profile must carry first and second derivatives")
    H.second_derivative(np.zeros(1))  # raises for non-smooth H
    return SmoothSolutionWindow(H, phi, zeta, float(t0))


def reference_fallback(spec, u0: InitialData, driver_for: Callable[[float], tuple[Partition, PiecewisePath]],
                       h_coarse: float, refinement: int, probe_times, max_work: float = 2e10) -> OracleResult:
    """Run the same scheme at ``h_coarse / refinement`` as a self-reference.

    ``driver_for(h)`` must return a CFL-admissible ``(partition, path)``
    for spacing ``h``.  The result is flagged non-exact.

    Raises
    ------
    BudgetError
        If ``steps * nodes`` exceeds ``max_work``.
    """
    from .schemes import Grid1D, evolve

    if refinement < 4:
        raise ValueError("refinement must be at least 4")
    M_c = int(round(u0.period / h_coarse))
    grid = Grid1D(u0.period, M_c * refinement)
    P, Wh = driver_for(grid.h)
    work = float(P.N) * grid.M
    if work > max_work:
        raise BudgetError(f"reference needs {work:.3g} node-steps; budget is {max_work:.3g}")
    rec = evolve(spec, u0, Wh, P, grid, probe_times=probe_times)
    return OracleResult(rec.probe_times, rec.snapshots, grid.h, False, None, P.N)
