"""Experiment orchestration: rate studies, the pathwise bound, stopping-time
statistics and distributional convergence.

Seeds are derived deterministically from ``(study, replicate)`` (and ``h``
where a fresh path per ``h`` is intended) by hashing, so any row can be
replayed on its own.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from . import kernels
from .oracles import OracleResult, pathwise_oracle, reference_fallback
from .paths import (
    Partition,
    PiecewisePath,
    brownian_modulus,
    empirical_holder_constant,
    holder_modulus,
    lipschitz_modulus,
    regular_recipe,
    regularize_regular,
    require_cfl,
    sample_brownian,
    scaled_random_walk,
    stopping_eta,
    stopping_time_partition,
)
from .problems import Problem, get_problem
from .schemes import EvolveRecord, Grid1D, SchemeSpec, evolve

__all__ = [
    "DRIVER_FAMILIES",
    "seed_for",
    "RateFit",
    "fit_rate",
    "log_correction_h",
    "log_correction_rho",
    "RateStudyConfig",
    "RateRow",
    "RateReport",
    "DriverBuild",
    "build_driver",
    "rate_study",
    "run_replicate",
    "replicate_solution",
    "BoundCheckRecord",
    "PenaltyFrontier",
    "bound_check",
    "calibrate_bound_constant",
    "BoundStudyConfig",
    "BoundStudyResult",
    "bound_study",
    "exit_time_moments",
    "StoppingStatsRow",
    "stopping_time_stats",
    "ks_distance",
    "DistributionConfig",
    "DistributionRow",
    "distribution_study",
    "time_regularity_constant",
]

DRIVER_FAMILIES = (
    "brownian_blocks",
    "brownian_regular",
    "brownian_stopping",
    "holder",
    "lipschitz",
    "random_walk",
    "zero",
)


def seed_for(study: str, replicate: int, h: float | None = None, offset: int = 0) -> int:
    """64-bit seed from ``blake2b("study|replicate|h|offset")``.

    ``h`` is omitted for drivers that must be the same path across the
    ``h`` sweep (pathwise convergence needs one fixed ``W``).
    """
    key = f"{study}|{int(replicate)}|{'' if h is None else repr(float(h))}|{int(offset)}"
    return int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")


def _pmap(fn: Callable, items: Sequence, jobs: int = 1) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------- rate fits


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    max_residual: float
    n_used: int
    excluded: int


def log_correction_h(h):
    """``h^{1/3} |log h|^{1/3}``."""
    h = np.asarray(h, dtype=float)
    return h ** (1.0 / 3.0) * np.abs(np.log(h)) ** (1.0 / 3.0)


def log_correction_rho(rho):
    """``rho^{1/4} |log rho|^{1/2}``."""
    rho = np.asarray(rho, dtype=float)
    return rho**0.25 * np.abs(np.log(rho)) ** 0.5


def fit_rate(pairs: Iterable[tuple[float, float]], correction: Optional[Callable] = None) -> RateFit:
    """Least-squares slope of ``log(error / correction(h))`` against ``log h``.

    Rows with zero error are dropped (reported in ``excluded``).
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ValueError("fit_rate needs at least 3 (h, error) pairs")
    h, e = arr[:, 0], arr[:, 1]
    if np.any(e < 0) or np.any(h <= 0):
        raise ValueError("errors must be nonnegative and h positive")
    keep = e > 0
    if keep.sum() < 2:
        raise ValueError("fewer than two positive errors")
    y = np.log(e[keep])
    if correction is not None:
        y = y - np.log(correction(h[keep]))
    x = np.log(h[keep])
    slope, icpt = np.polyfit(x, y, 1)
    res = float(np.max(np.abs(y - (slope * x + icpt))))
    return RateFit(float(slope), float(icpt), res, int(keep.sum()), int((~keep).sum()))


# ---------------------------------------------------------------- drivers


@dataclass
class DriverBuild:
    rho: float
    partition: Partition
    path: PiecewisePath
    eps_h: Optional[float] = None
    info: dict = field(default_factory=dict)


def base_path(family: str, study: str, replicate: int, T: float, dt_fine: float, offset: int = 0,
              slope: float = 1.0) -> PiecewisePath:
    """The target driver ``W`` shared by every ``h`` of one replicate."""
    if family == "zero":
        return PiecewisePath(np.array([0.0, T]), np.zeros(2))
    if family == "lipschitz":
        return PiecewisePath(np.array([0.0, T]), np.array([0.0, slope * T]))
    if family == "random_walk":
        raise ValueError("random walks are drawn per h; they have no shared base path")
    return sample_brownian(seed_for(study, replicate, offset=offset), T, dt_fine)


def build_driver(family: str, W: PiecewisePath | None, h: float, lam: float, lambda0: float, *,
                 alpha: float = 0.45, holder_C: float | None = None, slope: float = 1.0,
                 seed: int | None = None, T: float | None = None, spec: SchemeSpec | None = None,
                 block_factor: float = 1.0) -> DriverBuild:
    """Regularized driver ``(rho_h, P_h, W_h)`` for one ``h``.

    ``lam`` is the CFL number actually used (a fraction of ``lambda0``).
    """
    if family == "zero":
        T = W.horizon
        rho = min(h, T)
        P, Wh = regularize_regular(W, rho)
        return DriverBuild(rho, P, Wh)
    if family == "lipschitz":
        rho, P, Wh = regular_recipe(W, h, lam, lipschitz_modulus(slope))
        return DriverBuild(rho, P, Wh)
    if family == "holder":
        C = holder_C if holder_C is not None else empirical_holder_constant(W, alpha)
        rho, P, Wh = regular_recipe(W, h, lam, holder_modulus(alpha, C))
        return DriverBuild(rho, P, Wh, info={"holder_C": C})
    if family == "brownian_regular":
        rho, P, Wh = regular_recipe(W, h, lam, brownian_modulus())
        return DriverBuild(rho, P, Wh)
    if family == "brownian_stopping":
        fam, P, Wh = stopping_time_partition(W, h, lam)
        return DriverBuild(P.mesh, P, Wh, info={"K": fam.K, "eta": fam.eta, "M": fam.M})
    if family == "random_walk":
        rho, P, Wh = scaled_random_walk(seed, h, lam, lambda0, T)
        return DriverBuild(rho, P, Wh)
    if family == "brownian_blocks":
        return _blocks_driver(W, h, spec, block_factor)
    raise ValueError(f"unknown driver family {family!r}; choose from {DRIVER_FAMILIES}")


def _blocks_driver(W: PiecewisePath, h: float, spec: SchemeSpec, block_factor: float) -> DriverBuild:
    """Interpolate ``W`` on blocks of length ``block_factor * h`` and subdivide each block
    so that the parabolic guard ``dt (||F'|| + eps_h) 2 / h^2 <= 1`` holds."""
    T = W.horizon
    tau = block_factor * h
    nb = max(1, int(math.ceil(T / tau - 1e-9)))
    knots = np.linspace(0.0, T, nb + 1)
    vals = W.at(knots)
    speed = float(np.max(np.abs(np.diff(vals)) / np.diff(knots)))
    eps = spec.eps_factor * h * speed if spec is not None and spec.kind == "lf_second_order" else 0.0
    Fd = spec.F.derivative_bound if spec is not None else 0.0
    dt_max = h * h / (2.0 * (Fd + eps)) if Fd + eps > 0 else tau
    sub = max(1, int(math.ceil(knots[1] / dt_max - 1e-12)))
    frac = np.arange(sub) / sub
    times = np.append((knots[:-1, None] + frac[None, :] * np.diff(knots)[:, None]).ravel(), T)
    return DriverBuild(float(np.max(np.diff(times))), Partition(times), PiecewisePath(knots, vals),
                       eps_h=eps, info={"blocks": nb, "substeps": sub})


# ---------------------------------------------------------------- rate studies


@dataclass
class RateStudyConfig:
    """Parameters of a convergence-rate study.

    ``oracle`` is ``"exact"`` (Hopf-Lax composition on a grid ``oracle_refine``
    times finer) or ``"fallback"`` (same scheme at ``min(h_list) / fallback_refinement``).
    """

    study: str = "rate"
    problem: str = "eikonal_sawtooth"
    scheme: str = "lf_first_order"
    theta: float = 1.0
    eps_factor: float = 1.0
    family: str = "lipschitz"
    h_list: tuple = tuple(2.0**-k for k in range(6, 12))
    replicates: int = 1
    T: float = 0.5
    lam_fraction: float = 0.5
    dt_fine: float = 2.0**-16
    alpha: float = 0.45
    slope: float = 1.0
    n_probes: int = 9
    oracle: str = "exact"
    oracle_refine: int = 4
    fallback_refinement: int = 8
    block_factor: float = 1.0
    correction: str = "none"
    seed_offset: int = 0
    min_slope: float = -math.inf
    max_slope: float = math.inf
    max_corrected_spread: float = math.inf
    require_decreasing: bool = False

    def __post_init__(self):
        self.h_list = tuple(float(h) for h in self.h_list)
        if len(self.h_list) < 2 or any(b >= a for a, b in zip(self.h_list, self.h_list[1:])):
            raise ValueError("h_list must be strictly decreasing with at least two values")
        if self.family not in DRIVER_FAMILIES:
            raise ValueError(f"unknown driver family {self.family!r}")
        if self.oracle not in ("exact", "fallback"):
            raise ValueError("oracle must be 'exact' or 'fallback'")
        if self.correction not in ("none", "h", "rho"):
            raise ValueError("correction must be 'none', 'h' or 'rho'")

    def problem_obj(self) -> Problem:
        return get_problem(self.problem)

    def spec(self) -> SchemeSpec:
        pr = self.problem_obj()
        return SchemeSpec(self.scheme, pr.H, pr.F, self.theta, self.eps_factor)


@dataclass
class RateRow:
    study: str
    h: float
    rho: float
    seed: int
    replicate: int
    error: float
    corrected_error: float
    lip_max: float
    steps: int


@dataclass
class RateReport:
    study: str
    rows: list
    fit: Optional[RateFit]
    medians: dict
    corrected_medians: dict
    verdicts: dict
    meta: dict

    def errors_for(self, h: float) -> np.ndarray:
        return np.array([r.error for r in self.rows if r.h == h])


def _corr(cfg: RateStudyConfig, h: float, rho: float) -> float:
    if cfg.correction == "h":
        return float(log_correction_h(h))
    if cfg.correction == "rho":
        return float(log_correction_rho(rho))
    return 1.0


def _snap_probes(T: float, n: int) -> np.ndarray:
    return np.linspace(0.0, T, n)


def _replicate_setup(cfg: RateStudyConfig, replicate: int):
    spec = cfg.spec()
    lam = cfg.lam_fraction * spec.lambda0
    W = base_path(cfg.family, cfg.study, replicate, cfg.T, cfg.dt_fine, cfg.seed_offset, cfg.slope)
    seed = seed_for(cfg.study, replicate, offset=cfg.seed_offset)
    holder_C = empirical_holder_constant(W, cfg.alpha) if cfg.family == "holder" else None

    def driver(h):
        return build_driver(cfg.family, W, h, lam, spec.lambda0, alpha=cfg.alpha, holder_C=holder_C,
                            slope=cfg.slope, seed=seed, T=cfg.T, spec=spec, block_factor=cfg.block_factor)

    return spec, W, seed, driver


def replicate_solution(cfg: RateStudyConfig, replicate: int, h: float) -> np.ndarray:
    """Scheme values at time ``T`` for one replicate and spacing ``h``."""
    pr = cfg.problem_obj()
    spec, _, _, driver = _replicate_setup(cfg, replicate)
    grid = Grid1D(pr.period, int(round(pr.period / h)))
    d = driver(h)
    if spec.enforces_path_cfl:
        require_cfl(d.path, d.partition, grid.h, spec.lambda0)
    return evolve(spec, pr.u0, d.path, d.partition, grid, eps_h=d.eps_h).final


def run_replicate(cfg: RateStudyConfig, replicate: int) -> list[RateRow]:
    """All ``h`` for one replicate (one fixed target path)."""
    pr = cfg.problem_obj()
    spec, W, seed, driver = _replicate_setup(cfg, replicate)
    probes = _snap_probes(cfg.T, cfg.n_probes)

    ref: Optional[OracleResult] = None
    if cfg.oracle == "fallback":
        h_min = cfg.h_list[-1]

        def driver_pw(hh):
            d = driver(hh)
            return d.partition, d.path

        ref = reference_fallback(spec, pr.u0, driver_pw, h_min, cfg.fallback_refinement, [cfg.T])
    rows = []
    for h in cfg.h_list:
        M = int(round(pr.period / h))
        grid = Grid1D(pr.period, M)
        d = driver(h)
        if spec.enforces_path_cfl:
            require_cfl(d.path, d.partition, grid.h, spec.lambda0)
        rec = evolve(spec, pr.u0, d.path, d.partition, grid, probe_times=probes if cfg.oracle == "exact" else None,
                     eps_h=d.eps_h)
        if cfg.oracle == "exact":
            orc = pathwise_oracle(pr.u0, W, pr.H, rec.probe_times, M * cfg.oracle_refine)
            err = float(np.max(np.abs(rec.snapshots - orc.restrict(cfg.oracle_refine))))
        else:
            factor = int(round(h / ref.h))
            err = float(np.max(np.abs(rec.final - ref.snapshots[-1][::factor])))
        rows.append(RateRow(cfg.study, h, d.rho, seed, replicate, err, err / _corr(cfg, h, d.rho),
                            rec.lip_max, d.partition.N))
    return rows


def _rep_worker(args):
    cfg, r = args
    return run_replicate(cfg, r)


def rate_study(cfg: RateStudyConfig, jobs: int = 1) -> RateReport:
    """Sweep ``h_list`` over ``replicates`` target paths and fit the rate of the median error."""
    chunks = _pmap(_rep_worker, [(cfg, r) for r in range(cfg.replicates)], jobs)
    rows = [row for ch in chunks for row in ch]
    med = {h: float(np.median([r.error for r in rows if r.h == h])) for h in cfg.h_list}
    cmed = {h: float(np.median([r.corrected_error for r in rows if r.h == h])) for h in cfg.h_list}
    fit = None
    if len(cfg.h_list) >= 3 and all(v > 0 for v in med.values()):
        fit = fit_rate(list(med.items()))
    verdicts = {}
    if math.isfinite(cfg.min_slope) or math.isfinite(cfg.max_slope):
        verdicts["slope_in_band"] = fit is not None and cfg.min_slope <= fit.slope <= cfg.max_slope
    if math.isfinite(cfg.max_corrected_spread):
        vals = np.array(list(cmed.values()))
        verdicts["corrected_bounded"] = bool(vals.min() > 0 and vals.max() / vals.min() < cfg.max_corrected_spread)
    if cfg.require_decreasing:
        e = [med[h] for h in cfg.h_list]
        verdicts["monotone_decrease"] = all(b < a for a, b in zip(e, e[1:]))
    pr = cfg.problem_obj()
    meta = {"lipschitz_max": max(r.lip_max for r in rows), "L": pr.L,
            "lipschitz_ok": max(r.lip_max for r in rows) <= pr.L + 1e-10 or pr.F.kind != 0,
            "backend": kernels.BACKEND}
    return RateReport(cfg.study, rows, fit, med, cmed, verdicts, meta)


# ---------------------------------------------------------------- pathwise bound


@dataclass(frozen=True)
class PenaltyFrontier:
    """Pareto frontier of ``(dt^2, |dzeta|)`` over pairs of path nodes.

    ``g(kappa) = max_pairs (|dzeta| - dt^2 / kappa)``; the penalization
    term equals ``C g(2 C eps)``.
    """

    B: np.ndarray
    A: np.ndarray

    @classmethod
    def from_nodes(cls, t: np.ndarray, z: np.ndarray) -> "PenaltyFrontier":
        B, A = kernels.pair_candidates(np.ascontiguousarray(t, dtype=float), np.ascontiguousarray(z, dtype=float))
        if B.size == 0:
            return cls(np.zeros(1), np.zeros(1))
        order = np.lexsort((-A, B))
        B, A = B[order], A[order]
        keep = A > np.concatenate(([-np.inf], np.maximum.accumulate(A)[:-1]))
        return cls(np.concatenate(([0.0], B[keep])), np.concatenate(([0.0], A[keep])))

    def g(self, kappa: float) -> float:
        if math.isinf(kappa):
            return float(self.A.max())
        if kappa <= 0:
            return 0.0
        return float(max(0.0, np.max(self.A - self.B / kappa)))

    def penalty(self, C: float, eps: float) -> float:
        return C * self.g(2.0 * C * eps)


@dataclass
class BoundCheckRecord:
    eps: float
    sum_sq: float
    N: int
    h: float
    penalty: float
    rhs: float
    error: float
    passed: bool


def bound_rhs(eps: float, C: float, sum_sq: float, N: int, h: float, front: PenaltyFrontier) -> tuple[float, float]:
    pen = front.penalty(C, eps)
    first = 0.0 if math.isinf(eps) else sum_sq / eps
    return first + C * math.sqrt(N) * h + pen, pen


def default_eps_list(T: float, rho: float, h: float, n: int = 41) -> np.ndarray:
    """Geometric sweep around ``sqrt(T) rho^{3/2} / h`` (which is always included)."""
    star = math.sqrt(T) * rho**1.5 / h
    return np.unique(np.concatenate((star * np.logspace(-4, 4, n), [star])))


def bound_check(error: float, partition: Partition, zeta: PiecewisePath, h: float, eps_list, C: float) -> list[BoundCheckRecord]:
    """Evaluate each right-hand-side term for every ``eps``; ``passed`` iff ``error <= RHS``."""
    front = PenaltyFrontier.from_nodes(partition.times, zeta.at(partition.times))
    out = []
    for eps in eps_list:
        rhs, pen = bound_rhs(float(eps), C, partition.sum_sq, partition.N, h, front)
        out.append(BoundCheckRecord(float(eps), partition.sum_sq, partition.N, h, pen, rhs, error, error <= rhs))
    return out


def min_rhs(C: float, eps_list, sum_sq: float, N: int, h: float, front: PenaltyFrontier) -> tuple[float, float]:
    best = (math.inf, math.nan)
    for eps in eps_list:
        r, _ = bound_rhs(float(eps), C, sum_sq, N, h, front)
        if r < best[0]:
            best = (r, float(eps))
    return best


def calibrate_bound_constant(error: float, eps_list, sum_sq: float, N: int, h: float, front: PenaltyFrontier,
                             rtol: float = 1e-10) -> float:
    """Smallest ``C`` with ``min_eps RHS(eps, C) >= error`` (RHS is nondecreasing in ``C``)."""
    if min_rhs(0.0, eps_list, sum_sq, N, h, front)[0] >= error:
        return 0.0
    hi = 1.0
    while min_rhs(hi, eps_list, sum_sq, N, h, front)[0] < error:
        hi *= 2.0
        if hi > 1e12:
            raise RuntimeError("bound constant diverges")
    lo = 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if min_rhs(mid, eps_list, sum_sq, N, h, front)[0] >= error:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class BoundStudyConfig:
    study: str = "bound"
    problem: str = "eikonal_sawtooth"
    scheme: str = "lf_first_order"
    theta: float = 1.0
    families: tuple = ("brownian_regular", "brownian_stopping")
    h_choices: tuple = (2.0**-6, 2.0**-7, 2.0**-8)
    n_train: int = 20
    n_holdout: int = 100
    T: float = 0.5
    lam_fraction: float = 0.5
    dt_fine: float = 2.0**-15
    n_probes: int = 17
    oracle_refine: int = 4
    safety: float = 2.0
    seed_offset: int = 0


@dataclass
class BoundSample:
    index: int
    family: str
    h: float
    error: float
    sum_sq: float
    N: int
    eps_list: np.ndarray
    front: PenaltyFrontier
    C_needed: float


@dataclass
class BoundStudyResult:
    C_hat: float
    train: list
    holdout: list
    records: list
    violations: int
    verdicts: dict


def _bound_sample(cfg: BoundStudyConfig, index: int) -> BoundSample:
    pr = get_problem(cfg.problem)
    spec = SchemeSpec(cfg.scheme, pr.H, pr.F, cfg.theta)
    seed = seed_for(cfg.study, index, offset=cfg.seed_offset)
    rng = np.random.Generator(np.random.PCG64(seed))
    family = cfg.families[int(rng.integers(len(cfg.families)))]
    h = float(cfg.h_choices[int(rng.integers(len(cfg.h_choices)))])
    W = sample_brownian(seed, cfg.T, cfg.dt_fine)
    d = build_driver(family, W, h, cfg.lam_fraction * spec.lambda0, spec.lambda0)
    grid = Grid1D(pr.period, int(round(pr.period / h)))
    require_cfl(d.path, d.partition, grid.h, spec.lambda0)
    rec = evolve(spec, pr.u0, d.path, d.partition, grid, probe_times=_snap_probes(cfg.T, cfg.n_probes))
    orc = pathwise_oracle(pr.u0, d.path, pr.H, rec.probe_times, grid.M * cfg.oracle_refine)
    err = float(np.max(np.abs(rec.snapshots - orc.restrict(cfg.oracle_refine))))
    P = d.partition
    front = PenaltyFrontier.from_nodes(P.times, d.path.at(P.times))
    eps_list = default_eps_list(cfg.T, P.mesh, grid.h)
    C = calibrate_bound_constant(err, eps_list, P.sum_sq, P.N, grid.h, front)
    return BoundSample(index, family, grid.h, err, P.sum_sq, P.N, eps_list, front, C)


def _bound_worker(args):
    return _bound_sample(*args)


def bound_study(cfg: BoundStudyConfig, jobs: int = 1) -> BoundStudyResult:
    """Calibrate ``C_hat = safety * max C_needed`` on training paths, then check holdout paths."""
    n = cfg.n_train + cfg.n_holdout
    samples = _pmap(_bound_worker, [(cfg, i) for i in range(n)], jobs)
    train, hold = samples[: cfg.n_train], samples[cfg.n_train :]
    C_hat = cfg.safety * max(s.C_needed for s in train)
    records = []
    viol = 0
    for s in hold:
        rhs, eps = min_rhs(C_hat, s.eps_list, s.sum_sq, s.N, s.h, s.front)
        _, pen = bound_rhs(eps, C_hat, s.sum_sq, s.N, s.h, s.front)
        rec = BoundCheckRecord(eps, s.sum_sq, s.N, s.h, pen, rhs, s.error, s.error <= rhs)
        records.append(rec)
        viol += not rec.passed
    return BoundStudyResult(C_hat, train, hold, records, viol, {"bound_holds": viol == 0})


# ---------------------------------------------------------------- stopping-time statistics


def exit_time_moments(n_samples: int = 1_000_000, dt_unit: float = 1.0 / 64.0, seed: int = 0,
                      chunk: int = 250_000) -> dict:
    """Monte Carlo for the first time the oscillation of a unit Brownian path exceeds 1.

    Paths are Gaussian random walks with step ``dt_unit`` interpolated
    linearly, and the crossing is located on the interpolant, mirroring
    how stopping times are detected on sampled drivers.

    Returns
    -------
    dict
        ``c1 = E[tau]``, ``c2 = E[tau^2]`` and their standard errors.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    sd = math.sqrt(dt_unit)
    taus = []
    for start in range(0, n_samples, chunk):
        n = min(chunk, n_samples - start)
        w = np.zeros(n)
        hi = np.zeros(n)
        lo = np.zeros(n)
        tau = np.full(n, np.nan)
        alive = np.arange(n)
        k = 0
        while alive.size:
            k += 1
            w0 = w[alive]
            w1 = w0 + sd * rng.standard_normal(alive.size)
            h0, l0 = hi[alive], lo[alive]
            up = (w1 > h0) & (w1 - l0 > 1.0)
            dn = (w1 < l0) & (h0 - w1 > 1.0)
            level = np.where(up, l0 + 1.0, h0 - 1.0)
            done = up | dn
            with np.errstate(divide="ignore", invalid="ignore"):
                frac = np.where(done, (level - w0) / (w1 - w0), 0.0)
            tau[alive[done]] = (k - 1 + frac[done]) * dt_unit
            w[alive] = w1
            hi[alive] = np.maximum(h0, w1)
            lo[alive] = np.minimum(l0, w1)
            alive = alive[~done]
        taus.append(tau)
    t = np.concatenate(taus)
    return {
        "c1": float(t.mean()),
        "c2": float(np.mean(t**2)),
        "c1_se": float(t.std(ddof=1) / math.sqrt(t.size)),
        "c2_se": float((t**2).std(ddof=1) / math.sqrt(t.size)),
        "n": int(t.size),
        "dt_unit": dt_unit,
    }


@dataclass
class StoppingStatsRow:
    h: float
    eta: float
    M: int
    seeds: int
    mean_K_eta2: float
    q10_K_eta2: float
    q50_K_eta2: float
    q90_K_eta2: float
    mean_sumsq_ratio: float
    q90_sumsq_ratio: float
    bound_K: float
    bound_sumsq: float
    K_ok: bool
    sumsq_ok: bool


def stopping_time_stats(h_list, seeds: int, T: float, lambda0: float, c1: float, c2: float,
                        study: str = "stopping", fine_factor: float = 64.0, seed_offset: int = 0,
                        K_slack: float = 1.1, sumsq_slack: float = 1.2) -> list[StoppingStatsRow]:
    """Empirical ``K_h eta_h^2`` and ``sum (dt_n)^2 / (h eta_h)`` against ``T/c1`` and ``T lambda0 c2 / c1``."""
    if seeds < 100:
        raise ValueError("stopping-time statistics need at least 100 seeds")
    rows = []
    for h in h_list:
        eta = stopping_eta(h)
        dt_fine = eta**2 / fine_factor
        n_fine = int(math.ceil(T / dt_fine))
        dt_fine = T / n_fine
        Keta, ratio = [], []
        M = 0
        for r in range(seeds):
            W = sample_brownian(seed_for(study, r, h, seed_offset), T, dt_fine)
            fam, P, _ = stopping_time_partition(W, h, lambda0, fine_factor)
            M = fam.M
            Keta.append(fam.K * eta**2)
            ratio.append(P.sum_sq / (h * eta))
        Keta, ratio = np.array(Keta), np.array(ratio)
        bK = T / c1
        bS = T * lambda0 * c2 / c1
        rows.append(StoppingStatsRow(
            h, eta, M, seeds, float(Keta.mean()), *map(float, np.quantile(Keta, [0.1, 0.5, 0.9])),
            float(ratio.mean()), float(np.quantile(ratio, 0.9)), bK, bS,
            bool(Keta.mean() <= K_slack * bK), bool(np.quantile(ratio, 0.9) <= sumsq_slack * bS),
        ))
    return rows


# ---------------------------------------------------------------- distributions


def ks_distance(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    return float(stats.ks_2samp(np.asarray(a), np.asarray(b), method="asymp").statistic)


@dataclass
class DistributionConfig:
    study: str = "distribution"
    problem: str = "eikonal_cosine"
    scheme: str = "lf_first_order"
    theta: float = 1.0
    h_list: tuple = (2.0**-5, 2.0**-7, 2.0**-9)
    n_samples: int = 2000
    x0: float = 0.5
    T: float = 0.5
    lam_fraction: float = 0.5
    ref_dt_fine: float = 2.0**-14
    ref_M: int = 2048
    seed_offset: int = 0
    final_ks_max: float = 0.1


@dataclass
class DistributionRow:
    h: float
    rho: float
    ks: float
    n: int
    noise_band: float


def _rw_values(args) -> np.ndarray:
    cfg, h, idx = args
    pr = get_problem(cfg.problem)
    spec = SchemeSpec(cfg.scheme, pr.H, pr.F, cfg.theta)
    grid = Grid1D(pr.period, int(round(pr.period / h)))
    i0 = int(round(cfg.x0 / grid.h))
    if abs(i0 * grid.h - cfg.x0) > 1e-12:
        raise ValueError(f"x0={cfg.x0} is not a node of the grid with h={h}")
    lam = cfg.lam_fraction * spec.lambda0
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        rho, P, Wh = scaled_random_walk(seed_for(cfg.study + "/rw", i, h, cfg.seed_offset), grid.h, lam, spec.lambda0, cfg.T)
        rec = evolve(spec, pr.u0, Wh, P, grid, check=False)
        out[j] = rec.final[i0]
    return out


def _ref_values(args) -> np.ndarray:
    cfg, idx = args
    pr = get_problem(cfg.problem)
    i0 = int(round(cfg.x0 / (pr.period / cfg.ref_M)))
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        W = sample_brownian(seed_for(cfg.study + "/bm", i, offset=cfg.seed_offset), cfg.T, cfg.ref_dt_fine)
        orc = pathwise_oracle(pr.u0, W, pr.H, [cfg.T], cfg.ref_M)
        out[j] = orc.snapshots[-1][i0]
    return out


def _split(n: int, parts: int) -> list:
    return [list(range(n))[k::parts] for k in range(parts)]


def distribution_study(cfg: DistributionConfig, jobs: int = 1):
    """KS distance between ``u_h(x0, T)`` under random walks and the Brownian reference.

    Returns
    -------
    rows : list of DistributionRow
    reference : ndarray
        The reference sample.
    verdicts : dict
    """
    if cfg.n_samples < 500:
        raise ValueError("distribution study needs at least 500 samples")
    parts = max(1, jobs)
    ref = np.concatenate(_pmap(_ref_values, [(cfg, ix) for ix in _split(cfg.n_samples, parts)], jobs))
    rows = []
    band = 2.0 * math.sqrt(1.0 / cfg.n_samples)
    pr = get_problem(cfg.problem)
    spec = SchemeSpec(cfg.scheme, pr.H, pr.F, cfg.theta)
    for h in cfg.h_list:
        vals = np.concatenate(_pmap(_rw_values, [(cfg, h, ix) for ix in _split(cfg.n_samples, parts)], jobs))
        rho = (cfg.lam_fraction * spec.lambda0 * h) ** (4.0 / 3.0)
        rows.append(DistributionRow(h, rho, ks_distance(vals, ref), cfg.n_samples, band))
    ks = [r.ks for r in rows]
    verdicts = {
        "ks_nonincreasing": all(b <= a + band for a, b in zip(ks, ks[1:])),
        "final_ks_small": ks[-1] <= cfg.final_ks_max,
    }
    return rows, ref, verdicts


# ---------------------------------------------------------------- diagnostics


def time_regularity_constant(rec: EvolveRecord, zeta: PiecewisePath) -> float:
    """Smallest ``C`` with ``|v(t_n) - v(t_m)| <= C (h sqrt(n - m) + osc(zeta, t_m, t_n))`` over probe pairs."""
    from .paths import osc

    best = 0.0
    st = rec.probe_steps
    for a in range(len(st)):
        for b in range(a + 1, len(st)):
            diff = float(np.max(np.abs(rec.snapshots[b] - rec.snapshots[a])))
            scale = rec.grid.h * math.sqrt(st[b] - st[a]) + osc(zeta, rec.probe_times[a], rec.probe_times[b])
            if scale > 0:
                best = max(best, diff / scale)
    return best


def config_dict(cfg) -> dict:
    return asdict(cfg)
