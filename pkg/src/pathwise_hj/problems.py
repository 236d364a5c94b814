"""Hamiltonians, diffusions and initial data, plus a small named catalogue.

Built-in Hamiltonians are clamped: beyond ``|p| > L`` they continue
linearly with slope ``H'(+-L)``.  Solutions with ``|u_x| <= L`` never see
the extension, and the clamp makes ``||H'||`` finite for the CFL guard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels_numpy as _knp
from ._codes import (
    FK_DEGENERATE,
    FK_LINEAR,
    FK_NONE,
    HK_CONCAVE,
    HK_EIKONAL,
    HK_LINEAR,
    HK_QUADRATIC,
    HK_SMOOTH,
)

__all__ = [
    "Hamiltonian",
    "Diffusion",
    "InitialData",
    "Problem",
    "legendre_transform",
    "eikonal",
    "quadratic",
    "smooth_bounded",
    "linear_transport",
    "concave_quadratic",
    "hamiltonian_from_callable",
    "heat",
    "degenerate_heat",
    "no_diffusion",
    "sawtooth",
    "cosine",
    "constant",
    "builtin_problems",
    "get_problem",
]

CUSTOM = -1


@dataclass(frozen=True)
class Hamiltonian:
    """A Hamiltonian ``H(p)`` with its analytic companions.

    Parameters
    ----------
    name : str
    kind : int
        Kernel code, or ``-1`` for a user callable (not usable by schemes).
    a : float
        Amplitude (``a|p|``, ``a p^2 / 2``, ...).
    L : float
        Gradient range ``[-L, L]``; the built-ins are linear beyond it.
    convex : bool
    lipschitz_bound : float
        ``||H'||`` on ``[-L, L]``, which is also the global bound after clamping.
    func : callable, optional
        Evaluator for custom Hamiltonians.
    """

    name: str
    kind: int
    a: float
    L: float
    convex: bool
    lipschitz_bound: float
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.a, self.L], dtype=float)

    @property
    def has_kernel(self) -> bool:
        return self.kind != CUSTOM

    @property
    def has_legendre(self) -> bool:
        return self.kind in (HK_EIKONAL, HK_QUADRATIC, HK_SMOOTH, HK_LINEAR)

    @property
    def monotone_structure(self) -> bool:
        """``H >= H(0) = 0``, nondecreasing on ``p > 0``, nonincreasing on ``p < 0``."""
        return self.kind in (HK_EIKONAL, HK_QUADRATIC, HK_SMOOTH) and self.a >= 0

    def __call__(self, p):
        if self.kind == CUSTOM:
            return np.asarray(self.func(np.asarray(p, dtype=float)), dtype=float)
        return _knp.ham(self.kind, self.params, p)

    def derivative(self, p):
        if self.kind == CUSTOM:
            raise NotImplementedError("custom Hamiltonians carry no derivative")
        return _knp.ham_d(self.kind, self.params, p)

    def second_derivative(self, p):
        """``H''`` on ``|p| < L`` (zero on the linear extension)."""
        p = np.asarray(p, dtype=float)
        inside = np.abs(p) < self.L
        if self.kind == HK_QUADRATIC:
            return np.where(inside, self.a, 0.0)
        if self.kind == HK_SMOOTH:
            return np.where(inside, self.a / (1.0 + p * p) ** 1.5, 0.0)
        if self.kind == HK_CONCAVE:
            return np.where(inside, -self.a, 0.0)
        if self.kind == HK_LINEAR:
            return np.zeros_like(p)
        raise ValueError(f"{self.name} is not twice differentiable")

    def star_domain(self) -> tuple[float, float]:
        """Closed effective domain of ``H*``."""
        if not self.has_legendre:
            raise ValueError(f"{self.name} has no Legendre transform available")
        return _knp.ham_star_dom(self.kind, self.params)

    def legendre(self, q):
        """Closed-form ``H*(q)``; ``+inf`` outside the effective domain."""
        lo, hi = self.star_domain()
        q = np.asarray(q, dtype=float)
        tol = 1e-14 * max(1.0, abs(lo), abs(hi))
        inside = (q >= lo - tol) & (q <= hi + tol)
        val = _knp.ham_star(self.kind, self.params, q)
        return np.where(inside, val, np.inf)

    def convex_parts(self) -> tuple[Callable, Callable]:
        """``(H1, H2)`` convex, nonnegative, with ``H = H1 - H2``."""
        if self.kind in (HK_EIKONAL, HK_QUADRATIC, HK_SMOOTH):
            return self.__call__, lambda p: np.zeros_like(np.asarray(p, dtype=float))
        if self.kind == HK_LINEAR:
            a = self.a
            return (lambda p: np.maximum(a * np.asarray(p, dtype=float), 0.0),
                    lambda p: np.maximum(-a * np.asarray(p, dtype=float), 0.0))
        if self.kind == HK_CONCAVE:
            flip = quadratic(self.L, self.a)
            return lambda p: np.zeros_like(np.asarray(p, dtype=float)), flip.__call__
        raise ValueError(f"no convex decomposition known for {self.name}")


def eikonal(a: float = 1.0, L: float = 1.0) -> Hamiltonian:
    return Hamiltonian("eikonal", HK_EIKONAL, a, L, True, a)


def quadratic(L: float = 1.0, a: float = 1.0) -> Hamiltonian:
    return Hamiltonian("quadratic", HK_QUADRATIC, a, L, True, a * L)


def smooth_bounded(L: float = 1.0, a: float = 1.0) -> Hamiltonian:
    return Hamiltonian("smooth", HK_SMOOTH, a, L, True, a * L / math.sqrt(1.0 + L * L))


def linear_transport(c: float = 1.0, L: float = 1.0) -> Hamiltonian:
    return Hamiltonian("linear", HK_LINEAR, c, L, True, abs(c))


def concave_quadratic(L: float = 1.0, a: float = 1.0) -> Hamiltonian:
    return Hamiltonian("concave", HK_CONCAVE, a, L, False, a * L)


def hamiltonian_from_callable(name, func, lipschitz_bound, L, convex=False) -> Hamiltonian:
    """Wrap a vectorized callable; usable by the Legendre routine, not by the schemes."""
    return Hamiltonian(name, CUSTOM, 1.0, L, convex, lipschitz_bound, func)


def legendre_transform(H: Hamiltonian, q_grid, p_range: tuple[float, float], p_samples: int) -> np.ndarray:
    """Sampled ``H*(q) = max_p (p q - H(p))`` over ``p_samples`` points of ``p_range``.

    Values where the supremum is not attained inside ``p_range`` because
    ``q`` lies beyond the end slopes of ``H`` are reported as ``+inf``.
    The sampling error for smooth ``H`` is ``O((range/p_samples)^2)``.

    Raises
    ------
    ValueError
        If ``H`` is not flagged convex.
    """
    if not H.convex:
        raise ValueError(f"Hamiltonian {H.name!r} is not flagged convex; no Legendre transform")
    p = np.linspace(p_range[0], p_range[1], int(p_samples))
    q = np.atleast_1d(np.asarray(q_grid, dtype=float))
    Hp = H(p)
    out = np.empty(q.shape[0])
    chunk = max(1, 2_000_000 // p.shape[0])
    for s in range(0, q.shape[0], chunk):
        qq = q[s : s + chunk]
        out[s : s + chunk] = np.max(qq[:, None] * p[None, :] - Hp[None, :], axis=1)
    dp = p[1] - p[0]
    right = (Hp[-1] - Hp[-2]) / dp
    left = (Hp[1] - Hp[0]) / dp
    tol = 1e-9 * max(1.0, abs(left), abs(right))
    out[(q > right + tol) | (q < left - tol)] = np.inf
    return out


@dataclass(frozen=True)
class Diffusion:
    """Scalar diffusion ``F(X)``, ``X = u_xx``."""

    name: str
    kind: int
    nu: float

    @property
    def params(self) -> np.ndarray:
        return np.array([self.nu], dtype=float)

    @property
    def derivative_bound(self) -> float:
        return abs(self.nu) if self.kind != FK_NONE else 0.0

    @property
    def monotone(self) -> bool:
        return self.kind == FK_NONE or self.nu >= 0.0

    @property
    def is_zero(self) -> bool:
        return self.kind == FK_NONE or self.nu == 0.0

    def __call__(self, X):
        return _knp.diff_f(self.kind, self.params, X)


def heat(nu: float) -> Diffusion:
    return Diffusion("heat", FK_LINEAR, nu)


def degenerate_heat(nu: float) -> Diffusion:
    return Diffusion("degenerate", FK_DEGENERATE, nu)


def no_diffusion() -> Diffusion:
    return Diffusion("none", FK_NONE, 0.0)


@dataclass(frozen=True)
class InitialData:
    """Periodic initial profile with declared Lipschitz constant and period."""

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    lipschitz: float
    period: float
    d1: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    d2: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))

    def grid(self, M: int) -> np.ndarray:
        return np.arange(M) * (self.period / M)

    def sample(self, M: int) -> np.ndarray:
        return np.ascontiguousarray(self(self.grid(M)), dtype=float)


def sawtooth(L: float = 1.0, P: float = 2.0) -> InitialData:
    """Triangle wave with slopes ``+-L``: zero at ``x = 0``, peak ``L P / 2`` at ``x = P/2``."""

    def f(x):
        y = np.mod(x, P)
        return L * (P / 2.0 - np.abs(y - P / 2.0))

    return InitialData("sawtooth", f, L, P)


def cosine(L: float = 1.0, P: float = 2.0) -> InitialData:
    """``A cos(2 pi x / P)`` with amplitude chosen so that ``||u0'|| = L``."""
    k = 2.0 * math.pi / P
    A = L / k
    return InitialData(
        "cosine",
        lambda x: A * np.cos(k * x),
        L,
        P,
        d1=lambda x: -A * k * np.sin(k * x),
        d2=lambda x: -A * k * k * np.cos(k * x),
    )


def constant(value: float = 0.0, P: float = 2.0) -> InitialData:
    return InitialData(
        "constant",
        lambda x: np.full_like(x, value, dtype=float),
        0.0,
        P,
        d1=lambda x: np.zeros_like(x, dtype=float),
        d2=lambda x: np.zeros_like(x, dtype=float),
    )


@dataclass(frozen=True)
class Problem:
    """A named combination of Hamiltonian, diffusion and initial data."""

    name: str
    H: Hamiltonian
    F: Diffusion
    u0: InitialData
    description: str = ""

    @property
    def L(self) -> float:
        return self.u0.lipschitz

    @property
    def period(self) -> float:
        return self.u0.period


def builtin_problems() -> dict[str, Problem]:
    """Named problems addressable from config files (sorted by name)."""
    P = 2.0
    probs = [
        Problem("concave_cosine", concave_quadratic(1.0), no_diffusion(), cosine(1.0, P),
                "H = -p^2/2 (non-convex), cosine data"),
        Problem("eikonal_constant", eikonal(), no_diffusion(), constant(0.0, P), "H = |p|, u0 = 0"),
        Problem("eikonal_cosine", eikonal(), no_diffusion(), cosine(1.0, P), "H = |p|, cosine data with L = 1"),
        Problem("eikonal_sawtooth", eikonal(), no_diffusion(), sawtooth(1.0, P), "H = |p|, triangle wave with L = 1"),
        Problem("linear_sawtooth", linear_transport(0.1), no_diffusion(), sawtooth(1.0, P),
                "H = 0.1 p, triangle wave (locally affine data)"),
        Problem("quadratic_cosine", quadratic(1.0), no_diffusion(), cosine(1.0, P), "H = p^2/2 clamped at L = 1"),
        Problem("quadratic_cosine_degenerate", quadratic(1.0), degenerate_heat(0.1), cosine(1.0, P),
                "H = p^2/2, F = 0.1 max(X, 0)"),
        Problem("quadratic_cosine_heat", quadratic(1.0), heat(0.1), cosine(1.0, P), "H = p^2/2, F = 0.1 X"),
        Problem("smooth_cosine", smooth_bounded(1.0), no_diffusion(), cosine(1.0, P), "H = sqrt(1+p^2) - 1"),
    ]
    return {p.name: p for p in sorted(probs, key=lambda p: p.name)}


def get_problem(name: str) -> Problem:
    cat = builtin_problems()
    try:
        return cat[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(cat)}") from None
