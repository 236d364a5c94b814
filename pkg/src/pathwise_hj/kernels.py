"""Backend dispatch for the hot loops.

The public names re-exported here come from ``_kernels_numba`` when numba
is importable and ``PATHWISE_HJ_BACKEND`` is not ``numpy``; otherwise from
``_kernels_numpy``.  Both modules are importable directly for the
agreement tests and the benchmark.
"""

from ._backend import BACKEND

if BACKEND == "numba":
    from . import _kernels_numba as _impl
else:
    from . import _kernels_numpy as _impl

ham = _impl.ham
ham_d = _impl.ham_d
ham_star = _impl.ham_star
ham_star_dom = _impl.ham_star_dom
diff_f = _impl.diff_f
lf1_step = _impl.lf1_step
lf2_step = _impl.lf2_step
upwind_step = _impl.upwind_step
hopf_lax = _impl.hopf_lax
diffusion_substeps = _impl.diffusion_substeps
tk_step = _impl.tk_step
evolve = _impl.evolve
stopping_times = _impl.stopping_times
pair_candidates = _impl.pair_candidates
holder_constant = _impl.holder_constant

__all__ = [
    "BACKEND",
    "ham",
    "ham_d",
    "ham_star",
    "ham_star_dom",
    "diff_f",
    "lf1_step",
    "lf2_step",
    "upwind_step",
    "hopf_lax",
    "diffusion_substeps",
    "tk_step",
    "evolve",
    "stopping_times",
    "pair_candidates",
    "holder_constant",
]
