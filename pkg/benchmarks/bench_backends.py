"""Wall-clock comparison of the numba kernels and their numpy fallbacks.

Run with ``python3 benchmarks/bench_backends.py [--repeat N]``.  Each
kernel is called once untimed (numba compilation) and then timed as the
best of ``repeat`` calls on identical inputs.  The two outputs are also
compared so a speedup never hides a disagreement.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from pathwise_hj import _kernels_numba as nb
from pathwise_hj import _kernels_numpy as npk
from pathwise_hj._codes import FK_LINEAR, FK_NONE, HK_EIKONAL, HK_QUADRATIC, SCHEME_LF1, SCHEME_LF2, SCHEME_TK
from pathwise_hj.paths import sample_brownian

HP = np.array([1.0, 1.0])
FP = np.array([0.1])


def _cases():
    rng = np.random.Generator(np.random.PCG64(7))
    M = 1024
    h = 2.0 / M
    x = np.arange(M) * h
    u0 = np.cos(np.pi * x)
    N = 2000
    dz = rng.uniform(-0.4, 0.4, N) * h
    dt = np.full(N, h * h / 0.5)
    probes = np.array([0, N // 2, N], dtype=np.int64)
    W = sample_brownian(11, 0.5, 2.0**-16)
    w = np.ascontiguousarray(W.scalar)
    rough = np.cumsum(rng.uniform(-1.0, 1.0, M)) * h

    def hl(mod):
        out = np.empty(M)
        mod.hopf_lax(rough, 0.05, h, HK_QUADRATIC, HP, out)
        return out

    return {
        "evolve lf_first_order M=1024 N=2000": lambda m: m.evolve(
            u0, dz, dt, SCHEME_LF1, 1.0, 0.0, HK_EIKONAL, HP, FK_NONE, FP, h, probes)[0],
        "evolve lf_second_order M=1024 N=2000": lambda m: m.evolve(
            u0, dz, dt, SCHEME_LF2, 1.0, 0.2 * h, HK_QUADRATIC, HP, FK_LINEAR, FP, h, probes)[0],
        "evolve trotter_kato M=256 N=200": lambda m: m.evolve(
            u0[::4], dz[:200] * 4, dt[:200] * 16, SCHEME_TK, 1.0, 0.0, HK_QUADRATIC, HP, FK_LINEAR, FP,
            4 * h, probes // 10)[0],
        "hopf_lax quadratic M=1024": hl,
        "stopping_times 2^15 samples": lambda m: np.asarray(m.stopping_times(W.times, w, 0.02, 0.5)),
        "holder_constant 2^15 samples": lambda m: np.asarray(m.holder_constant(w, 2.0**-16, 0.45)),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    print(f"{'kernel':40s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name, fn in _cases().items():
        a, b = fn(nb), fn(npk)
        diff = float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
        t_nb = min(timeit.repeat(lambda: fn(nb), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: fn(npk), number=1, repeat=args.repeat))
        print(f"{name:40s} {t_nb:11.4f} {t_np:11.4f} {t_np / t_nb:8.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
