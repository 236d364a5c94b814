"""Command-line entry point.

Usage::

    pathwise-hj run CONFIG [--out DIR] [--jobs N] [--seed-offset K]
    pathwise-hj list
    pathwise-hj calibrate [--out DIR] [--samples N] [--seed-offset K]

A config is an INI file with sections ``[study]``, ``[problem]``,
``[scheme]``, ``[driver]`` and ``[output]``; see the README for the grammar.
The exit status of ``run`` is 0 exactly when every line of the run's
``verdicts.txt`` reads ``PASS``.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import datetime
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .harness import (
    DRIVER_FAMILIES,
    BoundStudyConfig,
    DistributionConfig,
    RateStudyConfig,
    bound_study,
    distribution_study,
    exit_time_moments,
    rate_study,
    seed_for,
    stopping_time_stats,
)
from .paths import CFLError
from .problems import builtin_problems
from .schemes import SCHEME_KINDS

STUDY_KINDS = ("bound", "distribution", "rate", "stopping_stats")

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_CFL = 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- parsing


def parse_length(tok: str) -> float:
    """``0.125``, ``2^-3`` or ``1/8``."""
    tok = tok.strip()
    if "^" in tok:
        base, exp = tok.split("^", 1)
        return float(base) ** float(exp)
    if "/" in tok:
        num, den = tok.split("/", 1)
        return float(num) / float(den)
    return float(tok)


def parse_h_list(text: str) -> tuple[float, ...]:
    """Comma-separated lengths; ``2^-a:2^-b`` expands to the dyadic range."""
    out: list[float] = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        if ":" in tok:
            a, b = tok.split(":", 1)
            ea = int(a.strip().split("^", 1)[1])
            eb = int(b.strip().split("^", 1)[1])
            step = 1 if eb >= ea else -1
            out.extend(2.0**e for e in range(ea, eb + step, step))
        else:
            out.append(parse_length(tok))
    return tuple(out)


def _convert(name: str, default, raw: str):
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return parse_length(raw)
    if isinstance(default, tuple):
        if name in ("h_list", "h_choices"):
            return parse_h_list(raw)
        return tuple(t.strip() for t in raw.split(",") if t.strip())
    return raw.strip()


_SECTIONS = ("study", "problem", "scheme", "driver", "output")
_RENAMES = {("study", "name"): "study", ("problem", "id"): "problem", ("scheme", "kind"): "scheme"}


def load_config(path) -> tuple[str, object, Path]:
    """Parse ``path`` into ``(study_kind, config_object, output_dir)``."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # field names such as ``T`` are case-sensitive
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.ParsingError as exc:
        where = "; ".join(f"line {n}: {line.strip()!r}" for n, line in exc.errors)
        raise ConfigError(f"{path}: cannot parse {where}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc})") from exc
    for sec in cp.sections():
        if sec not in _SECTIONS:
            raise ConfigError(f"{path}: unknown section [{sec}]")
    if not cp.has_option("study", "kind"):
        raise ConfigError(f"{path}: [study] kind is required (one of {', '.join(STUDY_KINDS)})")
    kind = cp.get("study", "kind").strip()
    cls = {
        "rate": RateStudyConfig,
        "bound": BoundStudyConfig,
        "distribution": DistributionConfig,
        "stopping_stats": StoppingConfig,
    }.get(kind)
    if cls is None:
        raise ConfigError(f"{path}: [study] kind = {kind!r} is not one of {', '.join(STUDY_KINDS)}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    values = {}
    for sec in cp.sections():
        if sec == "output":
            continue
        for key, raw in cp.items(sec):
            if sec == "study" and key == "kind":
                continue
            name = _RENAMES.get((sec, key), key)
            where = f"{path}:{_line_of(path, sec, key)}"
            if name not in fields:
                raise ConfigError(f"{where}: [{sec}] {key}: unknown field for a {kind} study")
            try:
                values[name] = _convert(name, getattr(defaults, name), raw)
            except ValueError as exc:
                raise ConfigError(f"{where}: [{sec}] {key} = {raw!r}: {exc}") from exc
    try:
        cfg = cls(**values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    _validate(cfg, path)
    out = Path(cp.get("output", "dir", fallback=f"runs/{getattr(cfg, 'study', kind)}"))
    return kind, cfg, out


def _line_of(path, section: str, key: str) -> int:
    """1-based line of ``key`` inside ``[section]`` (0 if not found)."""
    current = None
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            t = line.strip()
            if t.startswith("[") and t.endswith("]"):
                current = t[1:-1].strip()
            elif current == section and t.split("=", 1)[0].split(":", 1)[0].strip() == key:
                return n
    return 0


def _validate(cfg, path):
    probs = builtin_problems()
    if hasattr(cfg, "problem") and cfg.problem not in probs:
        raise ConfigError(f"{path}: [problem] id = {cfg.problem!r} is not in the catalogue")
    if hasattr(cfg, "scheme") and cfg.scheme not in SCHEME_KINDS:
        raise ConfigError(f"{path}: [scheme] kind = {cfg.scheme!r} is not one of {', '.join(SCHEME_KINDS)}")
    hl = getattr(cfg, "h_list", None)
    if hl is not None and any(b >= a for a, b in zip(hl, hl[1:])):
        raise ConfigError(f"{path}: [driver] h_list must be sorted in strictly decreasing order")
    lf = getattr(cfg, "lam_fraction", None)
    if lf is not None and not lf > 0:
        raise ConfigError(f"{path}: [driver] lam_fraction must be positive")


@dataclasses.dataclass
class StoppingConfig:
    study: str = "stopping"
    h_list: tuple = (2.0**-8,)
    seeds: int = 200
    T: float = 0.5
    lambda0: float = 1.0
    fine_factor: float = 64.0
    mc_samples: int = 1_000_000
    seed_offset: int = 0


# ---------------------------------------------------------------- output


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")


def write_kv(path: Path, items: dict) -> None:
    with open(path, "w") as fh:
        for k in sorted(items):
            fh.write(f"{k} = {_fmt(items[k])}\n")


def write_verdicts(path: Path, verdicts: dict) -> None:
    with open(path, "w") as fh:
        for k in sorted(verdicts):
            fh.write(f"{k} = {'PASS' if verdicts[k] else 'FAIL'}\n")


def exit_status_from_verdicts(path: Path) -> int:
    """0 iff the file is nonempty and every line ends in ``PASS``."""
    try:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError:
        return EXIT_VERDICT
    if not lines:
        return EXIT_VERDICT
    return EXIT_OK if all(ln.rsplit("=", 1)[-1].strip() == "PASS" for ln in lines) else EXIT_VERDICT


def write_resolved_config(path: Path, kind: str, cfg, out: Path) -> None:
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["study"] = {"kind": kind}
    body = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(_fmt(x) for x in v)
        else:
            v = _fmt(v)
        body[f.name] = v
    cp["driver"] = body
    cp["output"] = {"dir": str(out)}
    with open(path, "w") as fh:
        cp.write(fh)


def _versions() -> dict:
    import scipy

    out = {"version.python": platform.python_version(), "version.numpy": np.__version__,
           "version.scipy": scipy.__version__, "version.pathwise_hj": __version__, "backend": kernels.BACKEND}
    try:
        import numba

        out["version.numba"] = numba.__version__
    except ImportError:  # pragma: no cover
        out["version.numba"] = "absent"
    return out


# ---------------------------------------------------------------- study runners


def _run_rate(cfg: RateStudyConfig, out: Path, jobs: int):
    rep = rate_study(cfg, jobs)
    write_csv(out / "rate.csv", ["study", "h", "rho", "seed", "error", "corrected_error"],
              [(r.study, r.h, r.rho, r.seed, r.error, r.corrected_error) for r in rep.rows])
    meta = {"fit.slope": rep.fit.slope if rep.fit else math.nan,
            "fit.max_residual": rep.fit.max_residual if rep.fit else math.nan,
            "lipschitz_max": rep.meta["lipschitz_max"]}
    for h, v in rep.corrected_medians.items():
        meta[f"corrected_median.h={h:.17g}"] = v
    return meta, rep.verdicts


def _run_bound(cfg: BoundStudyConfig, out: Path, jobs: int):
    res = bound_study(cfg, jobs)
    write_csv(out / "bound_train.csv", ["index", "family", "h", "error", "sum_sq", "N", "C_needed"],
              [(s.index, s.family, s.h, s.error, s.sum_sq, s.N, s.C_needed) for s in res.train])
    write_csv(out / "bound.csv", ["index", "family", "h", "eps", "sum_sq", "N", "penalty", "rhs", "error", "passed"],
              [(s.index, s.family, r.h, r.eps, r.sum_sq, r.N, r.penalty, r.rhs, r.error, r.passed)
               for s, r in zip(res.holdout, res.records)])
    return {"C_hat": res.C_hat, "violations": res.violations}, res.verdicts


def _run_stopping(cfg: StoppingConfig, out: Path, jobs: int):
    mc = exit_time_moments(cfg.mc_samples, 1.0 / cfg.fine_factor, seed=seed_for(cfg.study + "/mc", 0, offset=cfg.seed_offset))
    rows = stopping_time_stats(cfg.h_list, cfg.seeds, cfg.T, cfg.lambda0, mc["c1"], mc["c2"], cfg.study,
                               cfg.fine_factor, cfg.seed_offset)
    header = [f.name for f in dataclasses.fields(rows[0])]
    write_csv(out / "stopping.csv", header, [[getattr(r, k) for k in header] for r in rows])
    verdicts = {"K_eta2_bound": all(r.K_ok for r in rows), "sumsq_bound": all(r.sumsq_ok for r in rows)}
    return {f"c_hat.{k}": v for k, v in mc.items()}, verdicts


def _run_distribution(cfg: DistributionConfig, out: Path, jobs: int):
    rows, ref, verdicts = distribution_study(cfg, jobs)
    write_csv(out / "ks.csv", ["h", "rho", "ks", "n", "noise_band"], [(r.h, r.rho, r.ks, r.n, r.noise_band) for r in rows])
    return {"reference.mean": float(ref.mean()), "reference.std": float(ref.std())}, verdicts


_RUNNERS = {"rate": _run_rate, "bound": _run_bound, "stopping_stats": _run_stopping, "distribution": _run_distribution}


def run(config_path, out: str | None = None, jobs: int = 1, seed_offset: int = 0) -> tuple[int, Path | None]:
    """Execute one config; returns ``(exit_status, run_directory)``."""
    try:
        kind, cfg, out_dir = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    if seed_offset:
        cfg = dataclasses.replace(cfg, seed_offset=seed_offset)
    out_dir = Path(out) if out else out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(out_dir / "config.ini", kind, cfg, out_dir)
    try:
        meta, verdicts = _RUNNERS[kind](cfg, out_dir, jobs)
    except CFLError as exc:
        print(f"CFL abort: {exc}", file=sys.stderr)
        write_verdicts(out_dir / "verdicts.txt", {"cfl": False})
        return EXIT_CFL, out_dir
    meta.update(_versions())
    meta["study.kind"] = kind
    meta["seed.scheme"] = "blake2b-64(study|replicate|h|offset), numpy PCG64, standard_normal"
    meta["seed_offset"] = getattr(cfg, "seed_offset", 0)
    meta["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    write_kv(out_dir / "metadata.txt", meta)
    if not verdicts:
        verdicts = {"completed": True}
    write_verdicts(out_dir / "verdicts.txt", verdicts)
    return exit_status_from_verdicts(out_dir / "verdicts.txt"), out_dir


def list_catalogue() -> list[str]:
    """Sorted ``category name`` lines for problems, schemes, drivers and studies."""
    lines = []
    for name, p in builtin_problems().items():
        lines.append(f"problem {name}: {p.description}")
    for s in SCHEME_KINDS:
        lines.append(f"scheme {s}")
    for d in DRIVER_FAMILIES:
        lines.append(f"driver {d}")
    for k in STUDY_KINDS:
        lines.append(f"study {k}")
    return sorted(lines)


def calibrate(out: str, samples: int = 1_000_000, seed_offset: int = 0, fine_factor: float = 64.0,
              n_train: int = 20, jobs: int = 1) -> Path:
    """Re-estimate ``c1``, ``c2`` and ``C_hat`` with fresh seeds and write ``constants.txt``."""
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mc = exit_time_moments(samples, 1.0 / fine_factor, seed=seed_for("calibrate/mc", 0, offset=seed_offset))
    bcfg = BoundStudyConfig(study="calibrate/bound", n_train=n_train, n_holdout=0, seed_offset=seed_offset)
    res = bound_study(bcfg, jobs)
    consts = {f"c_hat.{k}": v for k, v in mc.items()}
    consts["C_hat"] = res.C_hat
    consts["C_hat.n_train"] = n_train
    consts["seed_offset"] = seed_offset
    write_kv(out_dir / "constants.txt", consts)
    return out_dir / "constants.txt"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pathwise-hj", description="Monotone schemes for rough-path driven Hamilton-Jacobi equations")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a study described by an INI config")
    r.add_argument("config")
    r.add_argument("--out", help="run directory (overrides [output] dir)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes")
    r.add_argument("--seed-offset", type=int, default=0, help="shift every derived seed")
    sub.add_parser("list", help="list problems, schemes, driver families and study kinds")
    c = sub.add_parser("calibrate", help="re-estimate c1, c2 and C_hat with fresh seeds")
    c.add_argument("--out", default="runs/calibrate")
    c.add_argument("--samples", type=int, default=1_000_000)
    c.add_argument("--train", type=int, default=20)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--seed-offset", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(list_catalogue()))
        return EXIT_OK
    if args.command == "calibrate":
        path = calibrate(args.out, args.samples, args.seed_offset, n_train=args.train, jobs=args.jobs)
        print(path)
        return EXIT_OK
    status, out_dir = run(args.config, args.out, args.jobs, args.seed_offset)
    if out_dir is not None:
        print(out_dir)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
