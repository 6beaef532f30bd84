"""Command-line entry point: reference runs, twin experiments, sweeps, bounds, plot data.

Configuration is a flat text file of ``key = value`` lines; ``#`` starts a
comment. Unknown keys are rejected. See ``DEFAULTS`` for every key.

Exit codes: 0 success, 2 configuration error, 3 numerical blow-up, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .assimilation import InterpolantSpec, NudgeParams, TwinConfig, run_twin_members
from .benard import (
    PhysParams,
    SimulationBlowUp,
    State,
    diffusive_limit,
    get_operator,
    integrate_to,
    random_perturbed_ic,
    spin_up,
)
from .diagnostics import FLOOR, assess_convergence
from .elliptic import build_poisson
from .io import CheckpointError, read_checkpoint, read_timeseries, write_checkpoint, write_timeseries
from .spectral import make_grid, resample
from .theory import bound_report

log = logging.getLogger("benard_da")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_IO = 0, 2, 3, 4
LONG_RA = 2.5e7

DEFAULTS: dict[str, object] = {
    "ra": 1e6,
    "pr": 1.0,
    "L": 2.0,
    "nx1": 128,
    "nx2": 65,
    "cfl": 0.9,
    "dt": 0.0,  # 0 = automatic
    "dt_rule": "spectral",
    "mu": 1.0,
    "interpolant": "spectral",  # or "local"
    "nf": 8,
    "nc": 8,
    "mx1": 8,
    "mx2": 4,
    "t_final": 20.0,
    "sample_dt": 0.25,
    "seed": 0,
    "amplitude": 0.01,
    "out": "run",
    "reference": "",  # reference checkpoint for twin / sweep; empty = spin one up
    "checkpoints": "no",  # write final-state checkpoints of twin runs
    "spinup_nx1": 64,  # coarse pre-spin-up grid; 0 disables it
    "spinup_nx2": 33,
    "spinup_window": 5.0,
    "spinup_tol": 0.01,
    "spinup_tmin": 20.0,
    "spinup_tmax": 400.0,
    "relax_time": 5.0,  # fine-grid integration after the coarse pre-spin-up
    "pairs": "8x8",  # sweep list, e.g. "6x8 24x7"
    "stop_ratio": 0.0,  # stop a twin early below this error ratio; 0 = never
    "converge_ratio": 1e-6,
    "r2_min": 0.98,
    "a_coeff": 1.0,
    "b_coeff": 1.0,
    "c0": 1.0,
}

_POSITIVE = ("ra", "pr", "L", "t_final", "sample_dt", "spinup_window", "spinup_tol",
             "spinup_tmax", "converge_ratio", "a_coeff", "b_coeff", "c0")


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    try:
        if isinstance(default, bool):
            raise TypeError
        if isinstance(default, int):
            v = float(raw)
            if v != int(v):
                raise ValueError
            return int(v)
        if isinstance(default, float):
            return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def parse_config(text: str) -> dict[str, object]:
    cfg = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = _coerce(key, raw)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    for key in _POSITIVE:
        v = cfg[key]
        if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
            raise ConfigError(f"{key} must be positive, got {v}")
    for key in ("mu", "dt", "stop_ratio", "relax_time"):
        if not cfg[key] >= 0:
            raise ConfigError(f"{key} must be non-negative, got {cfg[key]}")
    if not 0 < cfg["cfl"] <= 1:
        raise ConfigError("cfl must lie in (0, 1]")
    if cfg["dt_rule"] not in ("grid", "spectral"):
        raise ConfigError("dt_rule must be 'grid' or 'spectral'")
    if cfg["interpolant"] not in ("spectral", "local"):
        raise ConfigError("interpolant must be 'spectral' or 'local'")
    if cfg["checkpoints"] not in ("yes", "no"):
        raise ConfigError("checkpoints must be yes or no")
    if not 0 < cfg["r2_min"] <= 1:
        raise ConfigError("r2_min must lie in (0, 1]")
    try:
        make_grid(cfg["nx1"], cfg["nx2"], cfg["L"])
        if cfg["spinup_nx1"]:
            make_grid(cfg["spinup_nx1"], cfg["spinup_nx2"], cfg["L"])
        interpolant(cfg).validate(make_grid(cfg["nx1"], cfg["nx2"], cfg["L"]))
        parse_pairs(cfg["pairs"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if abs(cfg["t_final"] / cfg["sample_dt"] - round(cfg["t_final"] / cfg["sample_dt"])) > 1e-9:
        raise ConfigError("t_final must be a multiple of sample_dt")


def parse_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for tok in text.replace(",", " ").split():
        try:
            a, b = tok.lower().split("x")
            pairs.append((int(a), int(b)))
        except ValueError:
            raise ValueError(f"bad (nF, nC) pair {tok!r}; write e.g. 8x8") from None
    if not pairs:
        raise ValueError("pairs is empty")
    return pairs


def interpolant(cfg: dict, pair: tuple[int, int] | None = None) -> InterpolantSpec:
    if pair is not None:
        return InterpolantSpec.spectral_projection(*pair)
    if cfg["interpolant"] == "spectral":
        return InterpolantSpec.spectral_projection(cfg["nf"], cfg["nc"])
    return InterpolantSpec.local_average(cfg["mx1"], cfg["mx2"])


def phys(cfg: dict) -> PhysParams:
    return PhysParams(cfg["ra"], cfg["pr"], cfg["L"])


# -- building blocks ----------------------------------------------------------------

def auto_dt(cfg: dict, grid, pp: PhysParams, ps) -> float:
    if cfg["dt"] > 0:
        return cfg["dt"]
    return cfg["cfl"] * diffusive_limit(grid, pp, cfg["dt_rule"], ps)


def make_reference(cfg: dict) -> tuple[State, list[tuple[float, float]]]:
    """Spin a reference solution up to the attractor; returns it and its Nu series."""
    pp = phys(cfg)
    grid = make_grid(cfg["nx1"], cfg["nx2"], cfg["L"])
    ps = build_poisson(grid)
    kw = dict(window=cfg["spinup_window"], tol=cfg["spinup_tol"],
              t_min=cfg["spinup_tmin"], t_max=cfg["spinup_tmax"])
    series: list[tuple[float, float]] = []
    if cfg["spinup_nx1"]:
        cg = make_grid(cfg["spinup_nx1"], cfg["spinup_nx2"], cfg["L"])
        cps = build_poisson(cg)
        res = spin_up(random_perturbed_ic(cg, cfg["seed"], cfg["amplitude"]), pp, cps,
                      auto_dt(cfg, cg, pp, cps), **kw)
        series += zip(res.times.tolist(), res.nusselt.tolist())
        log.info("coarse spin-up %s at t=%.2f", "settled" if res.converged else "hit t_max", res.state.t)
        s = State(resample(res.state.omega, cg, grid), resample(res.state.theta, cg, grid), res.state.t)
        s.theta[:, 0], s.theta[:, -1] = 1.0, 0.0
        s.omega = get_operator(ps, pp).complete_vorticity(s.omega)
        if cfg["relax_time"] > 0:
            from .benard import nusselt_instant

            dt = auto_dt(cfg, grid, pp, ps)
            every = max(1, int(round(0.1 / dt)))
            s = integrate_to(s, s.t + cfg["relax_time"], dt, pp, ps,
                             callback=lambda st: series.append((st.t, nusselt_instant(st, pp, ps))),
                             every=every)
    else:
        res = spin_up(random_perturbed_ic(grid, cfg["seed"], cfg["amplitude"]), pp, ps,
                      auto_dt(cfg, grid, pp, ps), **kw)
        series += zip(res.times.tolist(), res.nusselt.tolist())
        s = res.state
    return s, series


def load_reference(cfg: dict) -> State:
    s, pp = read_checkpoint(cfg["reference"])
    want = phys(cfg)
    if (pp.ra, pp.pr, pp.L) != (want.ra, want.pr, want.L):
        raise ConfigError(f"reference checkpoint has Ra={pp.ra:g}, Pr={pp.pr:g}, L={pp.L:g}, "
                          f"config asks for Ra={want.ra:g}, Pr={want.pr:g}, L={want.L:g}")
    if s.omega.shape != (cfg["nx1"], cfg["nx2"]):
        raise ConfigError(f"reference checkpoint grid {s.omega.shape} differs from config "
                          f"({cfg['nx1']}, {cfg['nx2']})")
    return s


def reference_state(cfg: dict, out: Path) -> State:
    if cfg["reference"]:
        return load_reference(cfg)
    s, series = make_reference(cfg)
    write_checkpoint(s, phys(cfg), out / "reference.ckpt")
    _write_nu(series, out / "reference_nu.csv")
    return s


def _write_nu(series, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("t,nu\n")
        for t, nu in series:
            fh.write(f"{t:.17g},{nu:.17g}\n")


def twin_members(cfg: dict, reference: State, members: list[NudgeParams], ckpt_dir: Path | None = None):
    pp = phys(cfg)
    grid = make_grid(cfg["nx1"], cfg["nx2"], cfg["L"])
    ps = build_poisson(grid)
    tc = TwinConfig(pp, ps, reference, members, cfg["t_final"], cfg["sample_dt"],
                    dt=auto_dt(cfg, grid, pp, ps),
                    checkpoint_dir=ckpt_dir,
                    stop_ratio=cfg["stop_ratio"] or None)
    return run_twin_members(tc)


def bounds_for(cfg: dict):
    spec = interpolant(cfg)
    return bound_report(cfg["ra"], cfg["pr"], cfg["L"], cfg["mu"], spec.resolution(cfg["L"]),
                        cfg["a_coeff"], cfg["b_coeff"], cfg["c0"])


# -- commands ------------------------------------------------------------------------

def cmd_reference(cfg: dict, out: Path) -> int:
    s, series = make_reference(cfg)
    write_checkpoint(s, phys(cfg), out / "reference.ckpt")
    _write_nu(series, out / "reference_nu.csv")
    nus = [nu for t, nu in series if t >= series[-1][0] - cfg["spinup_window"]] if series else []
    avg = float(np.mean(nus)) if nus else float("nan")
    print(f"reference written to {out / 'reference.ckpt'} at t={s.t:.4f}; "
          f"Nu over the last window = {avg:.4f}")
    return EXIT_OK


def cmd_twin(cfg: dict, out: Path) -> int:
    ref = reference_state(cfg, out)
    member = NudgeParams(cfg["mu"], interpolant(cfg))
    ckpt = out / "checkpoints" if cfg["checkpoints"] == "yes" else None
    res = twin_members(cfg, ref, [member], ckpt)
    if res.failed:
        print(res.message, file=sys.stderr)
        return EXIT_BLOWUP
    records = res.records[0]
    write_timeseries(records, out / "twin.csv")
    verdict = assess_convergence(records, cfg["converge_ratio"], cfg["r2_min"],
                                 diverged=res.diverged[0] is not None)
    report = bounds_for(cfg)
    text = (f"twin: Ra={cfg['ra']:g} grid {cfg['nx1']}x{cfg['nx2']} mu={cfg['mu']:g} "
            f"observable {member.interpolant} dt={res.dt:.4g} t_final={cfg['t_final']:g}\n"
            + verdict.summary() + "\n" + report.to_text())
    (out / "twin_summary.txt").write_text(text + "\n" + report.to_keyvalue())
    print(text, end="")
    return EXIT_OK


def _sweep_worker(args) -> tuple[tuple[int, int], list, float | None]:
    cfg, pair, ref = args
    res = twin_members(cfg, ref, [NudgeParams(cfg["mu"], interpolant(cfg, pair))])
    if res.failed:
        raise SimulationBlowUp(res.message)
    return pair, res.records[0], res.diverged[0]


def cmd_sweep(cfg: dict, out: Path, jobs: int) -> int:
    pairs = parse_pairs(cfg["pairs"])
    ref = reference_state(cfg, out)
    # one independent twin per pair, so results do not depend on --jobs
    tasks = [(cfg, p, ref) for p in pairs]
    workers = min(jobs, len(tasks))
    if workers == 1:
        results = [_sweep_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, tasks))
    rows = {}
    for pair, records, div in results:
        write_timeseries(records, out / f"twin_{pair[0]}x{pair[1]}.csv")
        rows[pair] = assess_convergence(records, cfg["converge_ratio"], cfg["r2_min"],
                                        diverged=div is not None)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("nF,nC,rate_u,r2_u,rate_theta,r2_theta,rate_omega,r2_omega,converged\n")
        for pair in pairs:
            v = rows[pair]
            cols = []
            for ch in ("err_u", "err_theta", "err_omega"):
                f = v.fits[ch]
                cols += ["nan", "nan"] if f is None else [f"{f.rate:.6g}", f"{f.r2:.6g}"]
            fh.write(f"{pair[0]},{pair[1]},{','.join(cols)},{'yes' if v.converged else 'no'}\n")
    print((out / "sweep.csv").read_text(), end="")
    return EXIT_OK


def cmd_bounds(cfg: dict, out: Path) -> int:
    report = bounds_for(cfg)
    (out / "bounds.txt").write_text(report.to_keyvalue())
    print(report.to_text() + report.to_keyvalue(), end="")
    return EXIT_OK


def plot_rows(records) -> list[tuple[float, float, float, float]]:
    def lg(e):
        return math.log10(e) if e > 0 else -math.inf
    return [(r.t, lg(r.err_u), lg(r.err_theta), lg(r.err_omega)) for r in records]


def cmd_plotdata(path: str, out: Path) -> int:
    records = read_timeseries(path)
    target = out / (Path(path).stem + "_log10.dat")
    with open(target, "w") as fh:
        fh.write("# t log10_err_u log10_err_theta log10_err_omega\n")
        for row in plot_rows(records):
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")
    print(f"wrote {target}")
    return EXIT_OK


# -- argument handling ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="benard-da", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--long", action="store_true", help=f"allow Ra >= {LONG_RA:g}")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="sweep worker processes")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("reference", parents=[common], help="spin up a reference solution")
    sub.add_parser("twin", parents=[common], help="run one twin experiment")
    sub.add_parser("sweep", parents=[common], help="twin experiments over (nF, nC) pairs")
    sub.add_parser("bounds", parents=[common], help="print rigorous thresholds")
    pd = sub.add_parser("plotdata", parents=[common], help="log10 error columns from a time series")
    pd.add_argument("timeseries")
    return p


def load_config(args) -> dict:
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = parse_config(text)
    else:
        cfg = dict(DEFAULTS)
        validate_config(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out:
        cfg["out"] = args.out
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if cfg["ra"] >= LONG_RA and not args.long and args.command not in ("bounds", "plotdata"):
        raise ConfigError(f"Ra={cfg['ra']:g} is a paper-scale run; pass --long to allow it")
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "reference":
            return cmd_reference(cfg, out)
        if args.command == "twin":
            return cmd_twin(cfg, out)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.jobs)
        if args.command == "bounds":
            return cmd_bounds(cfg, out)
        return cmd_plotdata(args.timeseries, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationBlowUp as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (OSError, CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed input files (time series) are I/O problems, not config ones
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
