"""Error norms between two runs and exponential decay-rate fits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .benard import State
from .elliptic import PoissonSolver, velocity_from_vorticity
from .spectral import Grid, l2_inner

FLOOR = 1e-14


def _norm(grid: Grid, f: np.ndarray) -> float:
    return math.sqrt(max(l2_inner(grid, f, f), 0.0))


def error_norms_from_velocity(grid: Grid, ref: State, da: State, u_ref, u_da) -> tuple[float, float, float]:
    du1 = u_ref[0] - u_da[0]
    du2 = u_ref[1] - u_da[1]
    err_u = math.sqrt(max(l2_inner(grid, du1, du1) + l2_inner(grid, du2, du2), 0.0))
    return err_u, _norm(grid, ref.theta - da.theta), _norm(grid, ref.omega - da.omega)


def error_norms(ref: State, da: State, ps: PoissonSolver) -> tuple[float, float, float]:
    """L2 norms of the velocity, temperature and vorticity differences.

    Velocities are rebuilt from the vorticities through the streamfunction solve.
    """
    if ref.omega.shape != da.omega.shape:
        raise ValueError("states live on different grids")
    if ref.omega is da.omega and ref.theta is da.theta:
        return 0.0, 0.0, 0.0
    return error_norms_from_velocity(ps.grid, ref, da,
                                     velocity_from_vorticity(ps, ref.omega),
                                     velocity_from_vorticity(ps, da.omega))


def fit_exponential_rate(samples: Iterable[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of ln(e) against t and the fit's R^2.

    Samples with e below 1e-14 sit on the round-off floor and are dropped.
    Needs at least 8 usable samples.
    """
    arr = np.asarray(list(samples), dtype=float).reshape(-1, 2)
    t, e = arr[:, 0], arr[:, 1]
    keep = e >= FLOOR
    t, e = t[keep], e[keep]
    if len(t) < 8:
        raise ValueError(f"need at least 8 samples above the {FLOOR:g} floor, got {len(t)}")
    y = np.log(e)
    A = np.column_stack((t, np.ones_like(t)))
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * t + intercept)
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot <= 1e-30 * max(1.0, float(y @ y)):
        r2 = 1.0 if ss_res <= 1e-30 * max(1.0, float(y @ y)) else 0.0
        return 0.0 if abs(slope) < 1e-12 else float(slope), r2
    return float(slope), 1.0 - ss_res / ss_tot


def second_half(samples: Sequence) -> list:
    samples = list(samples)
    return samples[len(samples) // 2:]


def fit_second_half(times: Sequence[float], errors: Sequence[float]) -> tuple[float, float]:
    pairs = second_half(list(zip(times, errors)))
    return fit_exponential_rate(pairs)


CHANNELS = ("err_u", "err_theta", "err_omega")


@dataclass(frozen=True)
class ChannelFit:
    rate: float
    r2: float
    ratio: float  # final / initial error


@dataclass(frozen=True)
class Verdict:
    fits: dict[str, ChannelFit | None]
    converged: bool
    diverged: bool = False

    def summary(self) -> str:
        lines = []
        for ch, f in self.fits.items():
            if f is None:
                lines.append(f"  {ch:10s} rate=n/a")
            else:
                lines.append(f"  {ch:10s} rate={f.rate:+.4g}  r2={f.r2:.4f}  final/initial={f.ratio:.3e}")
        tag = "yes" if self.converged else ("no (assimilated run diverged)" if self.diverged else "no")
        return "\n".join(lines + [f"  converged: {tag}"])


def assess_convergence(records: Sequence, ratio: float = 1e-6, r2_min: float = 0.98,
                       diverged: bool = False) -> Verdict:
    """Fit each error channel on the second half of the run and decide convergence.

    A channel converges when its fitted rate is negative, the fit has
    R^2 >= ``r2_min`` and the last error is below ``ratio`` times the first.
    The run converges when every channel does.
    """
    records = list(records)
    fits: dict[str, ChannelFit | None] = {}
    ok = not diverged and len(records) > 1
    for ch in CHANNELS:
        t = [r.t for r in records]
        e = [getattr(r, ch) for r in records]
        try:
            rate, r2 = fit_second_half(t, e)
        except ValueError:
            fits[ch] = None
            # too few samples above the floor: fine only if the error vanished
            ok = ok and bool(e) and e[-1] < ratio * max(e[0], FLOOR)
            continue
        rat = e[-1] / e[0] if e[0] > 0 else math.inf
        fits[ch] = ChannelFit(rate, r2, rat)
        ok = ok and rate < 0 and r2 >= r2_min and rat < ratio
    return Verdict(fits, bool(ok), diverged)
