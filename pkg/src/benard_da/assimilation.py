"""Coarse vorticity observables and the nudged (assimilating) Benard system.

Two observables are supported:

* ``spectral_projection(nF, nC)``: keep Fourier wavenumbers |k| <= nF and
  Chebyshev degrees < nC.
* ``local_average(mx1, mx2)``: mean vorticity over each box of an
  ``mx1 x mx2`` tiling of the domain, injected as a piecewise-constant field.
  By Green's theorem box means of vorticity are the local circulations around
  the boxes (see ``local_circulation`` and ``box_means``).

The twin driver advances a reference run and any number of nudged runs in
lockstep; observations are taken from the reference at every RK stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as C

from .benard import (
    BenardOperator,
    PhysParams,
    SimulationBlowUp,
    State,
    _rdot,
    conduction_state,
    diffusive_limit,
    advective_limit,
    get_operator,
    nusselt_from_fields,
)
from .elliptic import PoissonSolver, velocity_from_vorticity
from .spectral import (
    Grid,
    cheb_backward,
    cheb_eval_matrix,
    cheb_forward,
    fourier_eval_matrix,
    project_low_modes,
    to_physical,
    to_spectral,
)

log = logging.getLogger(__name__)

SPECTRAL = "spectral_projection"
LOCAL = "local_average"


@dataclass(frozen=True)
class InterpolantSpec:
    kind: str
    n1: int  # nF or mx1
    n2: int  # nC or mx2

    @classmethod
    def spectral_projection(cls, nF: int, nC: int) -> "InterpolantSpec":
        return cls(SPECTRAL, int(nF), int(nC))

    @classmethod
    def local_average(cls, mx1: int, mx2: int) -> "InterpolantSpec":
        return cls(LOCAL, int(mx1), int(mx2))

    def validate(self, grid: Grid) -> None:
        if self.kind == SPECTRAL:
            if not 1 <= self.n1 <= grid.nx1 // 2:
                raise ValueError(f"nF={self.n1} outside [1, {grid.nx1 // 2}]")
            if not 1 <= self.n2 <= grid.nx2:
                raise ValueError(f"nC={self.n2} outside [1, {grid.nx2}]")
        elif self.kind == LOCAL:
            if self.n1 < 1 or self.n2 < 1:
                raise ValueError("box counts must be >= 1")
        else:
            raise ValueError(f"unknown interpolant kind {self.kind!r}")

    def resolution(self, L: float) -> float:
        """Length scale h resolved by the observable.

        Fourier truncation at nF resolves wavelengths down to L/(2 pi nF); a
        Chebyshev series of nC terms on [0, 1] has local wavenumber about 2 nC
        at mid-channel. Box averages resolve their largest side.
        """
        if self.kind == SPECTRAL:
            return max(L / (2 * math.pi * self.n1), 1.0 / (2 * self.n2))
        return max(L / self.n1, 1.0 / self.n2)

    def __str__(self) -> str:
        tag = "P" if self.kind == SPECTRAL else "Q"
        return f"{tag}{self.n1}x{self.n2}"


@dataclass(frozen=True)
class NudgeParams:
    mu: float
    interpolant: InterpolantSpec

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu >= 0):
            raise ValueError(f"mu must be finite and non-negative, got {self.mu}")


# -- box geometry -------------------------------------------------------------

def box_edges(grid: Grid, mx1: int, mx2: int) -> tuple[np.ndarray, np.ndarray]:
    return np.linspace(0.0, grid.L, mx1 + 1), np.linspace(0.0, 1.0, mx2 + 1)


def fourier_integral_weights(grid: Grid, a: float, b: float) -> np.ndarray:
    """Row vector r with r @ values = integral over [a, b] of the trig interpolant."""
    k = grid.wavenumbers
    alpha = 2 * np.pi * k / grid.L
    nz = alpha != 0
    I = np.empty(grid.nx1, dtype=complex)
    I[~nz] = b - a
    I[nz] = (np.exp(1j * alpha[nz] * b) - np.exp(1j * alpha[nz] * a)) / (1j * alpha[nz])
    nyq = grid.nx1 // 2
    an = alpha[nyq]
    I[nyq] = (np.sin(an * b) - np.sin(an * a)) / an
    fwd = np.fft.fft(np.eye(grid.nx1), axis=0) / grid.nx1
    return (I @ fwd).real


def cheb_integral_weights(grid: Grid, c: float, d: float) -> np.ndarray:
    """Row vector r with r @ values = integral over [c, d] of the Chebyshev interpolant."""
    n = grid.nx2
    anti = C.chebint(np.eye(n), axis=0)  # column j: antiderivative of T_j in xi
    span = C.chebval(2 * d - 1, anti) - C.chebval(2 * c - 1, anti)
    return 0.5 * span @ cheb_forward(np.eye(n), axis=0)


def _box_index(x: np.ndarray, edges: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(edges, x, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def _nodal_means(weights: np.ndarray, owner: np.ndarray, m: int) -> np.ndarray:
    """(m, n) rows averaging the nodes each box owns with the given quadrature weights."""
    A = np.eye(m)[owner].T * weights
    return A / A.sum(axis=1, keepdims=True)


@dataclass(frozen=True, eq=False)
class LocalAverageOperator:
    """Box means and their piecewise-constant extension.

    Each node belongs to exactly one box (half-open tiling). A box mean is
    the quadrature mean over the nodes it owns, so the operator is exactly
    idempotent: the piecewise-constant field reproduces its own means.
    """

    grid: Grid
    mx1: int
    mx2: int
    A1: np.ndarray  # (mx1, nx1): mean over x1-interval
    A2: np.ndarray  # (mx2, nx2)
    P1: np.ndarray  # (nx1, mx1) indicator
    P2: np.ndarray  # (nx2, mx2)

    @classmethod
    def build(cls, grid: Grid, mx1: int, mx2: int) -> "LocalAverageOperator":
        e1, e2 = box_edges(grid, mx1, mx2)
        o1, o2 = _box_index(grid.x1, e1), _box_index(grid.x2, e2)
        if len(np.unique(o1)) < mx1 or len(np.unique(o2)) < mx2:
            raise ValueError(f"{mx1}x{mx2} boxes leave some box without grid nodes")
        A1 = _nodal_means(grid.w1, o1, mx1)
        A2 = _nodal_means(grid.w2, o2, mx2)
        return cls(grid, mx1, mx2, A1, A2, np.eye(mx1)[o1], np.eye(mx2)[o2])

    def means(self, f: np.ndarray) -> np.ndarray:
        return self.A1 @ f @ self.A2.T

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Piecewise-constant field of box means; ``f`` may carry leading axes."""
        return self.P1 @ (self.A1 @ f @ self.A2.T) @ self.P2.T


def box_means(grid: Grid, omega: np.ndarray, mx1: int, mx2: int) -> np.ndarray:
    """Exact area means of the spectral interpolant of ``omega`` over each box.

    These equal the local circulations around the boxes (Green's theorem).
    """
    e1, e2 = box_edges(grid, mx1, mx2)
    A1 = np.array([fourier_integral_weights(grid, e1[j], e1[j + 1]) / (e1[j + 1] - e1[j])
                   for j in range(mx1)])
    A2 = np.array([cheb_integral_weights(grid, e2[j], e2[j + 1]) / (e2[j + 1] - e2[j])
                   for j in range(mx2)])
    return A1 @ omega @ A2.T


def interpolate(spec: InterpolantSpec, grid: Grid, omega: np.ndarray) -> np.ndarray:
    """Observable I_h applied to vorticity coefficients; returns coefficients."""
    spec.validate(grid)
    if spec.kind == SPECTRAL:
        return project_low_modes(grid, omega, spec.n1, spec.n2)
    op = LocalAverageOperator.build(grid, spec.n1, spec.n2)
    return to_spectral(grid, op.apply(to_physical(grid, omega)))


# -- local circulation ----------------------------------------------------------

def _check_box(box: Sequence[float]) -> tuple[float, float, float, float]:
    a, b, c, d = map(float, box)
    if not (b > a and d > c):
        raise ValueError(f"degenerate box {box}")
    return a, b, c, d


def circulation(u1: Callable, u2: Callable, box: Sequence[float], npts: int = 64) -> float:
    """(1/|Q|) times the counter-clockwise line integral of (u1, u2) around ``box``.

    ``u1``/``u2`` are callables ``f(x1, x2)`` accepting arrays; ``box`` is
    ``(a, b, c, d)`` for [a, b] x [c, d]. Gauss-Legendre on each edge.
    """
    a, b, c, d = _check_box(box)
    s, w = np.polynomial.legendre.leggauss(npts)
    xs = 0.5 * (b - a) * s + 0.5 * (a + b)
    ys = 0.5 * (d - c) * s + 0.5 * (c + d)
    wx, wy = 0.5 * (b - a) * w, 0.5 * (d - c) * w
    total = (wx @ u1(xs, np.full_like(xs, c)) + wy @ u2(np.full_like(ys, b), ys)
             - wx @ u1(xs, np.full_like(xs, d)) - wy @ u2(np.full_like(ys, a), ys))
    return float(total) / ((b - a) * (d - c))


def local_circulation(grid: Grid, u1: np.ndarray, u2: np.ndarray, box: Sequence[float],
                      npts: int | None = None) -> float:
    """Local circulation of grid velocities around ``box``, via spectral interpolation."""
    a, b, c, d = _check_box(box)
    if not (0 <= c and d <= 1):
        raise ValueError("box must lie inside 0 <= x2 <= 1")
    npts = npts or 2 * max(grid.nx1, grid.nx2)

    def edge_eval(field_):
        def f(x1, x2):
            x1 = np.asarray(x1, dtype=float)
            x2 = np.asarray(x2, dtype=float)
            if np.all(x2 == x2.flat[0]):
                return fourier_eval_matrix(grid, x1) @ field_ @ cheb_eval_matrix(grid, [x2.flat[0]])[0]
            return cheb_eval_matrix(grid, x2) @ field_.T @ fourier_eval_matrix(grid, [x1.flat[0]])[0]
        return f

    return circulation(edge_eval(u1), edge_eval(u2), (a, b, c, d), npts)


# -- nudged tendencies ----------------------------------------------------------

class MixedObservation:
    """An observable acting on closure-completed vorticity in mixed space."""

    def __init__(self, spec: InterpolantSpec, op: BenardOperator):
        spec.validate(op.grid)
        self.spec, self.op = spec, op
        grid = op.grid
        if spec.kind == SPECTRAL:
            self.nf = min(spec.n1, op.nk - 1) + 1
            keep = (np.arange(grid.nx2) < spec.n2).astype(float)
            self.Pc = cheb_backward(keep[:, None] * cheb_forward(np.eye(grid.nx2), axis=0), axis=0)
        else:
            self.local = LocalAverageOperator.build(grid, spec.n1, spec.n2)

    def __call__(self, W: np.ndarray) -> np.ndarray:
        if self.spec.kind == SPECTRAL:
            out = np.zeros_like(W)
            out[..., :self.nf] = _rdot(self.Pc, W[..., :self.nf])
            return out
        vals = self.op.to_values(W)  # (S, nx1, nx2)
        return self.op.to_mixed(self.local.apply(vals))


def nudged_rhs(s: State, observed: np.ndarray, nudge: NudgeParams, pp: PhysParams,
               ps: PoissonSolver) -> tuple[np.ndarray, np.ndarray]:
    """Benard tendency plus -mu (I_h(omega~) - observed) on the vorticity equation.

    ``observed`` is I_h(omega_ref) in coefficient layout. The temperature
    equation is not nudged.
    """
    op = get_operator(ps, pp)
    grid = ps.grid
    Y = op.to_mixed(np.stack((s.omega, s.theta - op.profile)))
    closed: list = []
    d = op.tendency(Y, closed)
    omega_c = op.to_values(closed[0])[0]
    own = interpolate(nudge.interpolant, grid, to_spectral(grid, omega_c))
    forcing = -nudge.mu * to_physical(grid, own - observed)
    d[:, 0] += op.to_mixed(forcing[None])[:, 0]
    d[0] = 0.0
    d[-1] = 0.0
    out = op.to_values(d)
    if not np.isfinite(out).all():
        raise SimulationBlowUp(f"non-finite nudged tendency at t={s.t:.6g}", last_good=s)
    return out[0], out[1]


class TwinStepper:
    """Lockstep RK4 for one reference state followed by nudged members."""

    def __init__(self, op: BenardOperator, members: Sequence[NudgeParams]):
        self.op = op
        self.members = list(members)
        self.obs = [MixedObservation(m.interpolant, op) for m in self.members]

    def tendency(self, Y: np.ndarray) -> np.ndarray:
        closed: list = []
        out = self.op.tendency(Y, closed)
        W = closed[0]
        cache: dict = {}
        for j, (m, ob) in enumerate(zip(self.members, self.obs), start=1):
            if m.mu == 0:
                continue
            key = m.interpolant
            if key not in cache:
                cache[key] = ob(W[:, 0:1])
            diff = ob(W[:, j:j + 1]) - cache[key]
            out[:, 2 * j:2 * j + 1] -= m.mu * diff
        out[0] = 0.0
        out[-1] = 0.0
        return out

    def step(self, states: Sequence[State], dt: float) -> list[State]:
        return self.op.step_states(states, dt, self.tendency)


# -- twin experiment driver -------------------------------------------------------

@dataclass
class TwinRecord:
    t: float
    err_u: float
    err_theta: float
    err_omega: float
    nu_ref: float
    nu_da: float


def assimilated_initial_state(grid: Grid, t: float = 0.0) -> State:
    """omega~ = 0, theta~ = 1 - x2."""
    s = conduction_state(grid)
    s.t = t
    return s


@dataclass
class TwinConfig:
    pp: PhysParams
    ps: PoissonSolver
    reference: State
    members: list[NudgeParams]
    t_final: float
    sample_dt: float
    dt: float | None = None
    cfl: float = 0.5
    dt_rule: str = "grid"
    assimilated: list[State] | None = None
    checkpoint_dir: Path | None = None
    stop_ratio: float | None = None  # stop early once every member is below this error ratio
    progress: Callable[[float, list[TwinRecord]], None] | None = None
    wall_stencil: int | None = None


@dataclass
class TwinResult:
    records: list[list[TwinRecord]]
    reference: State
    assimilated: list[State | None]
    dt: float
    failed: str | None = None
    message: str = ""
    diverged: list[float | None] = field(default_factory=list)  # blow-up time per member
    extra: dict = field(default_factory=dict)


def choose_dt(cfg: TwinConfig, op: BenardOperator, states: Sequence[State]) -> float:
    if cfg.dt is not None:
        dt = cfg.dt
    else:
        lim = diffusive_limit(op.grid, cfg.pp, cfg.dt_rule, op.ps)
        for s in states:
            u1, u2 = op.velocity(s.omega)
            lim = min(lim, advective_limit(op.grid, u1, u2))
        dt = cfg.cfl * lim
    # an integer number of steps per sample interval
    n = max(1, math.ceil(cfg.sample_dt / dt - 1e-9))
    return cfg.sample_dt / n


def twin_record(ps: PoissonSolver, pp: PhysParams, ref: State, da: State,
                ref_u=None) -> TwinRecord:
    from .diagnostics import error_norms_from_velocity

    u_ref = ref_u if ref_u is not None else velocity_from_vorticity(ps, ref.omega)
    u_da = velocity_from_vorticity(ps, da.omega)
    eu, et, ew = error_norms_from_velocity(ps.grid, ref, da, u_ref, u_da)
    return TwinRecord(ref.t, eu, et, ew,
                      nusselt_from_fields(ps.grid, pp, u_ref[1], ref.theta),
                      nusselt_from_fields(ps.grid, pp, u_da[1], da.theta))


def run_twin_members(cfg: TwinConfig) -> TwinResult:
    """Advance the reference and every nudged member in lockstep.

    A member whose state stops being finite is marked diverged and dropped;
    the others carry on. A reference blow-up ends the run.
    """
    from .io import write_checkpoint

    if cfg.wall_stencil is None:
        op = get_operator(cfg.ps, cfg.pp)
    else:
        op = get_operator(cfg.ps, cfg.pp, cfg.wall_stencil)
    ref = cfg.reference.copy()
    # make the reference wall vorticity consistent with the closure
    ref.omega = op.complete_vorticity(ref.omega)
    if cfg.assimilated is None:
        das = [assimilated_initial_state(op.grid, ref.t) for _ in cfg.members]
    else:
        if len(cfg.assimilated) != len(cfg.members):
            raise ValueError("one assimilated initial state per member is required")
        das = [s.copy() for s in cfg.assimilated]
    for d in das:
        d.omega = op.complete_vorticity(d.omega)
    dt = choose_dt(cfg, op, [ref, *das])
    steps_per_sample = int(round(cfg.sample_dt / dt))
    nsamples = int(round(cfg.t_final / cfg.sample_dt))
    log.info("twin run: dt=%.4g, %d samples x %d steps, %d members",
             dt, nsamples, steps_per_sample, len(cfg.members))

    active = list(range(len(cfg.members)))  # member indices still running
    stepper = TwinStepper(op, cfg.members)
    diverged: list[float | None] = [None] * len(cfg.members)
    final: list[State | None] = [None] * len(cfg.members)

    def sample(states):
        u_ref = velocity_from_vorticity(cfg.ps, states[0].omega)
        return [twin_record(cfg.ps, cfg.pp, states[0], d, u_ref) for d in states[1:]]

    states = [ref, *das]
    records: list[list[TwinRecord]] = [[r] for r in sample(states)]
    t0 = ref.t
    failed = None
    message = ""
    for i in range(1, nsamples + 1):
        k = 0
        while k < steps_per_sample:
            try:
                states = stepper.step(states, dt)
                k += 1
            except SimulationBlowUp as exc:
                if 0 in exc.bad_states:
                    failed = "reference"
                    message = f"reference run blew up: {exc}"
                    log.error(message)
                    break
                bad = {active[b - 1] for b in exc.bad_states}
                for m in sorted(bad):
                    diverged[m] = states[0].t
                    log.warning("member %d (%s, mu=%g) diverged at t=%.4g", m,
                                cfg.members[m].interpolant, cfg.members[m].mu, states[0].t)
                keep = [a for a in active if a not in bad]
                states = [states[0]] + [states[1 + active.index(a)] for a in keep]
                active = keep
                stepper = TwinStepper(op, [cfg.members[a] for a in active])
        if failed:
            break
        t_exact = t0 + i * cfg.sample_dt
        for s in states:
            s.t = t_exact
        for a, rec in zip(active, sample(states)):
            records[a].append(rec)
        if cfg.progress is not None:
            cfg.progress(t_exact, [records[a][-1] for a in active])
        if not active:
            break
        if cfg.stop_ratio is not None and all(
            r[-1].err_u <= cfg.stop_ratio * r[0].err_u and r[-1].err_theta <= cfg.stop_ratio * r[0].err_theta
            for r in (records[a] for a in active)
        ):
            break

    for a, s in zip(active, states[1:]):
        final[a] = s
    if failed is None and any(d is not None for d in diverged) and not active:
        message = "every assimilated run diverged"
    result = TwinResult(records, states[0], final, dt, failed, message, diverged)
    if cfg.checkpoint_dir is not None and failed is None:
        d = Path(cfg.checkpoint_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_checkpoint(states[0], cfg.pp, d / "reference_final.ckpt")
        for j, s in enumerate(final):
            if s is not None:
                write_checkpoint(s, cfg.pp, d / f"assimilated_{j}_final.ckpt")
    return result


def run_twin(cfg: TwinConfig) -> list[TwinRecord]:
    """Single-member twin experiment; raises if either run blows up."""
    if len(cfg.members) != 1:
        raise ValueError("run_twin takes exactly one nudging configuration")
    res = run_twin_members(cfg)
    if res.failed:
        raise SimulationBlowUp(res.message)
    if res.diverged[0] is not None:
        raise SimulationBlowUp(f"assimilated run blew up at t={res.diverged[0]:.6g}")
    return res.records[0]
