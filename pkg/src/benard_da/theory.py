"""Computable thresholds of the rigorous convergence theory.

Only orders of magnitude are known for the constants involved, so every
unknown O(1) prefactor defaults to 1 and can be overridden. Results are meant
for comparison with the resolutions that work in practice, not as sharp
predictions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

VACUOUS = "bound vacuous at this Ra"


def _positive(**kw):
    for name, v in kw.items():
        if not (v > 0):
            raise ValueError(f"{name} must be positive, got {v}")


def lambda1(L: float) -> float:
    """First Poincare-type constant 2*pi*min(1, 1/L)."""
    _positive(L=L)
    return 2.0 * math.pi * min(1.0, 1.0 / L)


def attractor_rho(nu: float, a_coeff: float = 1.0, b_coeff: float = 1.0) -> tuple[float, bool]:
    """Attractor radius a nu^-3 exp(b nu^-8).

    Returns
    -------
    rho : float
        The bound, ``inf`` when it does not fit in a double.
    overflow : bool
        True when ``rho`` overflowed.
    """
    _positive(nu=nu, a_coeff=a_coeff, b_coeff=b_coeff)
    pre = a_coeff * nu**-3.0
    expo = b_coeff * nu**-8.0
    # log(rho) beyond the largest double means overflow
    if not math.isfinite(pre) or expo + math.log(pre) > math.log(1.7976931348623157e308):
        return math.inf, True
    return pre * math.exp(expo), False


def mu_lower_bound(nu: float, kappa: float, lam1: float, rho: float) -> float:
    """Smallest relaxation coefficient covered by the convergence theorem."""
    _positive(nu=nu, kappa=kappa, lam1=lam1, rho=rho)
    if math.isinf(rho):
        return math.inf
    return 1.0 / (kappa * lam1) + rho / nu + rho**2 / (kappa**2 * lam1 * nu)


def h_max(mu: float, nu: float, c0: float = 1.0) -> float:
    """Largest observation spacing allowed by mu c0^2 h^2 <= nu."""
    _positive(mu=mu, nu=nu, c0=c0)
    return math.sqrt(nu / (mu * c0**2))


def decay_rate_bound(nu: float, kappa: float, lam1: float) -> float:
    """Guaranteed exponential rate lambda1 * min(nu, kappa)."""
    _positive(nu=nu, kappa=kappa, lam1=lam1)
    return lam1 * min(nu, kappa)


@dataclass(frozen=True)
class BoundReport:
    ra: float
    pr: float
    L: float
    lambda1: float
    rho: float
    rho_overflow: bool
    mu_min: float
    h_max: float
    decay_rate: float
    mu_used: float
    h_used: float
    a_coeff: float = 1.0
    b_coeff: float = 1.0
    c0: float = 1.0

    @property
    def mu_ratio(self) -> float:
        """mu_used / mu_min (0 when the bound is infinite)."""
        return self.mu_used / self.mu_min if math.isfinite(self.mu_min) else 0.0

    @property
    def h_ratio(self) -> float:
        """h_used / h_max; above 1 means coarser data than the theory allows."""
        return self.h_used / self.h_max if self.h_max > 0 else math.inf

    @property
    def mu_below_bound(self) -> bool:
        return self.mu_used < self.mu_min

    @property
    def h_above_bound(self) -> bool:
        return self.h_used > self.h_max

    def as_dict(self) -> dict[str, object]:
        return {
            "ra": self.ra, "pr": self.pr, "L": self.L,
            "lambda1": self.lambda1,
            "rho": self.rho, "rho_overflow": self.rho_overflow,
            "mu_min": self.mu_min, "h_max": self.h_max,
            "decay_rate_bound": self.decay_rate,
            "mu_used": self.mu_used, "h_used": self.h_used,
            "mu_ratio": self.mu_ratio, "h_ratio": self.h_ratio,
            "mu_below_bound": self.mu_below_bound, "h_above_bound": self.h_above_bound,
            "a_coeff": self.a_coeff, "b_coeff": self.b_coeff, "c0": self.c0,
        }

    def to_keyvalue(self) -> str:
        def fmt(v):
            if isinstance(v, bool):
                return "yes" if v else "no"
            return format(v, ".10g")
        return "\n".join(f"{k}={fmt(v)}" for k, v in self.as_dict().items()) + "\n"

    def to_text(self) -> str:
        rho = VACUOUS if self.rho_overflow else f"{self.rho:.4g}"
        mu_min = VACUOUS if math.isinf(self.mu_min) else f"{self.mu_min:.4g}"
        lines = [
            f"Theory bounds (order-of-magnitude, O(1) constants a={self.a_coeff:g} b={self.b_coeff:g} c0={self.c0:g})",
            f"  Ra={self.ra:.4g}  Pr={self.pr:g}  L={self.L:g}  lambda1={self.lambda1:.6g}",
            f"  attractor radius rho : {rho}",
            f"  mu required (>=)     : {mu_min}",
            f"  mu used              : {self.mu_used:.4g}" + ("  [below bound]" if self.mu_below_bound else ""),
            f"  h allowed (<=)       : {self.h_max:.4g}",
            f"  h used               : {self.h_used:.4g}" + ("  [above bound]" if self.h_above_bound else ""),
            f"  guaranteed decay rate: {self.decay_rate:.4g}",
        ]
        return "\n".join(lines) + "\n"


def bound_report(ra: float, pr: float, L: float, mu_used: float, h_used: float,
                 a_coeff: float = 1.0, b_coeff: float = 1.0, c0: float = 1.0) -> BoundReport:
    """Evaluate every threshold for one parameter set and compare with (mu, h) used."""
    _positive(ra=ra, pr=pr, L=L, h_used=h_used)
    if not mu_used >= 0:
        raise ValueError(f"mu_used must be non-negative, got {mu_used}")
    nu = math.sqrt(pr / ra)
    kappa = 1.0 / math.sqrt(pr * ra)
    lam = lambda1(L)
    rho, overflow = attractor_rho(nu, a_coeff, b_coeff)
    # with mu = 0 no resolution is admissible
    hm = h_max(mu_used, nu, c0) if mu_used > 0 else 0.0
    return BoundReport(ra, pr, L, lam, rho, overflow, mu_lower_bound(nu, kappa, lam, rho),
                       hm, decay_rate_bound(nu, kappa, lam), mu_used, h_used,
                       a_coeff, b_coeff, c0)
