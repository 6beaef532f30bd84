"""Rigorous thresholds of the convergence theory."""

import math

import pytest
from hypothesis import given, strategies as st

from benard_da.theory import (
    VACUOUS,
    attractor_rho,
    bound_report,
    decay_rate_bound,
    h_max,
    lambda1,
    mu_lower_bound,
)

pos = st.floats(0.05, 20.0)


class TestLambda1:
    @pytest.mark.parametrize("L,expected", [(2.0, math.pi), (1.0, 2 * math.pi), (0.5, 2 * math.pi),
                                            (4.0, math.pi / 2)])
    def test_values(self, L, expected):
        assert lambda1(L) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("L", [0.0, -1.0])
    def test_rejects(self, L):
        with pytest.raises(ValueError):
            lambda1(L)


class TestAttractorRho:
    def test_unit(self):
        rho, overflow = attractor_rho(1.0)
        assert rho == pytest.approx(math.e, rel=1e-15) and not overflow

    def test_prefactors(self):
        rho, _ = attractor_rho(1.0, a_coeff=2.0, b_coeff=0.5)
        assert rho == pytest.approx(2 * math.exp(0.5), rel=1e-15)

    def test_halving_nu_increases(self):
        assert attractor_rho(0.6)[0] > attractor_rho(1.2)[0]

    def test_overflow_at_production_ra(self):
        rho, overflow = attractor_rho(math.sqrt(1 / 2.5e7))
        assert overflow and math.isinf(rho)

    def test_largest_finite(self):
        # b nu^-8 just below log(max double)
        rho, overflow = attractor_rho(1.0, b_coeff=700.0)
        assert not overflow and math.isfinite(rho)
        assert attractor_rho(1.0, b_coeff=710.0)[1]

    @pytest.mark.parametrize("args", [(0.0,), (1.0, -1.0), (1.0, 1.0, 0.0)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            attractor_rho(*args)


class TestMuLowerBound:
    def test_unit(self):
        assert mu_lower_bound(1, 1, 1, 1) == pytest.approx(3.0)

    def test_third_term_quadruples(self):
        nu, kappa, lam = 0.3, 0.7, 2.0
        third = lambda rho: rho**2 / (kappa**2 * lam * nu)
        a, b = mu_lower_bound(nu, kappa, lam, 1.5), mu_lower_bound(nu, kappa, lam, 3.0)
        rest = lambda rho: 1 / (kappa * lam) + rho / nu
        assert b - rest(3.0) == pytest.approx(4 * (a - rest(1.5)), rel=1e-13)
        assert a - rest(1.5) == pytest.approx(third(1.5), rel=1e-13)

    @pytest.mark.parametrize("ra", [1e4, 1e6, 2.5e7, 1e9])
    def test_grows_like_ra_three_halves(self, ra):
        # Pr = 1, fixed rho: mu_min >= rho^2 Ra^{3/2} / lambda1
        nu = kappa = ra**-0.5
        lam, rho = math.pi, 1.0
        assert mu_lower_bound(nu, kappa, lam, rho) >= rho**2 * ra**1.5 / lam

    def test_loglog_slope(self):
        f = lambda ra: mu_lower_bound(ra**-0.5, ra**-0.5, math.pi, 1.0)
        slope = math.log(f(1e10) / f(1e8)) / math.log(100)
        assert slope == pytest.approx(1.5, abs=1e-3)

    def test_infinite_rho(self):
        assert math.isinf(mu_lower_bound(1, 1, 1, math.inf))


class TestHMax:
    def test_unit(self):
        assert h_max(1, 1, 1) == 1.0

    def test_quadruple_mu_halves(self):
        assert h_max(4.0, 0.3) == pytest.approx(h_max(1.0, 0.3) / 2, rel=1e-15)

    def test_production_value(self):
        nu = math.sqrt(1 / 2.5e7)
        assert h_max(1.0, nu) == pytest.approx((1 / 2.5e7) ** 0.25, rel=1e-14)
        assert h_max(1.0, nu) == pytest.approx(0.0141, abs=5e-5)

    def test_rejects_zero_mu(self):
        with pytest.raises(ValueError):
            h_max(0.0, 1.0)


class TestDecayRate:
    def test_equal_diffusivities(self):
        assert decay_rate_bound(0.2, 0.2, 3.0) == pytest.approx(0.6)

    def test_desk_scale(self):
        nu = kappa = math.sqrt(1 / 1e6)
        assert decay_rate_bound(nu, kappa, lambda1(2.0)) == pytest.approx(math.pi * 1e-3, rel=1e-13)

    @pytest.mark.parametrize("pr", [2.0, 7.0, 100.0])
    def test_kappa_limits_for_large_pr(self, pr):
        ra = 1e6
        nu, kappa = math.sqrt(pr / ra), 1 / math.sqrt(pr * ra)
        assert decay_rate_bound(nu, kappa, 1.0) == kappa


class TestMonotone:
    @given(nu=pos, kappa=pos, lam=pos, rho=pos, f=st.floats(1.01, 4.0))
    def test_mu_lower_bound(self, nu, kappa, lam, rho, f):
        base = mu_lower_bound(nu, kappa, lam, rho)
        assert mu_lower_bound(nu * f, kappa, lam, rho) < base
        assert mu_lower_bound(nu, kappa * f, lam, rho) < base
        assert mu_lower_bound(nu, kappa, lam * f, rho) < base
        assert mu_lower_bound(nu, kappa, lam, rho * f) > base

    @given(mu=pos, nu=pos, c0=pos, f=st.floats(1.01, 4.0))
    def test_h_max(self, mu, nu, c0, f):
        base = h_max(mu, nu, c0)
        assert h_max(mu * f, nu, c0) < base
        assert h_max(mu, nu * f, c0) > base
        assert h_max(mu, nu, c0 * f) < base

    @given(nu=pos, kappa=pos, lam=pos, f=st.floats(1.01, 4.0))
    def test_decay_rate(self, nu, kappa, lam, f):
        base = decay_rate_bound(nu, kappa, lam)
        assert decay_rate_bound(nu * f, kappa, lam) >= base
        assert decay_rate_bound(nu, kappa * f, lam) >= base
        assert decay_rate_bound(nu, kappa, lam * f) > base

    @given(nu=st.floats(0.6, 3.0), f=st.floats(1.01, 2.0))
    def test_rho(self, nu, f):
        assert attractor_rho(nu * f)[0] < attractor_rho(nu)[0]


class TestBoundReport:
    def test_desk_scale_flags(self):
        rep = bound_report(1e6, 1.0, 2.0, mu_used=1.0, h_used=0.0625)
        assert rep.rho_overflow and math.isinf(rep.mu_min)
        assert rep.mu_below_bound and rep.h_above_bound
        assert rep.h_max == pytest.approx(10**-1.5, rel=1e-12)
        assert rep.lambda1 == pytest.approx(math.pi)
        text = rep.to_text()
        assert VACUOUS in text and "[below bound]" in text and "[above bound]" in text

    def test_within_bounds_at_tiny_ra(self):
        # nu = 2 keeps rho finite; a huge mu and tiny h satisfy both conditions
        rep = bound_report(0.25, 1.0, 2.0, mu_used=1e6, h_used=1e-4)
        assert not rep.rho_overflow and math.isfinite(rep.mu_min)
        assert not rep.mu_below_bound and not rep.h_above_bound
        assert 0 < rep.mu_ratio and rep.h_ratio < 1
        assert "[below bound]" not in rep.to_text() and VACUOUS not in rep.to_text()

    def test_keyvalue(self):
        rep = bound_report(1e6, 1.0, 2.0, 1.0, 0.0625)
        kv = dict(line.split("=", 1) for line in rep.to_keyvalue().splitlines())
        assert kv["mu_below_bound"] == "yes" and kv["h_above_bound"] == "yes"
        assert kv["rho"] == "inf" and float(kv["decay_rate_bound"]) == pytest.approx(math.pi * 1e-3)
        assert float(kv["ra"]) == 1e6

    def test_mu_zero(self):
        rep = bound_report(1e6, 1.0, 2.0, 0.0, 0.1)
        assert rep.h_max == 0.0 and rep.h_above_bound

    @pytest.mark.parametrize("kw", [{"ra": 0}, {"mu_used": -1.0}, {"h_used": 0.0}])
    def test_rejects(self, kw):
        args = {"ra": 1e6, "pr": 1.0, "L": 2.0, "mu_used": 1.0, "h_used": 0.1, **kw}
        with pytest.raises(ValueError):
            bound_report(**args)
