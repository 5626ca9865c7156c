import math

import numpy as np
import pytest
from scipy import integrate, stats

from lmmoments.asymptotics import (
    MomentSpec,
    mu_firststep,
    mu_fourth,
    mu_second,
    mu_third,
    standard_errors,
    variance_report,
)
from lmmoments.errors import MissingMoment, ParseError, UsageError
from lmmoments.moments import MomentEstimates
from lmmoments.sim import law_spec


def exp_central_moment(k):
    return integrate.quad(lambda x: (x - 1.0) ** k * math.exp(-x), 0, math.inf, limit=200)[0]


def normal_spec(scale=0.5):
    table = {k: (0.0 if k % 2 else scale**k * math.prod(range(k - 1, 0, -2))) for k in range(2, 9)}
    return table


@pytest.fixture
def case_a():
    return MomentSpec(normal_spec(), normal_spec())


@pytest.fixture
def case_c():
    gamma = {k: 0.5**k * exp_central_moment(k) for k in range(2, 9)}
    return MomentSpec(normal_spec(), gamma)


class TestEfficientVariances:
    def test_second(self, case_a):
        assert mu_second(case_a) == pytest.approx((0.125, 0.125), rel=1e-14)
        zero = MomentSpec({2: 0.0, 4: 0.0}, {2: 0.0, 4: 0.0})
        assert mu_second(zero) == (0.0, 0.0)
        t8 = MomentSpec({2: 1 / 3, 4: 0.5}, {2: 1 / 3, 4: 0.5})
        assert mu_second(t8)[0] == pytest.approx(0.5 - 1 / 9, rel=1e-14)

    def test_third(self, case_a, case_c):
        # 15 sigma^6 - 6 sigma^2 3 sigma^4 + 9 sigma^6 with sigma = 1/2
        assert mu_third(case_a)[0] == pytest.approx(0.09375, rel=1e-14)
        assert mu_third(case_c)[1] == pytest.approx(3.375, rel=1e-9)

    def test_third_vanishes_on_constructed_spec(self):
        g2, g4 = 0.3, 0.2
        spec = MomentSpec({2: g2, 3: 0.0, 4: g4, 6: 6 * g2 * g4 - 9 * g2**3}, {})
        assert _mu3_eps(spec) == pytest.approx(0.0, abs=1e-15)

    def test_fourth(self, case_a, case_c):
        assert mu_fourth(case_a)[0] == pytest.approx(0.375, rel=1e-14)
        mu_b4 = mu_fourth(case_c)[1]
        g = {k: 0.5**k * exp_central_moment(k) for k in (2, 3, 4, 5, 8)}
        oracle = g[8] - g[4] ** 2 - 8 * g[3] * g[5] + 16 * g[2] * g[3] ** 2
        assert mu_b4 == pytest.approx(oracle, rel=1e-9)
        assert mu_b4 == pytest.approx(55.125, rel=1e-9)

    def test_exponential_eighth_moment(self):
        assert exp_central_moment(8) == pytest.approx(14833, rel=1e-10)
        assert law_spec("shifted_scaled_gamma")[8] == pytest.approx(14833 / 256, rel=1e-14)

    def test_point_mass(self):
        zero = MomentSpec({k: 0.0 for k in range(2, 9)}, {k: 0.0 for k in range(2, 9)})
        assert mu_fourth(zero) == (0.0, 0.0)
        assert mu_third(zero) == (0.0, 0.0)

    def test_symmetric_spec_drops_odd_terms(self, rng):
        for _ in range(20):
            g = {2: rng.uniform(0.1, 1), 4: rng.uniform(1, 2), 6: rng.uniform(2, 5), 8: rng.uniform(5, 9)}
            spec = MomentSpec({**g, 3: 0.0, 5: 0.0, 7: 0.0}, {})
            assert _mu3_eps(spec) == g[6] - 6 * g[2] * g[4] + 9 * g[2] ** 3
            assert mu_fourth(MomentSpec(spec.eps, spec.eps))[0] == g[8] - g[4] ** 2

    def test_missing_order(self):
        with pytest.raises(MissingMoment):
            mu_fourth(MomentSpec(normal_spec(), {2: 0.25, 4: 0.1875}))


def _mu3_eps(spec):
    return mu_third(MomentSpec(spec.eps, spec.eps))[0]


def firststep_reference(e, gb2, c, d, q):
    """Separate evaluation of the first-step variances, written from scratch."""
    s3 = e[6] - e[3] ** 2 - 6 * e[2] * e[4] + 5 * e[2] ** 3 + 4 * c * e[2] ** 3 + 4 * q * e[2] ** 3
    infl3 = 4 * gb2 * e[4] - 4 * gb2 * e[2] ** 2 + 4 * d * gb2 * e[2] ** 2
    s4 = e[8] - e[4] ** 2 - 8 * e[3] * e[5] + (9 * c / 4 + 55 / 4 + 9 * q / 4) * e[2] * e[3] ** 2
    infl4 = (9 / 4) * gb2 * (e[6] - e[3] ** 2 + d * e[3] ** 2 - 6 * e[2] * e[4] + 9 * e[2] ** 3)
    return s3, infl3, s4, infl4


class TestFirstStep:
    def test_equal_sizes_reduces_to_efficient(self, case_a):
        fs = mu_firststep(case_a, (1.0, 0.0), 0.0)
        assert fs.mu_eps_star3 == mu_third(case_a)[0]
        assert fs.total3 == pytest.approx(0.09375 + 4 * 0.25 * 0.125, rel=1e-14)

    def test_no_random_effect_means_no_inflation(self, case_a):
        spec = MomentSpec(case_a.eps, {2: 0.0})
        fs = mu_firststep(spec, (1.3, 0.7), 0.1)
        assert fs.inflation3 == 0.0 and fs.inflation4 == 0.0
        gap = fs.mu_eps_star3 - mu_third(spec.__class__(spec.eps, spec.eps))[0]
        assert gap == pytest.approx((4 * 1.3 - 4 + 4 * 0.1) * 0.25**3, rel=1e-12)

    @pytest.mark.parametrize("c,d,q", [(1.05, 0.3, 0.02), (1.7, 2.4, 0.4)])
    def test_against_reference(self, case_c, c, d, q):
        fs = mu_firststep(case_c, (c, d), q)
        e = {k: case_c.get("eps", k) for k in range(2, 9)}
        ref = firststep_reference(e, case_c.get("b", 2), c, d, q)
        got = (fs.mu_eps_star3, fs.inflation3, fs.mu_eps_star4, fs.inflation4)
        np.testing.assert_allclose(got, ref, rtol=1e-13, atol=1e-15)

    def test_case_a_value(self, case_a):
        fs = mu_firststep(case_a, (1.05, 0.3), 0.02)
        # 15/64 - 18/64 + (4.2 + 5)/64 + 0.08/64 and 1(3/16 - 0.7/16)
        assert fs.mu_eps_star3 == pytest.approx((15 - 18 + 9.2 + 0.08) / 64, rel=1e-13)
        assert fs.inflation3 == pytest.approx((3 - 0.7) / 16, rel=1e-13)

    def test_needs_x0(self, case_a):
        with pytest.raises(UsageError):
            mu_firststep(case_a, (1.0, 0.0))

    def test_variance_report(self, case_a):
        spec = MomentSpec({k: v for k, v in case_a.eps.items() if k <= 6}, case_a.b)
        rep = variance_report(spec, (1.0, 0.0), 0.0)
        assert rep.mu_eps[2] == 0.125 and 4 not in rep.mu_eps
        assert 3 in rep.mu_eps_star and 4 not in rep.mu_eps_star
        assert any("eps4" in m for m in rep.missing)


class TestStandardErrors:
    def _est(self, variant="efficient"):
        est = MomentEstimates({2: 0.25, 3: 0.0}, {2: 0.25, 3: 0.0}, variant)
        for name in ("eps2", "eps3", "b2", "b3"):
            est.n_used[name], est.N_used[name] = 100, 500
        return est

    def test_values(self, case_a):
        se = standard_errors(self._est(), case_a, n=100, N=500)
        assert se["eps2"] == pytest.approx(math.sqrt(0.125 / 500), rel=1e-14)
        assert se["b2"] == pytest.approx(0.035355339, rel=1e-8)
        assert se["b2"] == pytest.approx(0.0392, rel=0.25)

    def test_defaults_to_stored_counts(self, case_a):
        assert standard_errors(self._est(), case_a) == standard_errors(self._est(), case_a, n=100, N=500)

    @pytest.mark.parametrize("n,N", [(0, 10), (10, 0), (-1, 5)])
    def test_rejects_nonpositive(self, case_a, n, N):
        with pytest.raises(UsageError):
            standard_errors(self._est(), case_a, n=n, N=N)

    def test_first_step_uses_design(self, case_a):
        est = self._est("first_step")
        with pytest.raises(UsageError):
            standard_errors(est, case_a)
        se = standard_errors(est, case_a, diag=(1.0, 0.0), x0_quad=0.0)
        assert se["eps3"] == pytest.approx(math.sqrt(0.21875 / 500), rel=1e-13)
        assert se["b3"] == pytest.approx(math.sqrt(0.09375 / 100), rel=1e-13)

    def test_plugin_and_missing_are_none(self, case_a):
        est = self._est("first_step")
        est.gamma_eps_plugin[4] = 0.2
        est.gamma_b[4] = 0.2
        est.n_used["b4"] = 100
        spec = MomentSpec(case_a.eps, {k: v for k, v in case_a.b.items() if k < 8})
        se = standard_errors(est, spec, diag=(1.0, 0.0), x0_quad=0.0)
        assert se["eps4_plugin"] is None and se["b4"] is None
        assert se["eps3"] is not None


class TestSpecText:
    def test_roundtrip(self, case_c):
        assert MomentSpec.from_text(case_c.to_text()) == case_c

    def test_comments_and_blank_lines(self):
        spec = MomentSpec.from_text("# truth\n\neps2=0.25  # variance\nb6 = 4.140625\n")
        assert spec.get("eps", 2) == 0.25 and spec.get("b", 6) == 4.140625
        assert spec.get("eps", 1) == 0.0

    @pytest.mark.parametrize("text,row", [("eps2=0.25\nfoo=1\n", 2), ("eps9=1\n", 1), ("b2=x\n", 1), ("b2=nan", 1)])
    def test_errors(self, text, row):
        with pytest.raises(ParseError) as info:
            MomentSpec.from_text(text)
        assert info.value.row == row

    def test_validate_warns(self):
        with pytest.warns(UserWarning):
            problems = MomentSpec({2: 0.5, 4: 0.1}, {2: -0.1}).validate()
        assert len(problems) == 2

    def test_law_specs_satisfy_inequalities(self):
        for law in ("scaled_normal", "scaled_t8", "shifted_scaled_gamma"):
            t = law_spec(law)
            assert MomentSpec(t, t).validate() == []


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_t8_moments_against_scipy():
    for k, v in law_spec("scaled_t8").items():
        # scipy integrates the sixth moment numerically
        assert v == pytest.approx(0.5**k * stats.t(8).moment(k), rel=1e-7, abs=1e-10)
