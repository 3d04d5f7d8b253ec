import math

import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from mvinsurer.model import (
    ConfigError,
    DegenerateModel,
    DomainError,
    JumpDistribution,
    MarketParams,
    Preference,
    BASE_PARAMS,
    BASE_JUMP,
    derive,
    format_scenario,
    jump_moments,
    kappa3_expanded,
    parse_scenario,
    premium_expected_value,
    validate,
)
from mvinsurer.verify import kappa_identity_errors, random_scenario

# Reference values from a 40-digit mpmath evaluation of the kappa formulas.
KAPPA_REF = {
    0.0: (0.64, 2.1052631578947368, 0.10981052631578947),
    0.5: (1.2218181818181818, 2.9090909090909091, 0.16523636363636364),
    -0.5: (0.25212121212121212, 1.9393939393939394, 0.087660606060606061),
}


def mp_kappas(params: MarketParams, g1, g2):
    mp.mp.dps = 40
    r, mu, s, al, b, rho, lam, p = (mp.mpf(repr(v)) for v in (
        params.r, params.mu, params.sigma, params.alpha, params.beta, params.rho, params.lam, params.p))
    g1, g2 = mp.mpf(repr(g1)), mp.mpf(repr(g2))
    mb, q = mu - r, p - al - lam * g1
    D = b**2 * (1 - rho**2) + lam * g2
    k1 = (mb * (b**2 + lam * g2) + rho * b * s * q) / (D * s**2)
    k2 = (rho * b * mb + q * s) / (D * s)
    k3 = ((b**2 + lam * g2) * mb**2 + 2 * rho * b * s * mb * q + q**2 * s**2) / (D * s**2)
    return float(k1), float(k2), float(k3)


@pytest.mark.parametrize("rho", sorted(KAPPA_REF))
def test_kappas_match_high_precision_reference(rho):
    c = derive(BASE_PARAMS.replace(rho=rho), BASE_JUMP)
    for got, want in zip((c.kappa1, c.kappa2, c.kappa3), KAPPA_REF[rho]):
        assert got == pytest.approx(want, rel=1e-13)


def test_base_derived_fields():
    c = derive(BASE_PARAMS, BASE_JUMP)
    assert c.mu_bar == pytest.approx(0.04)
    assert c.p_bar == pytest.approx(0.07)
    assert c.q == pytest.approx(0.04)
    assert c.kappa4 == pytest.approx(0.04**2 / (0.01 + 0.1 * 0.09), rel=1e-14)
    assert c.warnings == ()


def test_kappas_against_mpmath_on_random_scenarios(rng):
    for _ in range(200):
        params, jump, _ = random_scenario(rng)
        c = derive(params, jump)
        ref = mp_kappas(params, c.gamma_bar1, c.gamma_bar2)
        for got, want in zip((c.kappa1, c.kappa2, c.kappa3), ref):
            assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_kappa_identities_hold_broadly(rng):
    worst = 0.0
    for _ in range(2000):
        params, jump, _ = random_scenario(rng)
        worst = max(worst, *kappa_identity_errors(derive(params, jump)))
    assert worst < 1e-12


def test_kappa3_is_positive(rng):
    for _ in range(500):
        params, jump, _ = random_scenario(rng)
        assert derive(params, jump).kappa3 > 0


def test_degenerate_scenario_rejected():
    params = BASE_PARAMS.replace(lam=0.0, rho=1.0)
    with pytest.raises(DegenerateModel):
        derive(params, BASE_JUMP)
    with pytest.raises(DegenerateModel):
        validate(BASE_PARAMS.replace(beta=0.0, lam=0.0), BASE_JUMP)


def test_non_strict_derive_gives_nan():
    c = derive(BASE_PARAMS.replace(beta=0.0, lam=0.0), BASE_JUMP, strict=False)
    assert c.degenerate and math.isnan(c.kappa3)
    with pytest.raises(DegenerateModel):
        c.require()


def test_near_degenerate_is_finite():
    c = derive(BASE_PARAMS.replace(rho=1 - 1e-9, lam=0.0), BASE_JUMP)
    assert np.isfinite([c.kappa1, c.kappa2, c.kappa3]).all()


def test_ruin_warning_when_premium_too_low():
    warnings = validate(BASE_PARAMS.replace(p=0.08 + 0.1 * 0.3), BASE_JUMP)
    assert any("ruin occurs for sure" in w for w in warnings)


def test_mu_bar_warning():
    warnings = validate(BASE_PARAMS.replace(mu=0.01), BASE_JUMP)
    assert any("mu_bar" in w for w in warnings)


def test_continuity_in_rho():
    for rho0 in (-0.5, 0.0, 0.5):
        a = derive(BASE_PARAMS.replace(rho=rho0), BASE_JUMP)
        b = derive(BASE_PARAMS.replace(rho=rho0 + 1e-9), BASE_JUMP)
        assert abs(a.kappa3 - b.kappa3) < 1e-8


def test_no_jump_reduction():
    params = BASE_PARAMS.replace(lam=0.0, rho=0.3)
    c = derive(params, BASE_JUMP)
    mb, pb, s, b, rho = 0.04, 0.07, 0.25, 0.1, 0.3
    D = b * b * (1 - rho * rho)
    assert c.kappa1 == pytest.approx((mb * b * b + rho * b * s * pb) / (D * s * s), rel=1e-13)
    assert c.kappa2 == pytest.approx((rho * b * mb + pb * s) / (D * s), rel=1e-13)


def test_pure_jump_insurance_reduction():
    c = derive(BASE_PARAMS.replace(beta=0.0, rho=0.7), BASE_JUMP)
    # with beta = 0 the correlation drops out
    c0 = derive(BASE_PARAMS.replace(beta=0.0, rho=0.0), BASE_JUMP)
    assert c.kappa1 == pytest.approx(0.04 / 0.0625, rel=1e-14)
    assert c.kappa2 == pytest.approx(c0.kappa2, rel=1e-14)
    assert c.kappa3 == pytest.approx(0.0256 + 0.04**2 / 0.009, rel=1e-13)


def test_market_params_validation():
    with pytest.raises(DomainError):
        BASE_PARAMS.replace(sigma=0.0)
    with pytest.raises(DomainError):
        BASE_PARAMS.replace(rho=1.5)
    with pytest.raises(DomainError):
        BASE_PARAMS.replace(lam=-0.1)
    with pytest.raises(DomainError):
        BASE_PARAMS.replace(T=0.0)
    with pytest.raises(DomainError, match="theta must be positive"):
        Preference(0.0)


def test_jump_distribution_validation():
    with pytest.raises(DomainError):
        JumpDistribution.constant(0.0)
    with pytest.raises(DomainError):
        JumpDistribution.exponential(-1.0)
    with pytest.raises(DomainError):
        JumpDistribution.lognormal(0.0, -0.5)
    with pytest.raises(DomainError):
        JumpDistribution("gamma", 1.0)


def _quad_moments(pdf, upper=np.inf):
    m1 = integrate.quad(lambda z: z * pdf(z), 0, upper, epsabs=1e-14, epsrel=1e-13)[0]
    m2 = integrate.quad(lambda z: z * z * pdf(z), 0, upper, epsabs=1e-14, epsrel=1e-13)[0]
    return m1, m2


def test_lognormal_moments_by_quadrature():
    ml, sl = -1.5, 0.5
    pdf = lambda z: np.exp(-(np.log(z) - ml) ** 2 / (2 * sl * sl)) / (z * sl * np.sqrt(2 * np.pi))
    m1, m2 = _quad_moments(pdf)
    g1, g2 = jump_moments(JumpDistribution.lognormal(ml, sl))
    assert g1 == pytest.approx(m1, rel=1e-10)
    assert g2 == pytest.approx(m2, rel=1e-10)
    assert g1 == pytest.approx(0.2528395958047465, rel=1e-12)
    assert g2 == pytest.approx(0.0820849986238988, rel=1e-12)


def test_exponential_moments_by_quadrature():
    mean = 0.4
    m1, m2 = _quad_moments(lambda z: np.exp(-z / mean) / mean)
    g1, g2 = jump_moments(JumpDistribution.exponential(mean))
    assert (g1, g2) == pytest.approx((m1, m2), rel=1e-10)


@pytest.mark.parametrize(
    "jump",
    [JumpDistribution.constant(0.3), JumpDistribution.exponential(0.2), JumpDistribution.lognormal(-1.5, 0.5)],
    ids=lambda j: j.kind,
)
def test_sampler_moments(jump):
    rng = np.random.default_rng(7)
    z = jump.sample(rng, 1_000_000)
    g1, g2 = jump_moments(jump)
    se1 = z.std() / 1000 or 1e-15
    se2 = (z * z).std() / 1000 or 1e-15
    assert abs(z.mean() - g1) <= 4 * se1 + 1e-15
    assert abs((z * z).mean() - g2) <= 4 * se2 + 1e-15


def test_sample_sums_accounting():
    rng = np.random.default_rng(3)
    counts = np.array([0, 1, 3, 0, 2])
    sums = JumpDistribution.constant(0.3).sample_sums(rng, counts)
    np.testing.assert_allclose(sums, 0.3 * counts, rtol=1e-15)
    sums = JumpDistribution.exponential(0.3).sample_sums(rng, counts)
    assert (sums[counts == 0] == 0).all() and (sums[counts > 0] > 0).all()


def test_expected_value_premium():
    assert premium_expected_value(0.08, 0.1, 0.3, 0.4) == pytest.approx(0.154, rel=1e-14)


SCENARIO_TEXT = """
# base
r = 0.01
mu = 0.05
sigma = 0.25
alpha = 0.08
beta = 0.1
rho = 0.0   # uncorrelated
lambda = 0.1
p = 0.15
T = 1
theta = 2
jump.kind = lognormal
jump.param1 = -1.5
jump.param2 = 0.5
"""


def test_parse_scenario_round_trip():
    sc = parse_scenario(SCENARIO_TEXT)
    assert sc.params == BASE_PARAMS
    assert sc.theta == 2.0
    assert sc.jump == JumpDistribution.lognormal(-1.5, 0.5)
    assert parse_scenario(format_scenario(sc)) == sc


def test_parse_scenario_missing_key():
    text = SCENARIO_TEXT.replace("sigma = 0.25\n", "")
    with pytest.raises(ConfigError, match="sigma"):
        parse_scenario(text)


def test_parse_scenario_unknown_and_duplicate_keys():
    with pytest.raises(ConfigError) as err:
        parse_scenario(SCENARIO_TEXT + "gamma = 1\n")
    assert err.value.line is not None
    with pytest.raises(ConfigError, match="duplicate"):
        parse_scenario(SCENARIO_TEXT + "r = 0.02\n")


def test_parse_scenario_bad_value():
    with pytest.raises(ConfigError):
        parse_scenario(SCENARIO_TEXT.replace("r = 0.01", "r = abc"))


def test_param2_only_needed_for_lognormal():
    text = SCENARIO_TEXT.replace("lognormal", "constant").replace("-1.5", "0.3").replace("jump.param2 = 0.5\n", "")
    assert parse_scenario(text).jump == BASE_JUMP
    with pytest.raises(ConfigError, match="param2"):
        parse_scenario(SCENARIO_TEXT.replace("jump.param2 = 0.5\n", ""))
