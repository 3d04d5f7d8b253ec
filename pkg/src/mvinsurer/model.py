"""Scenario inputs for the combined financial/insurance market.

A scenario is a :class:`MarketParams` (bond, stock, liability process and
premium) plus a :class:`JumpDistribution` for the claim sizes.  Everything
the closed forms need is collapsed once into :class:`DerivedCoefficients`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

# Below this the kappa division is numerically meaningless.
DEGENERACY_TOL = 1e-14


class DomainError(ValueError):
    """A scalar input lies outside its admissible range."""


class DegenerateModel(ValueError):
    """beta^2 (1 - rho^2) + lambda * E[gamma^2] vanishes; kappa1, kappa2 undefined."""


class ConfigError(ValueError):
    """A scenario file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class MarketParams:
    """Market and insurance coefficients, all rates per year."""

    r: float
    mu: float
    sigma: float
    alpha: float
    beta: float
    rho: float
    lam: float
    p: float
    T: float

    def __post_init__(self) -> None:
        for name in ("r", "mu", "sigma", "alpha", "beta", "rho", "lam", "p", "T"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.sigma <= 0:
            raise DomainError("sigma must be positive")
        if self.beta < 0:
            raise DomainError("beta must be non-negative")
        if self.lam < 0:
            raise DomainError("lambda must be non-negative")
        if self.T <= 0:
            raise DomainError("T must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise DomainError("rho must lie in [-1, 1]")

    @property
    def mu_bar(self) -> float:
        return self.mu - self.r

    @property
    def p_bar(self) -> float:
        return self.p - self.alpha

    def replace(self, **changes: float) -> "MarketParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class Preference:
    theta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.theta) and self.theta > 0):
            raise DomainError("theta must be positive")


JUMP_KINDS = ("constant", "exponential", "lognormal")


@dataclass(frozen=True)
class JumpDistribution:
    """Claim size gamma(Z) per jump of the liability process.

    ``constant``: ``param1`` is the size.  ``exponential``: ``param1`` is the
    mean.  ``lognormal``: ``param1`` and ``param2`` are the mean and standard
    deviation of log gamma.
    """

    kind: str
    param1: float
    param2: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in JUMP_KINDS:
            raise DomainError(f"unknown jump kind {self.kind!r}; expected one of {JUMP_KINDS}")
        if not math.isfinite(self.param1):
            raise DomainError("jump.param1 must be finite")
        if self.kind in ("constant", "exponential") and self.param1 <= 0:
            raise DomainError(f"{self.kind} jump parameter must be positive")
        if self.kind == "lognormal":
            if self.param2 is None or not math.isfinite(self.param2) or self.param2 <= 0:
                raise DomainError("lognormal jump requires param2 (log-sd) > 0")

    @classmethod
    def constant(cls, size: float) -> "JumpDistribution":
        return cls("constant", size)

    @classmethod
    def exponential(cls, mean: float) -> "JumpDistribution":
        return cls("exponential", mean)

    @classmethod
    def lognormal(cls, log_mean: float, log_sd: float) -> "JumpDistribution":
        return cls("lognormal", log_mean, log_sd)

    @property
    def gamma_bar1(self) -> float:
        return jump_moments(self)[0]

    @property
    def gamma_bar2(self) -> float:
        return jump_moments(self)[1]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, self.param1)
        if self.kind == "exponential":
            return rng.exponential(self.param1, size)
        return rng.lognormal(self.param1, self.param2, size)

    def sample_sums(self, rng: np.random.Generator, counts: np.ndarray) -> np.ndarray:
        """Total claim size for each entry of ``counts`` independent jumps."""
        if self.kind == "constant":
            return counts * self.param1
        total = int(counts.sum())
        if total == 0:
            return np.zeros(counts.shape)
        draws = self.sample(rng, total)
        owner = np.repeat(np.arange(counts.size), counts)
        return np.bincount(owner, weights=draws, minlength=counts.size)


def jump_moments(jump: JumpDistribution) -> tuple[float, float]:
    """Return ``(E[gamma], E[gamma^2])`` in closed form."""
    if jump.kind == "constant":
        g = jump.param1
        return g, g * g
    if jump.kind == "exponential":
        m = jump.param1
        return m, 2.0 * m * m
    mu_l, sd_l = jump.param1, jump.param2
    return math.exp(mu_l + 0.5 * sd_l**2), math.exp(2.0 * mu_l + 2.0 * sd_l**2)


def premium_expected_value(alpha: float, lam: float, gamma_bar1: float, loading: float) -> float:
    """Expected value premium principle p = (1 + loading)(alpha + lambda E[gamma])."""
    return (1.0 + loading) * (alpha + lam * gamma_bar1)


def _assumption_lhs(params: MarketParams, gamma_bar2: float) -> float:
    return params.beta**2 * (1.0 - params.rho**2) + params.lam * gamma_bar2


def validate(params: MarketParams, jump: JumpDistribution) -> list[str]:
    """Check the standing non-degeneracy assumption and return economic warnings.

    Raises :class:`DegenerateModel` when ``beta^2(1-rho^2) + lambda*gamma2``
    is within :data:`DEGENERACY_TOL` of zero.  The returned list is empty
    when ``p_bar > lambda*gamma1`` and ``mu_bar > 0`` both hold.
    """
    g1, g2 = jump_moments(jump)
    lhs = _assumption_lhs(params, g2)
    if abs(lhs) <= DEGENERACY_TOL:
        raise DegenerateModel(
            f"beta^2(1-rho^2) + lambda*gamma2 = {lhs:.3g}; kappa1 and kappa2 are undefined"
        )
    warnings = []
    if not params.p_bar > params.lam * g1:
        warnings.append(
            f"p_bar = {params.p_bar:.6g} <= lambda*gamma1 = {params.lam * g1:.6g}: "
            "ruin occurs for sure; sensitivity table claims do not apply"
        )
    if not params.mu_bar > 0:
        warnings.append(
            f"mu_bar = {params.mu_bar:.6g} <= 0: risky asset does not beat the bond; "
            "sensitivity table claims do not apply"
        )
    return warnings


@dataclass(frozen=True)
class DerivedCoefficients:
    """Per-scenario constants shared by every closed form.

    ``kappa1..3`` are NaN when the scenario is degenerate and was derived
    with ``strict=False``; ``kappa4`` is NaN when ``beta^2 + lambda*gamma2 = 0``.
    """

    r: float
    T: float
    sigma: float
    beta: float
    rho: float
    lam: float
    mu_bar: float
    p_bar: float
    gamma_bar1: float
    gamma_bar2: float
    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def q(self) -> float:
        """Expected net underwriting margin p_bar - lambda*gamma1."""
        return self.p_bar - self.lam * self.gamma_bar1

    @property
    def degenerate(self) -> bool:
        return math.isnan(self.kappa1)

    def require(self) -> "DerivedCoefficients":
        if self.degenerate:
            raise DegenerateModel("kappa coefficients are unavailable for this scenario")
        return self


def derive(params: MarketParams, jump: JumpDistribution, *, strict: bool = True) -> DerivedCoefficients:
    try:
        warnings = tuple(validate(params, jump))
        degenerate = False
    except DegenerateModel:
        if strict:
            raise
        warnings, degenerate = (), True

    g1, g2 = jump_moments(jump)
    s, b, rho, lam = params.sigma, params.beta, params.rho, params.lam
    mu_bar, p_bar = params.mu_bar, params.p_bar
    q = p_bar - lam * g1
    full = b * b + lam * g2
    if degenerate:
        k1 = k2 = k3 = math.nan
    else:
        denom = b * b * (1.0 - rho * rho) + lam * g2
        k1 = (mu_bar * full + rho * b * s * q) / (denom * s * s)
        k2 = (rho * b * mu_bar + q * s) / (denom * s)
        k3 = mu_bar**2 / s**2 + (q + rho * b * mu_bar / s) ** 2 / denom
    k4 = q * q / full if full > 0 else math.nan
    return DerivedCoefficients(
        r=params.r, T=params.T, sigma=s, beta=b, rho=rho, lam=lam,
        mu_bar=mu_bar, p_bar=p_bar, gamma_bar1=g1, gamma_bar2=g2,
        kappa1=k1, kappa2=k2, kappa3=k3, kappa4=k4, warnings=warnings,
    )


def kappa3_expanded(c: DerivedCoefficients) -> float:
    """First (single-fraction) form of kappa3, used to cross-check :func:`derive`."""
    s, b, rho = c.sigma, c.beta, c.rho
    q = c.q
    denom = b * b * (1.0 - rho * rho) + c.lam * c.gamma_bar2
    num = (b * b + c.lam * c.gamma_bar2) * c.mu_bar**2 + 2 * rho * b * s * c.mu_bar * q + q * q * s * s
    return num / (denom * s * s)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

BASE_PARAMS = MarketParams(r=0.01, mu=0.05, sigma=0.25, alpha=0.08, beta=0.1, rho=0.0, lam=0.1, p=0.15, T=1.0)
BASE_JUMP = JumpDistribution.constant(0.3)

_SCALAR_KEYS = ("r", "mu", "sigma", "alpha", "beta", "rho", "lambda", "p", "T", "theta")
_JUMP_KEYS = ("jump.kind", "jump.param1", "jump.param2")


@dataclass(frozen=True)
class Scenario:
    params: MarketParams
    jump: JumpDistribution
    theta: float

    def __post_init__(self) -> None:
        Preference(self.theta)

    def coefficients(self, *, strict: bool = True) -> DerivedCoefficients:
        return derive(self.params, self.jump, strict=strict)


def parse_scenario(text: str) -> Scenario:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Every key in :data:`_SCALAR_KEYS` plus ``jump.kind`` and ``jump.param1``
    is required; ``jump.param2`` only for lognormal jumps.  Unknown or
    repeated keys are errors.
    """
    allowed = set(_SCALAR_KEYS) | set(_JUMP_KEYS)
    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        elif ":" in line:
            key, _, value = line.partition(":")
        else:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = key.strip(), value.strip().strip("'\"")
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", lineno)
        values[key] = value
        lines[key] = lineno

    required = list(_SCALAR_KEYS) + ["jump.kind", "jump.param1"]
    if values.get("jump.kind") == "lognormal":
        required.append("jump.param2")
    missing = [k for k in required if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")

    def number(key: str) -> float:
        try:
            return float(values[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {values[key]!r}", lines[key]) from None

    scalars = {k: number(k) for k in _SCALAR_KEYS}
    params = MarketParams(
        r=scalars["r"], mu=scalars["mu"], sigma=scalars["sigma"], alpha=scalars["alpha"],
        beta=scalars["beta"], rho=scalars["rho"], lam=scalars["lambda"], p=scalars["p"],
        T=scalars["T"],
    )
    jump = JumpDistribution(
        values["jump.kind"],
        number("jump.param1"),
        number("jump.param2") if "jump.param2" in values else None,
    )
    return Scenario(params, jump, scalars["theta"])


def load_scenario(path: str | Path) -> Scenario:
    return parse_scenario(Path(path).read_text())


def format_scenario(scenario: Scenario) -> str:
    p, j = scenario.params, scenario.jump
    rows = [
        ("r", p.r), ("mu", p.mu), ("sigma", p.sigma), ("alpha", p.alpha), ("beta", p.beta),
        ("rho", p.rho), ("lambda", p.lam), ("p", p.p), ("T", p.T), ("theta", scenario.theta),
        ("jump.kind", j.kind), ("jump.param1", j.param1),
    ]
    if j.param2 is not None:
        rows.append(("jump.param2", j.param2))
    return "".join(f"{k} = {v!r}\n" if not isinstance(v, str) else f"{k} = {v}\n" for k, v in rows)
