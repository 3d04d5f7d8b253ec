"""Closed-form strategies, value functions, moments and frontiers.

Two families of controls live here:

* time-consistent controls, deterministic in time and independent of
  wealth, obtained by tracking the conditional mean of wealth with a
  deterministic forward process;
* precommitment controls, affine in current wealth, obtained by embedding
  the mean-variance problem into a quadratic-loss problem with target
  level ``xi``.

All functions take a :class:`~mvinsurer.model.DerivedCoefficients` ``c``.
Time arguments are absolute (``0 <= t <= s <= T``); ``tau = T - t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .model import DerivedCoefficients, DomainError, DegenerateModel, Preference


class Controls(NamedTuple):
    pi: float | np.ndarray
    L: float | np.ndarray


class Moments(NamedTuple):
    mean: float
    variance: float


class FrontierPoint(NamedTuple):
    mean: float
    variance: float
    s: float


def _theta(theta: float) -> float:
    return Preference(theta).theta


def _check_time(c: DerivedCoefficients, t: float, s: float | None = None) -> None:
    if not 0.0 <= t <= c.T + 1e-12:
        raise DomainError(f"t = {t} outside [0, T = {c.T}]")
    if s is not None and not t - 1e-12 <= s <= c.T + 1e-12:
        raise DomainError(f"s = {s} outside [t = {t}, T = {c.T}]")


def _discount(c: DerivedCoefficients, s):
    return np.exp(-c.r * (c.T - s))


# ---------------------------------------------------------------------------
# Time-consistent strategy
# ---------------------------------------------------------------------------


def tc_control(c: DerivedCoefficients, theta: float, s: float) -> Controls:
    """Optimal time-consistent (pi, L) at time ``s``; no wealth dependence."""
    c.require()
    theta = _theta(theta)
    d = _discount(c, s)
    return Controls(c.kappa1 / theta * d, c.kappa2 / theta * d)


def tc_value(c: DerivedCoefficients, theta: float, t: float, x: float, y: float) -> float:
    c.require()
    theta = _theta(theta)
    _check_time(c, t)
    tau = c.T - t
    return (
        -0.5 * theta * math.exp(2 * c.r * tau) * (x - y) ** 2
        + math.exp(c.r * tau) * x
        + c.kappa3 / (2 * theta) * tau
    )


def tc_moments(c: DerivedCoefficients, theta: float, t: float, x: float, s: float | None = None) -> Moments:
    """Mean and variance of wealth at ``s`` (default ``T``) under the time-consistent strategy."""
    c.require()
    theta = _theta(theta)
    s = c.T if s is None else s
    _check_time(c, t, s)
    elapsed = s - t
    d = math.exp(-c.r * (c.T - s))
    mean = x * math.exp(c.r * elapsed) + c.kappa3 / theta * d * elapsed
    var = c.kappa3 / theta**2 * d * d * elapsed
    return Moments(mean, var)


def tc_tradeoff(c: DerivedCoefficients, theta: float, t: float, x: float, s: float | None = None) -> float:
    """Mean minus theta/2 times variance of wealth at ``s`` under the time-consistent strategy."""
    c.require()
    theta = _theta(theta)
    s = c.T if s is None else s
    _check_time(c, t, s)
    d = math.exp(-c.r * (c.T - s))
    return x * math.exp(c.r * (s - t)) + c.kappa3 / theta * d * (1 - 0.5 * d) * (s - t)


def tc_frontier_variance(c: DerivedCoefficients, t: float, x: float, s: float, mean: float) -> float:
    """Variance on the dynamic efficient frontier at expected wealth ``mean``."""
    c.require()
    _check_time(c, t, s)
    base = x * math.exp(c.r * (s - t))
    if mean < base:
        raise DomainError(f"mean {mean} below the risk-free level {base}")
    if s == t:
        if mean != base:
            raise DomainError("only the risk-free mean is attainable at s = t")
        return 0.0
    return (mean - base) ** 2 / (c.kappa3 * (s - t))


def sml_slope(c: DerivedCoefficients, t: float, s: float) -> float:
    """Slope of expected excess wealth against its standard deviation."""
    return math.sqrt(c.require().kappa3 * (s - t))


# ---------------------------------------------------------------------------
# Precommitment strategy and the auxiliary quadratic-loss problem
# ---------------------------------------------------------------------------


def aux_control(c: DerivedCoefficients, xi: float, s, wealth) -> Controls:
    """Optimal controls for minimising E[(X(T) - xi)^2]."""
    c.require()
    gap = wealth - xi * _discount(c, s)
    return Controls(-c.kappa1 * gap, -c.kappa2 * gap)


def aux_value(c: DerivedCoefficients, xi: float, t: float, x: float) -> float:
    c.require()
    _check_time(c, t)
    tau = c.T - t
    return (x * math.exp(c.r * tau) - xi) ** 2 * math.exp(-c.kappa3 * tau)


def m_star(c: DerivedCoefficients, theta: float, t: float, x: float) -> float:
    """Expected terminal wealth chosen by the precommitment investor."""
    c.require()
    theta = _theta(theta)
    tau = c.T - t
    return x * math.exp(c.r * tau) + math.expm1(c.kappa3 * tau) / theta


def xi_star(c: DerivedCoefficients, m: float, t: float, x: float) -> float:
    """Quadratic-loss target that delivers expected terminal wealth ``m``."""
    c.require()
    _check_time(c, t)
    tau = c.T - t
    _check_target(c, m, t, x)
    return (m - x * math.exp((c.r - c.kappa3) * tau)) / -math.expm1(-c.kappa3 * tau)


def _check_target(c: DerivedCoefficients, m: float, t: float, x: float) -> None:
    tau = c.T - t
    floor = x * math.exp(c.r * tau)
    if tau <= 0:
        raise DomainError("target strategies need t < T")
    if not m > floor:
        raise DomainError(f"target m = {m} must exceed the risk-free level {floor:.10g}")


def pre_control(c: DerivedCoefficients, theta: float, t: float, x: float, s, wealth) -> Controls:
    """Precommitment controls at time ``s`` and wealth ``wealth`` for a start at ``(t, x)``.

    Routed through the auxiliary problem with ``xi = xi*(m*(theta))``, so L
    stays well defined when ``kappa1 = 0``.
    """
    c.require()
    if c.T - t <= 0:
        raise DomainError("precommitment strategy needs t < T")
    return aux_control(c, xi_star(c, m_star(c, theta, t, x), t, x), s, wealth)


def pre_moments(c: DerivedCoefficients, theta: float, t: float, x: float) -> Moments:
    c.require()
    theta = _theta(theta)
    _check_time(c, t)
    tau = c.T - t
    growth = math.expm1(c.kappa3 * tau)
    return Moments(x * math.exp(c.r * tau) + growth / theta, growth / theta**2)


def pre_value(c: DerivedCoefficients, theta: float, t: float, x: float) -> float:
    c.require()
    theta = _theta(theta)
    _check_time(c, t)
    tau = c.T - t
    return x * math.exp(c.r * tau) + math.expm1(c.kappa3 * tau) / (2 * theta)


def pre_frontier_variance(c: DerivedCoefficients, t: float, x: float, s: float, mean: float) -> float:
    """Precommitment frontier variance at ``mean`` for a problem with horizon ``s``."""
    c.require()
    _check_time(c, t, s)
    base = x * math.exp(c.r * (s - t))
    if mean < base:
        raise DomainError(f"mean {mean} below the risk-free level {base}")
    if s == t:
        if mean != base:
            raise DomainError("only the risk-free mean is attainable at s = t")
        return 0.0
    return (mean - base) ** 2 / math.expm1(c.kappa3 * (s - t))


# ---------------------------------------------------------------------------
# Target-constrained strategies
# ---------------------------------------------------------------------------


def theta_pre(c: DerivedCoefficients, m: float, t: float, x: float) -> float:
    """Risk aversion whose precommitment strategy has expected terminal wealth ``m``."""
    c.require()
    _check_target(c, m, t, x)
    tau = c.T - t
    return math.expm1(c.kappa3 * tau) / (m - x * math.exp(c.r * tau))


def theta_tc(c: DerivedCoefficients, m: float, t: float, x: float) -> float:
    """Risk aversion whose time-consistent strategy has expected terminal wealth ``m``."""
    c.require()
    _check_target(c, m, t, x)
    tau = c.T - t
    return c.kappa3 * tau / (m - x * math.exp(c.r * tau))


def tc_target_control(c: DerivedCoefficients, m: float, t: float, x: float, s) -> Controls:
    c.require()
    _check_target(c, m, t, x)
    tau = c.T - t
    scale = (m - x * math.exp(c.r * tau)) / (c.kappa3 * tau) * _discount(c, s)
    return Controls(c.kappa1 * scale, c.kappa2 * scale)


def pre_target_control(c: DerivedCoefficients, m: float, t: float, x: float, s, wealth) -> Controls:
    return aux_control(c, xi_star(c, m, t, x), s, wealth)


class TargetControls(NamedTuple):
    pre: Controls
    tc: Controls
    theta_pre: float
    theta_tc: float


def target_controls(c: DerivedCoefficients, m: float, t: float, x: float, s: float, wealth: float) -> TargetControls:
    return TargetControls(
        pre=pre_target_control(c, m, t, x, s, wealth),
        tc=tc_target_control(c, m, t, x, s),
        theta_pre=theta_pre(c, m, t, x),
        theta_tc=theta_tc(c, m, t, x),
    )


# ---------------------------------------------------------------------------
# Restricted markets and the strategy decomposition
# ---------------------------------------------------------------------------


class RestrictedResult(NamedTuple):
    control: float
    value: float
    loss: float


class SpecialCases(NamedTuple):
    no_investment: RestrictedResult
    no_insurance: RestrictedResult


def no_investment_control(c: DerivedCoefficients, theta: float, s) -> float:
    full = c.beta**2 + c.lam * c.gamma_bar2
    if not full > 0:
        raise DomainError("no-investment case needs beta > 0 or lambda > 0")
    return c.q / (full * _theta(theta)) * _discount(c, s)


def no_insurance_control(c: DerivedCoefficients, theta: float, s) -> float:
    """Merton-type investment when no insurance business is written."""
    return c.mu_bar / (_theta(theta) * c.sigma**2) * _discount(c, s)


def _restricted_value(c: DerivedCoefficients, theta: float, t: float, x: float, y: float, rate: float) -> float:
    tau = c.T - t
    return -0.5 * theta * math.exp(2 * c.r * tau) * (x - y) ** 2 + math.exp(c.r * tau) * x + rate / (2 * theta) * tau


def no_investment_loss(c: DerivedCoefficients, theta: float, t: float) -> float:
    """Value lost by having no access to the financial market."""
    c.require()
    theta = _theta(theta)
    full = c.beta**2 + c.lam * c.gamma_bar2
    partial = c.beta**2 * (1 - c.rho**2) + c.lam * c.gamma_bar2
    num = (c.mu_bar * full + c.rho * c.beta * c.sigma * c.q) ** 2
    return num / (full * partial * c.sigma**2) * (c.T - t) / (2 * theta)


def no_insurance_loss(c: DerivedCoefficients, theta: float, t: float) -> float:
    """Value lost by writing no insurance business."""
    c.require()
    theta = _theta(theta)
    partial = c.beta**2 * (1 - c.rho**2) + c.lam * c.gamma_bar2
    return (c.q + c.rho * c.beta * c.mu_bar / c.sigma) ** 2 / partial * (c.T - t) / (2 * theta)


def special_cases(c: DerivedCoefficients, theta: float, t: float, x: float, y: float, s: float) -> SpecialCases:
    theta = _theta(theta)
    _check_time(c, t, s)
    no_inv = RestrictedResult(
        no_investment_control(c, theta, s),
        _restricted_value(c, theta, t, x, y, c.kappa4),
        no_investment_loss(c, theta, t),
    )
    no_ins = RestrictedResult(
        no_insurance_control(c, theta, s),
        _restricted_value(c, theta, t, x, y, c.mu_bar**2 / c.sigma**2),
        no_insurance_loss(c, theta, t),
    )
    return SpecialCases(no_inv, no_ins)


def decompose_pi(c: DerivedCoefficients, theta: float, s: float) -> tuple[float, float]:
    """Split the optimal investment into a scaled Merton term and a hedging term."""
    c.require()
    theta = _theta(theta)
    full = c.beta**2 + c.lam * c.gamma_bar2
    partial = c.beta**2 * (1 - c.rho**2) + c.lam * c.gamma_bar2
    d = math.exp(-c.r * (c.T - s))
    merton = full / partial * no_insurance_control(c, theta, s)
    hedging = c.rho * c.beta * c.q / (partial * c.sigma) / theta * d
    return merton, hedging


# ---------------------------------------------------------------------------
# Strategy specifications consumed by the simulator
# ---------------------------------------------------------------------------


class StrategyKind(str, Enum):
    TIME_CONSISTENT = "tc"
    PRECOMMIT = "pre"
    PRECOMMIT_TARGET = "pre-target"
    TC_TARGET = "tc-target"
    AUX_QUADRATIC = "aux"
    NO_INVESTMENT = "no-investment"
    NO_INSURANCE = "no-insurance"
    CONSTANT = "constant"


_DETERMINISTIC = {
    StrategyKind.TIME_CONSISTENT, StrategyKind.TC_TARGET, StrategyKind.NO_INVESTMENT,
    StrategyKind.NO_INSURANCE, StrategyKind.CONSTANT,
}


@dataclass(frozen=True)
class StrategySpec:
    """A closed-form feedback rule ``(s, wealth) -> (pi, L)``.

    ``scale`` multiplies both controls; it exists to perturb an optimal rule.
    """

    kind: StrategyKind
    coef: DerivedCoefficients
    t0: float = 0.0
    x0: float = 1.0
    theta: float | None = None
    m: float | None = None
    xi: float | None = None
    pi_const: float = 0.0
    L_const: float = 0.0
    scale: float = 1.0

    @classmethod
    def time_consistent(cls, c, theta, t0=0.0, x0=1.0):
        _theta(theta)
        c.require()
        return cls(StrategyKind.TIME_CONSISTENT, c, t0, x0, theta=theta)

    @classmethod
    def precommit(cls, c, theta, t0=0.0, x0=1.0):
        xi = xi_star(c, m_star(c, theta, t0, x0), t0, x0)
        return cls(StrategyKind.PRECOMMIT, c, t0, x0, theta=theta, xi=xi)

    @classmethod
    def precommit_target(cls, c, m, t0=0.0, x0=1.0):
        return cls(StrategyKind.PRECOMMIT_TARGET, c, t0, x0, m=m, xi=xi_star(c, m, t0, x0))

    @classmethod
    def tc_target(cls, c, m, t0=0.0, x0=1.0):
        _check_target(c.require(), m, t0, x0)
        return cls(StrategyKind.TC_TARGET, c, t0, x0, m=m)

    @classmethod
    def auxiliary(cls, c, xi, t0=0.0, x0=1.0):
        c.require()
        return cls(StrategyKind.AUX_QUADRATIC, c, t0, x0, xi=xi)

    @classmethod
    def no_investment(cls, c, theta, t0=0.0, x0=1.0):
        no_investment_control(c, theta, c.T)
        return cls(StrategyKind.NO_INVESTMENT, c, t0, x0, theta=theta)

    @classmethod
    def no_insurance(cls, c, theta, t0=0.0, x0=1.0):
        _theta(theta)
        return cls(StrategyKind.NO_INSURANCE, c, t0, x0, theta=theta)

    @classmethod
    def constant(cls, c, pi=0.0, L=0.0, t0=0.0, x0=1.0):
        return cls(StrategyKind.CONSTANT, c, t0, x0, pi_const=pi, L_const=L)

    def scaled(self, factor: float) -> "StrategySpec":
        return StrategySpec(**{**self.__dict__, "scale": self.scale * factor})

    @property
    def deterministic(self) -> bool:
        """True when the controls are functions of time only."""
        return self.kind in _DETERMINISTIC

    def controls(self, s, wealth=None) -> Controls:
        c, k = self.coef, self.kind
        if k is StrategyKind.TIME_CONSISTENT:
            out = tc_control(c, self.theta, s)
        elif k is StrategyKind.TC_TARGET:
            out = tc_target_control(c, self.m, self.t0, self.x0, s)
        elif k is StrategyKind.NO_INVESTMENT:
            out = Controls(0.0, no_investment_control(c, self.theta, s))
        elif k is StrategyKind.NO_INSURANCE:
            out = Controls(no_insurance_control(c, self.theta, s), 0.0)
        elif k is StrategyKind.CONSTANT:
            out = Controls(self.pi_const, self.L_const)
        else:
            if wealth is None:
                raise DomainError(f"{k.value} strategy needs the current wealth")
            out = aux_control(c, self.xi, s, wealth)
        if self.scale != 1.0:
            out = Controls(out.pi * self.scale, out.L * self.scale)
        return out

    def reference_moments(self) -> Moments | None:
        """Closed-form terminal mean and variance, where one exists."""
        c, t, x = self.coef, self.t0, self.x0
        if self.scale != 1.0:
            return None
        if self.kind is StrategyKind.TIME_CONSISTENT:
            return tc_moments(c, self.theta, t, x)
        if self.kind is StrategyKind.PRECOMMIT:
            return pre_moments(c, self.theta, t, x)
        if self.kind is StrategyKind.PRECOMMIT_TARGET:
            return pre_moments(c, theta_pre(c, self.m, t, x), t, x)
        if self.kind is StrategyKind.TC_TARGET:
            return tc_moments(c, theta_tc(c, self.m, t, x), t, x)
        if self.kind is StrategyKind.CONSTANT and self.pi_const == 0 and self.L_const == 0:
            return Moments(x * math.exp(c.r * (c.T - t)), 0.0)
        if self.kind in (StrategyKind.NO_INSURANCE, StrategyKind.NO_INVESTMENT):
            rate = c.mu_bar**2 / c.sigma**2 if self.kind is StrategyKind.NO_INSURANCE else c.kappa4
            tau = c.T - t
            return Moments(x * math.exp(c.r * tau) + rate / self.theta * tau, rate / self.theta**2 * tau)
        return None
