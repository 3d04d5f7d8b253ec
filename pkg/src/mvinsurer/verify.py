"""Independent checks of the closed forms.

Nothing here reuses the closed-form strategy formulas as its own oracle:
the value-function ansatz is integrated numerically, the HJB generator is
written out term by term, and parameter sensitivities are taken by central
differences.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy import optimize

from . import closed_form as cf
from .model import (
    BASE_PARAMS,
    BASE_JUMP,
    DegenerateModel,
    DerivedCoefficients,
    DomainError,
    JumpDistribution,
    MarketParams,
    derive,
    kappa3_expanded,
    premium_expected_value,
)


@dataclass(frozen=True)
class Check:
    """One line of a verification report."""

    name: str
    observed: float | str
    tolerance: float | str
    passed: bool
    detail: str = ""


# ---------------------------------------------------------------------------
# Value-function ansatz  V = A (x - y)^2 + B x + C
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OdeSolution:
    t: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray

    def value(self, i: int, x: float, y: float) -> float:
        return float(self.A[i] * (x - y) ** 2 + self.B[i] * x + self.C[i])


def integrate_ansatz_batch(
    coefs: list[DerivedCoefficients], thetas, grid_size: int = 10_000, t0: float = 0.0
) -> list[OdeSolution]:
    """Integrate A' = -2rA, B' = -rB, C' = kappa3 B^2 / (4A) backward from T with RK4.

    All scenarios are stepped together; each uses its own step ``(T - t0) / grid_size``.
    """
    for c in coefs:
        c.require()
    r = np.array([c.r for c in coefs])
    k3 = np.array([c.kappa3 for c in coefs])
    T = np.array([c.T for c in coefs])
    h = (T - t0) / grid_size

    def rhs(a, b):
        return -2 * r * a, -r * b, k3 * b * b / (4 * a)

    out = np.empty((3, grid_size + 1, len(coefs)))
    a = -np.asarray(thetas, dtype=float) / 2
    b = np.ones_like(a)
    cc = np.zeros_like(a)
    out[:, -1] = a, b, cc
    for i in range(grid_size, 0, -1):
        # stepping with -h runs time backwards
        da1, db1, dc1 = rhs(a, b)
        da2, db2, dc2 = rhs(a - h / 2 * da1, b - h / 2 * db1)
        da3, db3, dc3 = rhs(a - h / 2 * da2, b - h / 2 * db2)
        da4, db4, dc4 = rhs(a - h * da3, b - h * db3)
        a = a - h / 6 * (da1 + 2 * da2 + 2 * da3 + da4)
        b = b - h / 6 * (db1 + 2 * db2 + 2 * db3 + db4)
        cc = cc - h / 6 * (dc1 + 2 * dc2 + 2 * dc3 + dc4)
        out[:, i - 1] = a, b, cc
    return [
        OdeSolution(np.linspace(t0, c.T, grid_size + 1), out[0, :, j], out[1, :, j], out[2, :, j])
        for j, c in enumerate(coefs)
    ]


def integrate_ansatz(c: DerivedCoefficients, theta: float, grid_size: int = 10_000, t0: float = 0.0) -> OdeSolution:
    return integrate_ansatz_batch([c], [theta], grid_size, t0)[0]


def ansatz_closed_form(c: DerivedCoefficients, theta: float, t):
    tau = c.T - np.asarray(t, dtype=float)
    return (-theta / 2 * np.exp(2 * c.r * tau), np.exp(c.r * tau), c.kappa3 / (2 * theta) * tau)


def _sup_gap(c: DerivedCoefficients, theta: float, sol: OdeSolution) -> float:
    A, B, C = ansatz_closed_form(c, theta, sol.t)
    return float(max(np.abs(sol.A - A).max(), np.abs(sol.B - B).max(), np.abs(sol.C - C).max()))


def ode_deviation(c: DerivedCoefficients, theta: float, grid_size: int = 10_000) -> float:
    """Sup-norm gap between the integrated and closed-form A, B, C."""
    return _sup_gap(c, theta, integrate_ansatz(c, theta, grid_size))


def ode_deviations(coefs: list[DerivedCoefficients], thetas, grid_size: int = 10_000) -> np.ndarray:
    """:func:`ode_deviation` for many scenarios in one batched integration."""
    sols = integrate_ansatz_batch(coefs, thetas, grid_size)
    return np.array([_sup_gap(c, th, sol) for c, th, sol in zip(coefs, thetas, sols)])


# ---------------------------------------------------------------------------
# HJB residual
# ---------------------------------------------------------------------------


def hjb_supremand(c: DerivedCoefficients, theta: float, t: float, x: float, y: float, pi: float, L: float) -> float:
    """HJB expression inside the supremum (plus V_t) at the candidate value function.

    The jump term uses E[V(x - L gamma) - V(x)] = -L g1 V_x + L^2 g2 V_xx / 2,
    exact because the candidate is quadratic in x.
    """
    tau = c.T - t
    e1, e2 = math.exp(c.r * tau), math.exp(2 * c.r * tau)
    gap = x - y
    # derivatives of -theta/2 e2 gap^2 + e1 x + kappa3/(2 theta) tau
    v_t = c.r * theta * e2 * gap * gap - c.r * e1 * x - c.kappa3 / (2 * theta)
    v_x = -theta * e2 * gap + e1
    v_xx = -theta * e2
    v_y = theta * e2 * gap
    s, b, rho, lam = c.sigma, c.beta, c.rho, c.lam
    drift_x = c.r * x + c.mu_bar * pi + c.p_bar * L
    diffusion = (s * pi - rho * b * L) ** 2 + b * b * (1 - rho * rho) * L * L
    drift_y = c.r * y + c.mu_bar * pi + (c.p_bar - lam * c.gamma_bar1) * L
    jumps = lam * (-L * c.gamma_bar1 * v_x + 0.5 * L * L * c.gamma_bar2 * v_xx)
    return v_t + drift_x * v_x + 0.5 * diffusion * v_xx + drift_y * v_y + jumps


def hjb_residual(c: DerivedCoefficients, theta: float, t: float, x: float, y: float) -> float:
    c.require()
    if t >= c.T:
        return cf.tc_value(c, theta, c.T, x, y) - (x - 0.5 * theta * (x - y) ** 2)
    pi, L = cf.tc_control(c, theta, t)
    return hjb_supremand(c, theta, t, x, y, pi, L)


def hjb_grid_residual(c: DerivedCoefficients, theta: float, n: int = 5, x_range=(0.5, 2.0)) -> float:
    """Largest |residual| over an n x n x n grid of (t, x, y), t in [0, T)."""
    worst = 0.0
    ts = np.linspace(0.0, c.T, n, endpoint=False)
    xs = np.linspace(*x_range, n)
    for t in ts:
        for x in xs:
            for y in xs:
                worst = max(worst, abs(hjb_residual(c, theta, float(t), float(x), float(y))))
    return worst


# ---------------------------------------------------------------------------
# Sensitivities against the published sign table
# ---------------------------------------------------------------------------

# (parameter, quantity, regime, expected) ; expected +1, -1 or "sign(rho)"
SIGN_TABLE = [
    ("rho", "pi", "rho>0", +1), ("rho", "L", "rho>0", +1), ("rho", "V", "rho<0", -1),
    ("mu", "pi", "any", +1), ("mu", "L", "any", "sign(rho)"), ("mu", "V", "rho<0", +1),
    ("sigma", "pi", "rho>0", -1), ("sigma", "L", "any", "sign(rho)"), ("sigma", "V", "rho<0", +1),
    ("p", "pi", "any", "sign(rho)"), ("p", "L", "any", +1), ("p", "V", "rho<0", -1),
    ("beta", "pi", "rho>0", +1), ("beta", "L", "rho=0", +1), ("beta", "V", "rho<0", -1),
    ("lambda", "pi", "rho>0", -1), ("lambda", "L", "rho>0", -1), ("lambda", "V", "rho>0", -1),
    ("gamma", "pi", "rho>0", -1), ("gamma", "L", "rho>0", -1), ("gamma", "V", "rho>0", -1),
]

_PARAM_ATTR = {"rho": "rho", "mu": "mu", "sigma": "sigma", "p": "p", "beta": "beta", "lambda": "lam"}


@dataclass(frozen=True)
class SignReport:
    parameter: str
    quantity: str
    rho: float
    derivative: float
    sign: int
    expected: int | str
    agree: bool | None  # None when the table leaves the cell unconstrained

    @property
    def constrained(self) -> bool:
        return self.agree is not None


def _regime_applies(regime: str, rho: float) -> bool:
    return {
        "any": True,
        "rho>0": rho > 0,
        "rho<0": rho < 0,
        "rho=0": rho == 0,
    }[regime]


def _bumped(params: MarketParams, jump: JumpDistribution, name: str, value: float):
    if name == "gamma":
        if jump.kind != "constant":
            raise DomainError("the jump-size row only applies to constant jumps")
        return params, JumpDistribution.constant(value)
    attr = _PARAM_ATTR[name]
    if attr == "rho" and not -1 <= value <= 1:
        raise DomainError("rho bump leaves [-1, 1]")
    return params.replace(**{attr: value}), jump


def _quantities(params, jump, theta, t, x):
    c = derive(params, jump)
    pi, L = cf.tc_control(c, theta, t)
    return {"pi": pi, "L": L, "V": cf.tc_value(c, theta, t, x, x)}


def sensitivity_signs(
    params: MarketParams,
    jump: JumpDistribution,
    theta: float,
    t: float = 0.0,
    x: float = 1.0,
    bump: float = 1e-5,
) -> list[SignReport]:
    """Central-difference signs of pi*, L* and V(t,x,x) for each table row.

    Cells are constrained only when the table's regime matches ``rho`` and
    the scenario has p_bar > lambda*gamma1 and mu_bar > 0.
    """
    c = derive(params, jump)
    conditions = c.q > 0 and c.mu_bar > 0
    rho = params.rho
    derivs: dict[str, dict[str, float]] = {}
    for name in ("rho", "mu", "sigma", "p", "beta", "lambda", "gamma"):
        if name == "gamma" and jump.kind != "constant":
            continue
        base = jump.param1 if name == "gamma" else getattr(params, _PARAM_ATTR[name])
        h = bump * (abs(base) if base != 0 else 1.0)
        up = _quantities(*_bumped(params, jump, name, base + h), theta, t, x)
        down = _quantities(*_bumped(params, jump, name, base - h), theta, t, x)
        derivs[name] = {k: (up[k] - down[k]) / (2 * h) for k in up}

    # scale for declaring a derivative numerically zero
    base_q = _quantities(params, jump, theta, t, x)
    reports = []
    for name, qty, regime, expected in SIGN_TABLE:
        if name not in derivs:
            continue
        d = derivs[name][qty]
        zero_tol = 1e-6 * max(1.0, abs(base_q[qty]))
        sign = 0 if abs(d) < zero_tol else int(math.copysign(1, d))
        if expected == "sign(rho)":
            target = int(np.sign(rho))
        else:
            target = expected
        applies = conditions and _regime_applies(regime, rho)
        reports.append(
            SignReport(name, qty, rho, d, sign, target if applies else "unconstrained",
                       (sign == target) if applies else None)
        )
    return reports


# ---------------------------------------------------------------------------
# Figure properties
# ---------------------------------------------------------------------------


def kappa1_root(params: MarketParams, jump: JumpDistribution, lo: float = -1.0, hi: float = 0.0) -> float:
    """Correlation at which the optimal investment vanishes (bisection)."""
    f = lambda rho: derive(params.replace(rho=rho), jump).kappa1  # noqa: E731
    return optimize.bisect(f, lo, hi, xtol=1e-12)


@dataclass
class FigureReport:
    checks: list[Check] = field(default_factory=list)
    l_argmin: dict[float, float] = field(default_factory=dict)
    kappa1_root: float = math.nan

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _strictly_monotone(values: np.ndarray, direction: int) -> bool:
    return bool(np.all(np.sign(np.diff(values)) == direction))


def figure_checks(
    params: MarketParams = BASE_PARAMS,
    jump: JumpDistribution = BASE_JUMP,
    thetas: Iterable[float] = (1, 2, 5, 10),
    n_rho: int = 401,
    loading: float = 0.4,
    n_lambda: int = 201,
    expected_argmin: float | None = -0.4143,
    argmin_tol: float = 1e-3,
) -> FigureReport:
    """Qualitative properties of the rho-sweep and lambda-sweep figures.

    Strategies are evaluated at time t with T - t = 1, i.e. at t = T - 1.
    """
    thetas = list(thetas)
    t = params.T - 1.0 if params.T >= 1 else 0.0
    rep = FigureReport()
    rhos = np.linspace(-1, 1, n_rho)

    def strategy(p, theta):
        return cf.tc_control(derive(p, jump), theta, t)

    curves = {th: np.array([strategy(params.replace(rho=float(r)), th) for r in rhos]) for th in thetas}

    rep.kappa1_root = kappa1_root(params, jump)
    for th in thetas:
        pi, L = curves[th][:, 0], curves[th][:, 1]
        rep.checks.append(Check(f"rho_sweep.pi_increasing_in_rho[theta={th:g}]", float(np.diff(pi).min()),
                                "> 0", _strictly_monotone(pi, +1)))
        sign_change = np.nonzero(np.diff(np.sign(pi)))[0]
        if sign_change.size == 1:
            i = int(sign_change[0])
            root = optimize.brentq(lambda r: strategy(params.replace(rho=r), th)[0], rhos[i], rhos[i + 1], xtol=1e-13)
        else:
            root = math.nan
        rep.checks.append(Check(f"rho_sweep.pi_zero_at_kappa1_root[theta={th:g}]", root, 1e-9,
                                abs(root - rep.kappa1_root) < 1e-9))
        i = int(np.argmin(L))
        lo, hi = rhos[max(i - 1, 0)], rhos[min(i + 1, n_rho - 1)]
        res = optimize.minimize_scalar(lambda r: strategy(params.replace(rho=r), th)[1],
                                       bounds=(lo, hi), method="bounded", options={"xatol": 1e-9})
        rep.l_argmin[th] = float(res.x)
        if expected_argmin is not None:
            rep.checks.append(Check(f"rho_sweep.L_argmin[theta={th:g}]", float(res.x), argmin_tol,
                                    abs(res.x - expected_argmin) <= argmin_tol))
    argmins = list(rep.l_argmin.values())
    spread = max(argmins) - min(argmins)
    rep.checks.append(Check("rho_sweep.L_argmin_theta_independent", spread, 1e-6, spread < 1e-6))
    for a, b in zip(thetas, thetas[1:]):
        diff = curves[b][:, 1] - curves[a][:, 1]
        rep.checks.append(Check(f"rho_sweep.L_decreasing_in_theta[{a:g}->{b:g}]", float(diff.max()), "< 0",
                                bool(np.all(diff < 0))))

    # lambda sweep with expected-value premium, theta = 2
    lams = np.linspace(0.0, 0.2, n_lambda)
    for rho in (-0.5, 0.0, 0.5):
        rows = []
        for lam in lams:
            p = premium_expected_value(params.alpha, lam, jump.gamma_bar1, loading)
            rows.append(strategy(params.replace(rho=rho, lam=float(lam), p=p), 2.0))
        pi, L = np.array(rows).T
        rep.checks.append(Check(f"lambda_sweep.L_decreasing_in_lambda[rho={rho:g}]", float(np.diff(L).max()), "< 0",
                                _strictly_monotone(L, -1)))
        if rho > 0:
            ok, label = _strictly_monotone(pi, -1), "decreasing"
        elif rho < 0:
            ok, label = _strictly_monotone(pi, +1), "increasing"
        else:
            ok, label = bool(np.ptp(pi) <= 1e-12 * abs(pi[0])), "constant"
        rep.checks.append(Check(f"lambda_sweep.pi_{label}_in_lambda[rho={rho:g}]", float(np.ptp(pi)), label, ok))
    return rep


# ---------------------------------------------------------------------------
# Random scenarios and identity audits
# ---------------------------------------------------------------------------


def random_scenario(rng: np.random.Generator, *, economic: bool = False, constant_jump: bool = False):
    """Draw a valid (params, jump, theta).  ``economic`` enforces p_bar > lambda*g1 and mu_bar > 0."""
    while True:
        kind = "constant" if constant_jump else str(rng.choice(["constant", "exponential", "lognormal"]))
        if kind == "constant":
            jump = JumpDistribution.constant(rng.uniform(0.05, 1.0))
        elif kind == "exponential":
            jump = JumpDistribution.exponential(rng.uniform(0.05, 1.0))
        else:
            jump = JumpDistribution.lognormal(rng.uniform(-3, 0), rng.uniform(0.1, 1.0))
        r = rng.uniform(0.0, 0.08)
        lam = rng.uniform(0.0, 1.0)
        alpha = rng.uniform(0.0, 0.2)
        margin = rng.uniform(0.005, 0.3) if economic else rng.uniform(-0.2, 0.3)
        params = MarketParams(
            r=r,
            mu=r + (rng.uniform(0.005, 0.2) if economic else rng.uniform(-0.1, 0.2)),
            sigma=rng.uniform(0.05, 0.6),
            alpha=alpha,
            beta=rng.uniform(0.0, 0.5),
            rho=rng.uniform(-0.99, 0.99),
            lam=lam,
            p=alpha + lam * jump.gamma_bar1 + margin,
            T=rng.uniform(0.25, 5.0),
        )
        try:
            derive(params, jump)
        except DegenerateModel:
            continue
        return params, jump, float(rng.uniform(0.2, 10.0))


def kappa_identity_errors(c: DerivedCoefficients) -> tuple[float, float, float]:
    """Relative errors of the two kappa3 forms and both sides of the kappa identity."""
    k3 = c.kappa3
    form1 = kappa3_expanded(c)
    lin = c.mu_bar * c.kappa1 + c.q * c.kappa2
    quad = ((c.sigma * c.kappa1 - c.rho * c.beta * c.kappa2) ** 2
            + c.beta**2 * (1 - c.rho**2) * c.kappa2**2 + c.lam * c.gamma_bar2 * c.kappa2**2)
    scale = abs(k3)
    return abs(form1 - k3) / scale, abs(lin - k3) / scale, abs(quad - k3) / scale


# ---------------------------------------------------------------------------
# Full report for one scenario
# ---------------------------------------------------------------------------


def _is_base(params: MarketParams, jump: JumpDistribution) -> bool:
    base = asdict(BASE_PARAMS)
    here = asdict(params)
    return (
        all(math.isclose(base[k], here[k], rel_tol=1e-12, abs_tol=1e-15) for k in base if k != "rho")
        and jump == BASE_JUMP
    )


def verification_report(params: MarketParams, jump: JumpDistribution, theta: float) -> list[Check]:
    """Run every scenario-level check.  Raises DegenerateModel for invalid scenarios."""
    c = derive(params, jump)
    checks: list[Check] = []
    for w in c.warnings:
        checks.append(Check("warning", w, "", True))

    e1, e2, e3 = kappa_identity_errors(c)
    checks.append(Check("kappa3_two_forms", e1, 1e-12, e1 < 1e-12))
    checks.append(Check("kappa_identity_linear", e2, 1e-12, e2 < 1e-12))
    checks.append(Check("kappa_identity_quadratic", e3, 1e-12, e3 < 1e-12))

    dev = ode_deviation(c, theta)
    checks.append(Check("ode_ansatz_vs_closed_form", dev, 1e-8, dev < 1e-8))
    hjb = hjb_grid_residual(c, theta)
    checks.append(Check("hjb_residual_grid", hjb, 1e-10, hjb < 1e-10))
    term = max(abs(hjb_residual(c, theta, c.T, x, y)) for x in (0.5, 1, 2) for y in (0.5, 1, 2))
    checks.append(Check("hjb_terminal_condition", term, 1e-12, term < 1e-12))

    # concavity of the supremand at the optimum
    t_mid = 0.5 * c.T
    pi, L = cf.tc_control(c, theta, t_mid)
    best = hjb_supremand(c, theta, t_mid, 1.0, 1.0, pi, L)
    worst_gain = max(
        hjb_supremand(c, theta, t_mid, 1.0, 1.0, pi + dp, L + dl) - best
        for dp, dl in ((1e-4, 0), (-1e-4, 0), (0, 1e-4), (0, -1e-4))
    )
    checks.append(Check("hjb_first_order_conditions", worst_gain, "< 0", worst_gain < 0))

    tc = cf.tc_moments(c, theta, 0.0, 1.0)
    pre = cf.pre_moments(c, theta, 0.0, 1.0)
    j_tc = tc.mean - theta / 2 * tc.variance
    checks.append(Check("dominance_mean", pre.mean - tc.mean, "> 0", pre.mean > tc.mean))
    checks.append(Check("dominance_variance", pre.variance - tc.variance, "> 0", pre.variance > tc.variance))
    checks.append(Check("dominance_objective", cf.pre_value(c, theta, 0.0, 1.0) - j_tc, "> 0",
                        cf.pre_value(c, theta, 0.0, 1.0) > j_tc))

    for rho in sorted({params.rho, -0.5, 0.5}):
        try:
            reports = sensitivity_signs(params.replace(rho=rho), jump, theta)
        except DegenerateModel:
            continue
        for rep in reports:
            if rep.constrained:
                checks.append(Check(
                    f"signs.d{rep.quantity}/d{rep.parameter}[rho={rho:g}]",
                    rep.derivative, f"sign {rep.expected:+d}", bool(rep.agree),
                ))

    if _is_base(params, jump):
        fig = figure_checks(params, jump)
        checks.extend(fig.checks)
        checks.append(Check("rho_sweep.kappa1_root", fig.kappa1_root, 0.005, abs(fig.kappa1_root + 0.76) <= 0.005))
    else:
        checks.append(Check("figure_checks", "skipped", "", True, "figure properties apply to the base scenario only"))
    return checks
