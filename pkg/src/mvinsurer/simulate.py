"""Euler Monte Carlo for controlled insurer wealth with compound-Poisson claims.

Paths are generated in fixed-size blocks.  Block ``k`` draws from its own
stream, seeded from ``(seed, k)``, so the output is bit-identical however
many worker threads run the blocks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .closed_form import StrategySpec
from .model import DomainError, JumpDistribution, MarketParams

BLOCK_SIZE = 8192


class InsufficientSamples(ValueError):
    pass


class UnsupportedStrategy(ValueError):
    pass


@dataclass(frozen=True)
class SimulationConfig:
    n_paths: int = 100_000
    n_steps: int = 252  # per year
    seed: int = 0
    antithetic: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n_paths < 2:
            raise DomainError("n_paths must be at least 2")
        if self.n_steps < 1:
            raise DomainError("n_steps must be at least 1")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even n_paths")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise DomainError("workers must be at least 1")

    def total_steps(self, horizon: float) -> int:
        return max(1, round(self.n_steps * horizon))


@dataclass(frozen=True)
class TerminalSample:
    """Simulated wealth values.  With antithetic sampling ``values[2i]`` and
    ``values[2i+1]`` form a pair and only pair averages are independent."""

    values: np.ndarray
    antithetic: bool = False
    time: float | None = None

    def __len__(self) -> int:
        return self.values.size

    def units(self, f=None) -> np.ndarray:
        """Independent replicates of ``f(values)``: pair averages if antithetic."""
        v = self.values if f is None else f(self.values)
        if self.antithetic:
            return v.reshape(-1, 2).mean(axis=1)
        return v

    def dump(self, path: str | Path) -> None:
        np.savetxt(path, self.values, fmt="%.17g")


def _simulate_block(
    params: MarketParams,
    jump: JumpDistribution,
    strategy: StrategySpec,
    t0: float,
    x0: float,
    n: int,
    n_steps: int,
    dt: float,
    rng: np.random.Generator,
    antithetic: bool,
) -> np.ndarray:
    r, mu_bar, p_bar = params.r, params.mu_bar, params.p_bar
    sigma, beta, rho = params.sigma, params.beta, params.rho
    idio = beta * math.sqrt(max(0.0, 1.0 - rho * rho))
    sq = math.sqrt(dt)
    jump_rate = params.lam * dt
    half = n // 2 if antithetic else n

    x = np.full(n, float(x0))
    for k in range(n_steps):
        s = t0 + k * dt
        pi, L = strategy.controls(s, x)
        z1 = rng.standard_normal(half)
        z2 = rng.standard_normal(half)
        counts = rng.poisson(jump_rate, half) if jump_rate > 0 else np.zeros(half, dtype=np.int64)
        claims = jump.sample_sums(rng, counts)
        if antithetic:
            z1 = np.concatenate([z1, -z1])
            z2 = np.concatenate([z2, -z2])
            claims = np.concatenate([claims, claims])
        x = (
            x
            + (r * x + mu_bar * pi + p_bar * L) * dt
            + (sigma * pi - rho * beta * L) * sq * z1
            - idio * L * sq * z2
            - L * claims
        )
    if antithetic:
        # interleave so that (2i, 2i+1) are partners
        out = np.empty(n)
        out[0::2], out[1::2] = x[:half], x[half:]
        return out
    return x


def simulate_wealth(
    params: MarketParams,
    jump: JumpDistribution,
    strategy: StrategySpec,
    config: SimulationConfig,
    t0: float | None = None,
    x0: float | None = None,
    until: float | None = None,
) -> TerminalSample:
    """Simulate wealth from ``(t0, x0)`` to ``until`` (default ``T``).

    Controls are evaluated at the start of each step from the current
    simulated wealth.  The number of steps is ``n_steps`` per year of the
    simulated interval.
    """
    t0 = strategy.t0 if t0 is None else t0
    x0 = strategy.x0 if x0 is None else x0
    end = params.T if until is None else until
    if not 0 <= t0 < end <= params.T + 1e-12:
        raise DomainError(f"need 0 <= t0 < until <= T, got t0={t0}, until={end}")
    steps = config.total_steps(end - t0)
    dt = (end - t0) / steps

    sizes = [BLOCK_SIZE] * (config.n_paths // BLOCK_SIZE)
    if config.n_paths % BLOCK_SIZE:
        sizes.append(config.n_paths % BLOCK_SIZE)
    root = np.random.SeedSequence(config.seed)

    def run(block: int) -> np.ndarray:
        ss = np.random.SeedSequence(root.entropy, spawn_key=(block,))
        rng = np.random.Generator(np.random.PCG64(ss))
        return _simulate_block(params, jump, strategy, t0, x0, sizes[block], steps, dt, rng, config.antithetic)

    if config.workers == 1 or len(sizes) == 1:
        blocks = [run(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            blocks = list(pool.map(run, range(len(sizes))))
    return TerminalSample(np.concatenate(blocks), config.antithetic, end)


def auxiliary_Y(
    params: MarketParams,
    jump: JumpDistribution,
    strategy: StrategySpec,
    t0: float,
    y0: float,
    s: float,
    n_steps: int = 1000,
) -> float:
    """Integrate the deterministic mean-tracking process from ``(t0, y0)`` to ``s`` (RK4)."""
    if not strategy.deterministic:
        raise UnsupportedStrategy(
            f"{strategy.kind.value} controls depend on wealth; their expectation needs the simulated law"
        )
    if s < t0:
        raise DomainError("s must not precede t0")
    if s == t0:
        return float(y0)
    margin = params.p_bar - params.lam * jump.gamma_bar1
    r, mu_bar = params.r, params.mu_bar

    def rhs(u: float, y: float) -> float:
        pi, L = strategy.controls(u)
        return r * y + mu_bar * pi + margin * L

    h = (s - t0) / n_steps
    y = float(y0)
    u = t0
    for _ in range(n_steps):
        k1 = rhs(u, y)
        k2 = rhs(u + h / 2, y + h / 2 * k1)
        k3 = rhs(u + h / 2, y + h / 2 * k2)
        k4 = rhs(u + h, y + h * k3)
        y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        u += h
    return y


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def z(self, reference: float) -> float:
        if self.se == 0:
            return 0.0 if self.value == reference else math.inf
        return (self.value - reference) / self.se

    def within(self, reference: float, k: float = 3.0) -> bool:
        return abs(self.value - reference) <= k * self.se


@dataclass(frozen=True)
class PathStats:
    mean: Estimate
    variance: Estimate
    objective_J: Estimate
    n_effective: int


@dataclass(frozen=True)
class ObjectiveEstimates:
    stats: PathStats
    modified: Estimate  # E[X - theta/2 (X - Y)^2]


def _as_sample(samples) -> TerminalSample:
    if isinstance(samples, TerminalSample):
        return samples
    return TerminalSample(np.asarray(samples, dtype=float))


def path_stats(samples, theta: float) -> PathStats:
    """Mean, variance and mean-variance objective with delta-method errors.

    The variance uses the unbiased ``n - 1`` estimator; its standard error is
    the fourth-central-moment formula (computed on pair averages when
    antithetic).
    """
    sample = _as_sample(samples)
    if len(sample) < 2:
        raise InsufficientSamples("need at least two samples")
    x = sample.values
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    u = sample.units()
    n = u.size
    if n < 2:
        raise InsufficientSamples("need at least two independent replicates")
    centred_sq = sample.units(lambda v: (v - mean) ** 2)
    se_mean = float(u.std(ddof=1) / math.sqrt(n))
    se_var = float(centred_sq.std(ddof=1) / math.sqrt(n))
    # J = mean - theta/2 var, linearised around the sample mean
    j_units = u - 0.5 * theta * centred_sq
    se_j = float(j_units.std(ddof=1) / math.sqrt(n))
    return PathStats(
        mean=Estimate(mean, se_mean),
        variance=Estimate(var, se_var),
        objective_J=Estimate(mean - 0.5 * theta * var, se_j),
        n_effective=n,
    )


def estimate_objectives(samples, theta: float, aux_terminal_y: float) -> ObjectiveEstimates:
    sample = _as_sample(samples)
    stats = path_stats(sample, theta)
    f = sample.units(lambda v: v - 0.5 * theta * (v - aux_terminal_y) ** 2)
    modified = Estimate(float(f.mean()), float(f.std(ddof=1) / math.sqrt(f.size)))
    return ObjectiveEstimates(stats, modified)


def estimate_quadratic_loss(samples, xi: float) -> Estimate:
    sample = _as_sample(samples)
    if len(sample) < 2:
        raise InsufficientSamples("need at least two samples")
    f = sample.units(lambda v: (v - xi) ** 2)
    if f.size < 2:
        raise InsufficientSamples("need at least two independent replicates")
    return Estimate(float(f.mean()), float(f.std(ddof=1) / math.sqrt(f.size)))
