"""Seeded synthetic data generation and brute-force oracles.

Four data-generating processes exercise the estimators:

* ``LinearSystem`` — additive trend, homogeneous slope, endogenous
  treatment through correlated noise; everything has a closed form.
* ``QuantileRC`` — outcomes monotone in a scalar unobservable with a
  random slope coefficient and an affine period trend.
* ``BoundsExample`` — strictly concave bounded outcomes with Gaussian
  treatments whose scale varies across periods; the curvature-bound
  testbed. Per-period parameters can be hyper-drawn once and frozen.
* ``RcLinear`` — linear correlated-random-coefficient outcomes whose
  slope depends on the treatment rank; the extrapolation testbed.

Oracles condition on the reference-period treatment rank exactly and
average potential outcomes over Monte Carlo draws, reporting the Monte
Carlo standard error alongside the value. Identical seeds reuse
identical draws, so secants at different counterfactual points share
randomness and per-draw curvature inequalities survive averaging.

RNG discipline: all generation flows through ``numpy`` ``SeedSequence``
streams spawned per period / per replicate (splittable, documented
spawn keys), so results are bit-reproducible and independent of
scheduling.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy import optimize, stats

from .data_model import CrossSection, Dataset
from .errors import NoCrossingError, ValidationError

BISECTION_TOL = 1e-10


def _period_rng(seed: int, period_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(period_index,)))


def _oracle_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xC0FFEE,)))


class Dgp(Protocol):
    """Interface every data-generating process implements."""

    @property
    def n_periods(self) -> int: ...

    def simulate_period(self, t: int, n: int, rng: np.random.Generator): ...

    def treat_cdf(self, t: int, x): ...

    def treat_quantile(self, t: int, p): ...

    def potential_outcomes(self, x_cond: float, xs_eval, draws: int,
                           rng: np.random.Generator) -> np.ndarray: ...

    def marginal_effects(self, x_cond: float, x_eval: float, draws: int,
                         rng: np.random.Generator) -> np.ndarray: ...


def _check_lengths(name: str, values, T: int):
    if len(values) != T:
        raise ValidationError(f"{name} must have one entry per period (T = {T})")


@dataclass(frozen=True)
class LinearSystem:
    """Y_t = alpha_t + beta * X_t + U_t with X_t = gamma_t + delta_t * eta_t.

    (U, eta) is standard bivariate normal with correlation ``rho``, drawn
    independently across periods; ``rho != 0`` makes the treatment
    endogenous. Scale changes in the treatment equation guarantee a
    crossing: delta_t must differ from the reference delta.
    """

    alpha: tuple[float, ...]
    beta: float
    gamma: tuple[float, ...]
    delta: tuple[float, ...]
    rho: float = 0.0

    def __post_init__(self):
        T = len(self.alpha)
        if T < 2:
            raise ValidationError("need at least 2 periods")
        _check_lengths("gamma", self.gamma, T)
        _check_lengths("delta", self.delta, T)
        if any(d <= 0 for d in self.delta):
            raise ValidationError("treatment scales delta must be positive")
        if any(self.delta[t] == self.delta[-1] for t in range(T - 1)):
            raise ValidationError("delta_t must differ from the reference delta for every t < T")
        if not -1 < self.rho < 1:
            raise ValidationError("rho must lie in (-1, 1)")

    @property
    def n_periods(self) -> int:
        return len(self.alpha)

    def simulate_period(self, t, n, rng):
        eta = rng.standard_normal(n)
        u = self.rho * eta + math.sqrt(1 - self.rho**2) * rng.standard_normal(n)
        x = self.gamma[t - 1] + self.delta[t - 1] * eta
        y = self.alpha[t - 1] + self.beta * x + u
        return x, y

    def treat_cdf(self, t, x):
        return stats.norm.cdf((np.asarray(x) - self.gamma[t - 1]) / self.delta[t - 1])

    def treat_quantile(self, t, p):
        return self.gamma[t - 1] + self.delta[t - 1] * stats.norm.ppf(np.asarray(p))

    def _cond_eta(self, x_cond: float) -> float:
        return (x_cond - self.gamma[-1]) / self.delta[-1]

    def potential_outcomes(self, x_cond, xs_eval, draws, rng):
        e = self._cond_eta(x_cond)
        u = self.rho * e + math.sqrt(1 - self.rho**2) * rng.standard_normal(draws)
        xs = np.atleast_1d(np.asarray(xs_eval, dtype=float))
        return self.alpha[-1] + self.beta * xs[None, :] + u[:, None]

    def marginal_effects(self, x_cond, x_eval, draws, rng):
        return np.full(draws, self.beta)

    def trend(self, t: int, y):
        """Population time trend g_t on the reference outcome scale."""
        return np.asarray(y) + self.alpha[t - 1] - self.alpha[-1]


@dataclass(frozen=True)
class QuantileRC:
    """Y_t = a_t * (alpha(U) + X_t * beta(U)) + c_t with bounded treatments.

    X_t = gamma_t + delta_t * Phi(eta_t); U = Phi(xi) with (xi, eta)
    bivariate standard normal (correlation ``rho``). alpha(u) = u and
    beta(u) = beta0 + beta1 * u, so outcomes are strictly increasing in
    the unobservable wherever 1 + x * beta1 > 0 (validated on the
    treatment support). Period scales/shifts (a_t, c_t) form the trend,
    normalized to (1, 0) at the reference.
    """

    gamma: tuple[float, ...]
    delta: tuple[float, ...]
    trend_scale: tuple[float, ...]
    trend_shift: tuple[float, ...]
    beta0: float = 1.0
    beta1: float = 0.5
    rho: float = 0.0

    def __post_init__(self):
        T = len(self.gamma)
        if T < 2:
            raise ValidationError("need at least 2 periods")
        for name, vals in (("delta", self.delta), ("trend_scale", self.trend_scale),
                           ("trend_shift", self.trend_shift)):
            _check_lengths(name, vals, T)
        if any(d <= 0 for d in self.delta):
            raise ValidationError("treatment ranges delta must be positive")
        if any(a <= 0 for a in self.trend_scale):
            raise ValidationError("trend scales must be positive")
        if self.trend_scale[-1] != 1.0 or self.trend_shift[-1] != 0.0:
            raise ValidationError("the reference trend must be normalized to identity")
        if not -1 < self.rho < 1:
            raise ValidationError("rho must lie in (-1, 1)")
        x_lo = min(self.gamma)
        x_hi = max(g + d for g, d in zip(self.gamma, self.delta))
        if 1 + x_lo * self.beta1 <= 0 or 1 + x_hi * self.beta1 <= 0:
            raise ValidationError("outcome map not monotone on the treatment support")

    @property
    def n_periods(self) -> int:
        return len(self.gamma)

    def simulate_period(self, t, n, rng):
        eta = rng.standard_normal(n)
        xi = self.rho * eta + math.sqrt(1 - self.rho**2) * rng.standard_normal(n)
        u = stats.norm.cdf(xi)
        x = self.gamma[t - 1] + self.delta[t - 1] * stats.norm.cdf(eta)
        core = u + x * (self.beta0 + self.beta1 * u)
        y = self.trend_scale[t - 1] * core + self.trend_shift[t - 1]
        return x, y

    def treat_cdf(self, t, x):
        z = (np.asarray(x, dtype=float) - self.gamma[t - 1]) / self.delta[t - 1]
        return np.clip(z, 0.0, 1.0)

    def treat_quantile(self, t, p):
        return self.gamma[t - 1] + self.delta[t - 1] * np.asarray(p, dtype=float)

    def _cond_draws(self, x_cond, draws, rng):
        z = (x_cond - self.gamma[-1]) / self.delta[-1]
        if not 0 < z < 1:
            raise ValidationError(f"x = {x_cond} outside the reference treatment support")
        e = stats.norm.ppf(z)
        xi = self.rho * e + math.sqrt(1 - self.rho**2) * rng.standard_normal(draws)
        return stats.norm.cdf(xi)

    def potential_outcomes(self, x_cond, xs_eval, draws, rng):
        u = self._cond_draws(x_cond, draws, rng)
        xs = np.atleast_1d(np.asarray(xs_eval, dtype=float))
        return u[:, None] + xs[None, :] * (self.beta0 + self.beta1 * u[:, None])

    def marginal_effects(self, x_cond, x_eval, draws, rng):
        u = self._cond_draws(x_cond, draws, rng)
        return self.beta0 + self.beta1 * u

    def trend(self, t: int, y):
        return self.trend_scale[t - 1] * np.asarray(y) + self.trend_shift[t - 1]


@dataclass(frozen=True)
class BoundsExample:
    """Concave bounded outcomes: Y_t = 1 - exp(-(delta_t + X_t + U_t)/2).

    X_t = mu_t + sigma_t * Phi^{-1}(V_t) with V_t uniform and
    U_t | V_t ~ N(V_t, 1). The reference period is pinned at mu = 2.5,
    sigma = 1, delta = 0 by default; earlier periods' parameters can be
    drawn once from mu ~ N(2.5, 1), sigma ~ chi2(1), delta ~ N(0, 1) and
    frozen via :meth:`draw`. The population trend is
    g_t(y) = 1 - exp(-delta_t / 2) * (1 - y).
    """

    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    delta: tuple[float, ...]
    hyper_seed: int | None = None

    def __post_init__(self):
        T = len(self.mu)
        if T < 2:
            raise ValidationError("need at least 2 periods")
        _check_lengths("sigma", self.sigma, T)
        _check_lengths("delta", self.delta, T)
        if any(s <= 0 for s in self.sigma):
            raise ValidationError("treatment scales sigma must be positive")
        if any(self.sigma[t] == self.sigma[-1] for t in range(T - 1)):
            raise ValidationError("sigma_t must differ from the reference sigma for every t < T")

    @classmethod
    def draw(cls, T: int, seed: int, mu_ref: float = 2.5, sigma_ref: float = 1.0,
             delta_ref: float = 0.0) -> "BoundsExample":
        """Hyper-draw per-period parameters once and freeze them."""
        if T < 2:
            raise ValidationError("need at least 2 periods")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xB0047,)))
        mu = rng.normal(mu_ref, 1.0, size=T - 1)
        sigma = rng.chisquare(1, size=T - 1)
        delta = rng.normal(0.0, 1.0, size=T - 1)
        sigma = np.maximum(sigma, 1e-3)  # guard against a numerically degenerate period
        return cls(
            mu=tuple(mu) + (mu_ref,),
            sigma=tuple(sigma) + (sigma_ref,),
            delta=tuple(delta) + (delta_ref,),
            hyper_seed=seed,
        )

    def subset(self, T: int) -> "BoundsExample":
        """Keep the first T-1 comparison periods plus the reference."""
        if not 2 <= T <= self.n_periods:
            raise ValidationError(f"T must lie in 2..{self.n_periods}")
        return BoundsExample(
            mu=self.mu[: T - 1] + (self.mu[-1],),
            sigma=self.sigma[: T - 1] + (self.sigma[-1],),
            delta=self.delta[: T - 1] + (self.delta[-1],),
            hyper_seed=self.hyper_seed,
        )

    @property
    def n_periods(self) -> int:
        return len(self.mu)

    def simulate_period(self, t, n, rng):
        v = rng.uniform(size=n)
        u = v + rng.standard_normal(n)
        x = self.mu[t - 1] + self.sigma[t - 1] * stats.norm.ppf(v)
        y = 1.0 - np.exp(-0.5 * (self.delta[t - 1] + x + u))
        return x, y

    def treat_cdf(self, t, x):
        return stats.norm.cdf((np.asarray(x) - self.mu[t - 1]) / self.sigma[t - 1])

    def treat_quantile(self, t, p):
        return self.mu[t - 1] + self.sigma[t - 1] * stats.norm.ppf(np.asarray(p))

    def _cond_u(self, x_cond, draws, rng):
        v = stats.norm.cdf((x_cond - self.mu[-1]) / self.sigma[-1])
        return v + rng.standard_normal(draws)

    def potential_outcomes(self, x_cond, xs_eval, draws, rng):
        u = self._cond_u(x_cond, draws, rng)
        xs = np.atleast_1d(np.asarray(xs_eval, dtype=float))
        return 1.0 - np.exp(-0.5 * (self.delta[-1] + xs[None, :] + u[:, None]))

    def marginal_effects(self, x_cond, x_eval, draws, rng):
        u = self._cond_u(x_cond, draws, rng)
        return 0.5 * np.exp(-0.5 * (self.delta[-1] + x_eval + u))

    def trend(self, t: int, y):
        scale = math.exp(-0.5 * (self.delta[t - 1] - self.delta[-1]))
        return 1.0 - scale * (1.0 - np.asarray(y))


@dataclass(frozen=True)
class RcLinear:
    """Linear correlated random coefficients: Y_t = delta_t + U0 + X_t * U1.

    X_t = mu_t + sigma_t * Phi^{-1}(V_t); the slope is deterministic in
    the treatment rank, U1 = u1_const + u1_rank * V_t, and the intercept
    U0 | V_t ~ N(u0_rank * V_t, u0_sd^2) keeps the treatment endogenous.
    """

    mu: tuple[float, ...]
    sigma: tuple[float, ...]
    delta: tuple[float, ...]
    u1_const: float = 0.5
    u1_rank: float = 1.0
    u0_rank: float = 1.0
    u0_sd: float = 0.5

    def __post_init__(self):
        T = len(self.mu)
        if T < 2:
            raise ValidationError("need at least 2 periods")
        _check_lengths("sigma", self.sigma, T)
        _check_lengths("delta", self.delta, T)
        if any(s <= 0 for s in self.sigma):
            raise ValidationError("treatment scales sigma must be positive")
        if any(self.sigma[t] == self.sigma[-1] for t in range(T - 1)):
            raise ValidationError("sigma_t must differ from the reference sigma for every t < T")
        if self.delta[-1] != 0.0:
            raise ValidationError("the reference trend shift must be 0")
        if self.u0_sd < 0:
            raise ValidationError("u0_sd must be nonnegative")

    @property
    def n_periods(self) -> int:
        return len(self.mu)

    def simulate_period(self, t, n, rng):
        v = rng.uniform(size=n)
        u0 = self.u0_rank * v + self.u0_sd * rng.standard_normal(n)
        u1 = self.u1_const + self.u1_rank * v
        x = self.mu[t - 1] + self.sigma[t - 1] * stats.norm.ppf(v)
        y = self.delta[t - 1] + u0 + x * u1
        return x, y

    def treat_cdf(self, t, x):
        return stats.norm.cdf((np.asarray(x) - self.mu[t - 1]) / self.sigma[t - 1])

    def treat_quantile(self, t, p):
        return self.mu[t - 1] + self.sigma[t - 1] * stats.norm.ppf(np.asarray(p))

    def _rank(self, x_cond: float) -> float:
        return float(stats.norm.cdf((x_cond - self.mu[-1]) / self.sigma[-1]))

    def potential_outcomes(self, x_cond, xs_eval, draws, rng):
        v = self._rank(x_cond)
        u0 = self.u0_rank * v + self.u0_sd * rng.standard_normal(draws)
        u1 = self.u1_const + self.u1_rank * v
        xs = np.atleast_1d(np.asarray(xs_eval, dtype=float))
        return self.delta[-1] + u0[:, None] + xs[None, :] * u1

    def marginal_effects(self, x_cond, x_eval, draws, rng):
        v = self._rank(x_cond)
        return np.full(draws, self.u1_const + self.u1_rank * v)

    def slope_at(self, x: float) -> float:
        """Population E[U1 | X_ref = x] = u1_const + u1_rank * rank(x)."""
        return self.u1_const + self.u1_rank * self._rank(x)

    def trend(self, t: int, y):
        return np.asarray(y) + self.delta[t - 1] - self.delta[-1]


def simulate(dgp, n: int, seed: int) -> Dataset:
    """Simulate a repeated cross-section dataset from a DGP.

    Each period draws from its own spawned RNG stream, so the output is
    bit-reproducible for a given (dgp, n, seed) and unchanged by the
    order in which periods are generated.
    """
    if n < 1:
        raise ValidationError("per-period sample size must be at least 1")
    sections = []
    for t in range(1, dgp.n_periods + 1):
        rng = _period_rng(seed, t)
        x, y = dgp.simulate_period(t, n, rng)
        sections.append(CrossSection(period=t, outcomes=y, treatments=x))
    return Dataset.from_cross_sections(sections)


@dataclass(frozen=True)
class OracleValue:
    value: float
    mc_se: float
    draws: int

    def __float__(self):
        return self.value


def _check_draws(draws: int):
    if draws < 10_000:
        raise ValidationError("oracles need at least 10^4 draws")


def _check_support(dgp, x: float):
    lo = dgp.treat_quantile(dgp.n_periods, 1e-9)
    hi = dgp.treat_quantile(dgp.n_periods, 1 - 1e-9)
    if not lo <= x <= hi:
        raise ValidationError(f"x = {x} outside the reference treatment support")


def population_rank_map(dgp, t: int, x):
    """q_t(x): the period-t treatment value at the rank of x in the reference."""
    return dgp.treat_quantile(t, dgp.treat_cdf(dgp.n_periods, x))


def population_crossing(dgp, t: int) -> float:
    """Crossing point of the period-t and reference treatment CDFs.

    The linear-system variant has the closed form
    (gamma_t - gamma_T) / (delta_T - delta_t); other variants bracket a
    sign change of the CDF difference on a wide quantile range and
    bisect it to 1e-10.
    """
    T = dgp.n_periods
    if not 1 <= t < T:
        raise ValidationError(f"t must lie in 1..{T - 1}")
    if isinstance(dgp, LinearSystem):
        if dgp.delta[t - 1] == dgp.delta[-1]:
            raise NoCrossingError("pure location shift: the treatment CDFs never cross")
        # the two normal CDFs agree where their standardized arguments do:
        # (x - gamma_t)/delta_t = (x - gamma_T)/delta_T
        e_star = (dgp.gamma[t - 1] - dgp.gamma[-1]) / (dgp.delta[-1] - dgp.delta[t - 1])
        return float(dgp.gamma[t - 1] + dgp.delta[t - 1] * e_star)

    def diff(x):
        return float(dgp.treat_cdf(t, x) - dgp.treat_cdf(T, x))

    eps = 1e-6
    lo = float(min(dgp.treat_quantile(t, eps), dgp.treat_quantile(T, eps)))
    hi = float(max(dgp.treat_quantile(t, 1 - eps), dgp.treat_quantile(T, 1 - eps)))
    grid = np.linspace(lo, hi, 4097)
    vals = np.array([diff(g) for g in grid])
    interior = np.abs(vals) > 1e-12
    sign_change = np.flatnonzero(np.diff(np.sign(vals[interior])) != 0)
    if len(sign_change) == 0:
        raise NoCrossingError("no sign change of the treatment-CDF difference found")
    g = grid[interior]
    i = sign_change[0]
    root = optimize.brentq(diff, g[i], g[i + 1], xtol=BISECTION_TOL)
    p = float(dgp.treat_cdf(T, root))
    if not 0 < p < 1:
        raise NoCrossingError("crossing found only at a degenerate rank")
    return float(root)


def oracle_att(dgp, t: int, x: float, draws: int = 100_000, seed: int = 0,
               x_prime: float | None = None) -> OracleValue:
    """Brute-force ATT oracle at (x, q_t(x)) or an explicit x_prime.

    Conditions on the reference rank of x exactly, simulates potential
    outcomes at both treatment values with shared draws, and averages
    the differences.
    """
    _check_draws(draws)
    _check_support(dgp, x)
    if x_prime is None:
        x_prime = float(population_rank_map(dgp, t, x))
    rng = _oracle_rng(seed)
    ys = dgp.potential_outcomes(x, np.array([x_prime, x]), draws, rng)
    diffs = ys[:, 0] - ys[:, 1]
    return OracleValue(float(np.mean(diffs)), float(np.std(diffs) / math.sqrt(draws)), draws)


def oracle_ame(dgp, x: float, draws: int = 100_000, seed: int = 0) -> OracleValue:
    """Brute-force average-marginal-effect oracle at x (reference period)."""
    _check_draws(draws)
    _check_support(dgp, x)
    rng = _oracle_rng(seed)
    me = dgp.marginal_effects(x, x, draws, rng)
    return OracleValue(float(np.mean(me)), float(np.std(me) / math.sqrt(draws)), draws)


def oracle_qtt(dgp, t: int, p: float, x: float, draws: int = 100_000, seed: int = 0,
               x_prime: float | None = None, batches: int = 10) -> OracleValue:
    """Brute-force QTT oracle with a batch-based Monte Carlo standard error."""
    _check_draws(draws)
    _check_support(dgp, x)
    if not 0 < p < 1:
        raise ValidationError("quantile level must lie in (0, 1)")
    if x_prime is None:
        x_prime = float(population_rank_map(dgp, t, x))
    rng = _oracle_rng(seed)
    ys = dgp.potential_outcomes(x, np.array([x_prime, x]), draws, rng)
    value = float(np.quantile(ys[:, 0], p) - np.quantile(ys[:, 1], p))
    per_batch = draws // batches
    batch_vals = [
        float(
            np.quantile(ys[i * per_batch : (i + 1) * per_batch, 0], p)
            - np.quantile(ys[i * per_batch : (i + 1) * per_batch, 1], p)
        )
        for i in range(batches)
    ]
    se = float(np.std(batch_vals, ddof=1) / math.sqrt(batches))
    return OracleValue(value, se, draws)


_VARIANTS = {
    "linear_system": LinearSystem,
    "quantile_rc": QuantileRC,
    "bounds_example": BoundsExample,
    "rc_linear": RcLinear,
}

_TUPLE_FIELDS = {"alpha", "gamma", "delta", "mu", "sigma", "trend_scale", "trend_shift"}


def dgp_from_config(config: dict):
    """Build a DGP from a plain config mapping.

    Layout: ``{"variant": <name>, "params": {...}}``. A
    ``bounds_example`` config may instead give ``{"draw": {"T": ...,
    "seed": ...}}`` to hyper-draw and freeze the per-period parameters.
    """
    try:
        variant = config["variant"]
    except KeyError:
        raise ValidationError("DGP config needs a 'variant' key") from None
    if variant not in _VARIANTS:
        raise ValidationError(f"unknown DGP variant {variant!r}; choose from {sorted(_VARIANTS)}")
    cls = _VARIANTS[variant]
    if variant == "bounds_example" and "draw" in config:
        d = config["draw"]
        return BoundsExample.draw(int(d["T"]), int(d["seed"]))
    params = dict(config.get("params", {}))
    for key in list(params):
        if key in _TUPLE_FIELDS:
            params[key] = tuple(float(v) for v in params[key])
    try:
        return cls(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {variant}: {exc}") from exc


def load_dgp_config(path):
    """Load a DGP from a JSON or TOML config file."""
    with open(path, "rb") as fh:
        text = fh.read()
    if str(path).endswith(".toml"):
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        config = toml.loads(text.decode("utf-8"))
    else:
        config = json.loads(text.decode("utf-8"))
    return dgp_from_config(config)
