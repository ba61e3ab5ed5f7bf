"""Empirical distribution machinery.

ECDFs with generalized-inverse quantiles, crossing-point estimation
between two treatment distributions, rank maps matching equally-ranked
treatment values across periods, a one-sided stochastic-dominance
diagnostic, and the constrained piecewise-linear rank-map fit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._transport import QQTransport
from .data_model import CrossSection, Dataset
from .errors import EmptySelectionError, ValidationError

CROSSING_FLAT_TOL = 1e-12

#: Knot locations (treatment units) matching the tax-schedule kink points
#: used as defaults for the piecewise rank-map fit.
DEFAULT_Q_KNOTS = (12.0, 15.2, 23.4, 26.8)


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous empirical CDF of a sample."""

    sorted_values: np.ndarray

    def __post_init__(self):
        arr = np.sort(np.asarray(self.sorted_values, dtype=float))
        if arr.size == 0:
            raise ValidationError("ecdf needs a nonempty sample")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("ecdf sample contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "sorted_values", arr)

    @property
    def n(self) -> int:
        return len(self.sorted_values)

    def __call__(self, x):
        """F(x) = #{values <= x} / n, evaluated elementwise."""
        counts = np.searchsorted(self.sorted_values, np.asarray(x, dtype=float), side="right")
        return counts / self.n

    def quantile(self, p):
        """Generalized inverse inf{x : F(x) >= p} for p in (0, 1]."""
        p_arr = np.atleast_1d(np.asarray(p, dtype=float))
        if np.any(p_arr <= 0.0) or np.any(p_arr > 1.0):
            raise ValidationError("quantile level must lie in (0, 1]")
        ladder = np.arange(1, self.n + 1) / self.n
        idx = np.searchsorted(ladder, p_arr, side="left")
        idx = np.minimum(idx, self.n - 1)
        out = self.sorted_values[idx]
        return float(out[0]) if np.isscalar(p) or np.asarray(p).ndim == 0 else out


def ecdf(values) -> EmpiricalCdf:
    """Empirical CDF of a sample vector."""
    return EmpiricalCdf(np.asarray(values, dtype=float))


def quantile(cdf: EmpiricalCdf, p):
    """Generalized-inverse quantile of an :class:`EmpiricalCdf`."""
    return cdf.quantile(p)


@dataclass(frozen=True)
class CrossingPoint:
    """Estimated crossing of two treatment CDFs over a trimmed interval.

    ``location`` is the smallest minimizer of ``|F2 - F1|`` over
    ``[F1^{-1}(trim_lower), F1^{-1}(trim_upper)]``; ``flat_set_width``
    spans the candidate points within ``1e-12`` of the minimum, so an
    interval-valued crossing set is visible to the caller.
    """

    location: float
    objective: float
    trim_lower: float
    trim_upper: float
    search_interval: tuple[float, float]
    flat_set_width: float

    def __post_init__(self):
        if not (0.0 < self.trim_lower < self.trim_upper < 1.0):
            raise ValidationError("need 0 < trim_lower < trim_upper < 1")
        lo, hi = self.search_interval
        if not lo <= self.location <= hi:
            raise ValidationError("crossing location outside its search interval")

    def to_json(self) -> str:
        return json.dumps(
            {
                "location": self.location,
                "objective": self.objective,
                "trim_lower": self.trim_lower,
                "trim_upper": self.trim_upper,
                "flat_set_width": self.flat_set_width,
            }
        )


def estimate_crossing(
    s1: CrossSection,
    s2: CrossSection,
    trim_lower: float = 0.05,
    trim_upper: float = 0.95,
) -> CrossingPoint:
    """Estimate the treatment-CDF crossing between two cross-sections.

    The difference ``F̂2 - F̂1`` of the two empirical CDFs is a
    right-continuous step function, so enumerating the pooled sample
    points inside the trimmed interval is an exact minimization of its
    absolute value; ties resolve to the smallest minimizer.

    Parameters
    ----------
    s1, s2 : CrossSection
        ``s1`` is the comparison period whose quantiles trim the search
        interval; ``s2`` is the reference period.
    trim_lower, trim_upper : float
        Quantile trimming bounds, ``0 < trim_lower < trim_upper < 1``.
    """
    if not (0.0 < trim_lower < trim_upper < 1.0):
        raise ValidationError("need 0 < trim_lower < trim_upper < 1")
    f1 = ecdf(s1.treatments)
    f2 = ecdf(s2.treatments)
    lo = f1.quantile(trim_lower)
    hi = f1.quantile(trim_upper)
    pooled = np.unique(np.concatenate([f1.sorted_values, f2.sorted_values]))
    inner = pooled[(pooled > lo) & (pooled <= hi)]
    candidates = np.concatenate([[lo], inner])
    psi = f2(candidates) - f1(candidates)
    abs_psi = np.abs(psi)
    best = int(np.argmin(abs_psi))  # argmin takes the first (smallest x) on ties
    near = candidates[abs_psi <= abs_psi[best] + CROSSING_FLAT_TOL]
    return CrossingPoint(
        location=float(candidates[best]),
        objective=float(abs_psi[best]),
        trim_lower=trim_lower,
        trim_upper=trim_upper,
        search_interval=(float(lo), float(hi)),
        flat_set_width=float(near[-1] - near[0]),
    )


@dataclass(frozen=True)
class RankMap:
    """q(x) = F̂_source^{-1}(F̂_target(x)): the period-`source` treatment
    value at the same rank as a period-`target` value ``x``."""

    source_period: int
    target_period: int
    source_sorted: np.ndarray = field(repr=False)
    target_sorted: np.ndarray = field(repr=False)

    def evaluate(self, x, with_flags: bool = False):
        """Map target-period treatment values to source-period values.

        Values with ``F̂_target(x) = 0`` fall below the source support and
        are clamped to the source minimum; request ``with_flags`` to see
        which queries were clamped.
        """
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        counts = np.searchsorted(self.target_sorted, x_arr, side="right")
        n_src = len(self.source_sorted)
        n_tgt = len(self.target_sorted)
        # inf{j : j/n_src >= k/n_tgt} via integer ceil division: no float dust
        idx = -(-counts * n_src // n_tgt)
        clamped = idx == 0
        idx = np.clip(idx, 1, n_src)
        out = self.source_sorted[idx - 1]
        scalar = np.isscalar(x) or np.asarray(x).ndim == 0
        if scalar:
            out = float(out[0])
            clamped = bool(clamped[0])
        if with_flags:
            return out, clamped
        return out

    def __call__(self, x):
        return self.evaluate(x)


def rank_map(dataset: Dataset, source_period: int, target_period: int) -> RankMap:
    """Build the rank map between two periods of a dataset."""
    src = dataset.period(source_period)
    tgt = dataset.period(target_period)
    return RankMap(
        source_period=source_period,
        target_period=target_period,
        source_sorted=np.sort(src.treatments),
        target_sorted=np.sort(tgt.treatments),
    )


@dataclass(frozen=True)
class DominanceResult:
    statistic: float
    p_value: float
    interval: tuple[float, float]
    n_boot: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "statistic": self.statistic,
                "p_value": self.p_value,
                "interval": list(self.interval),
                "n_boot": self.n_boot,
                "seed": self.seed,
            }
        )


def _sup_cdf_gap(x1_sorted, x2_sorted, a, b) -> float:
    pooled = np.unique(np.concatenate([x1_sorted, x2_sorted]))
    inner = pooled[(pooled > a) & (pooled <= b)]
    pts = np.concatenate([[a], inner])
    g1 = np.searchsorted(x1_sorted, pts, side="right") / len(x1_sorted)
    g2 = np.searchsorted(x2_sorted, pts, side="right") / len(x2_sorted)
    return float(np.max(g1 - g2))


def dominance_test(
    s1: CrossSection,
    s2: CrossSection,
    interval: tuple[float, float],
    n_boot: int = 199,
    seed: int = 0,
) -> DominanceResult:
    """One-sided test of F1(x) <= F2(x) on an interval.

    The statistic is ``sup_{x in [a,b]} (F̂1(x) - F̂2(x))``. The p-value
    resamples both periods from the pooled sample (the least-favorable
    configuration F1 = F2) with per-replicate RNG streams, so the result
    is deterministic given the seed and independent of scheduling.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValidationError("dominance interval needs a < b")
    if n_boot < 99:
        raise ValidationError("dominance_test needs at least 99 bootstrap replicates")
    x1 = np.sort(s1.treatments)
    x2 = np.sort(s2.treatments)
    pooled_all = np.concatenate([x1, x2])
    if a > pooled_all.max() or b < pooled_all.min():
        raise ValidationError("dominance interval lies outside the pooled support")
    stat = _sup_cdf_gap(x1, x2, a, b)
    n1, n2 = len(x1), len(x2)
    exceed = 0
    for r in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        draw = rng.integers(0, n1 + n2, size=n1 + n2)
        b1 = np.sort(pooled_all[draw[:n1]])
        b2 = np.sort(pooled_all[draw[n1:]])
        if _sup_cdf_gap(b1, b2, a, b) >= stat:
            exceed += 1
    p_value = (1 + exceed) / (n_boot + 1)
    return DominanceResult(statistic=stat, p_value=p_value, interval=(a, b), n_boot=n_boot, seed=seed)


@dataclass(frozen=True)
class PiecewiseQFit:
    """Piecewise-linear fit of the treatment rank map's inverse.

    The model is
    ``m(x) = x + z0*(x-k0)+ + z1*(x-k1)+ + z2*(x-k2)+ - (z0+z1+z2)*(x-k3)+``,
    the identity below ``k0``, with the implied fourth coefficient
    telescoping the slope back to 1 above ``k3``.
    """

    knots: tuple[float, float, float, float]
    zeta: tuple[float, float, float]
    fit_error: float

    def __post_init__(self):
        if len(self.knots) != 4 or not np.all(np.diff(self.knots) > 0):
            raise ValidationError("need 4 strictly ascending knots")

    @property
    def implied_last_coefficient(self) -> float:
        return -sum(self.zeta)

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        k0, k1, k2, k3 = self.knots
        z0, z1, z2 = self.zeta
        out = (
            x
            + z0 * np.maximum(x - k0, 0.0)
            + z1 * np.maximum(x - k1, 0.0)
            + z2 * np.maximum(x - k2, 0.0)
            - (z0 + z1 + z2) * np.maximum(x - k3, 0.0)
        )
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"knots": list(self.knots), "zeta": list(self.zeta), "fit_error": self.fit_error}
        )


def fit_piecewise_q(
    s1: CrossSection,
    s2: CrossSection,
    knots=DEFAULT_Q_KNOTS,
    grid_step: float | None = None,
) -> PiecewiseQFit:
    """Fit the piecewise-linear model to the empirical inverse rank map.

    Minimizes the integrated squared deviation between the model and the
    empirical quantile-quantile map from period-1 to period-2 treatments
    over ``[k0, k3]``, by linear least squares on a uniform grid
    (default step ``(k3 - k0)/400``). The Q-Q map interpolates linearly
    between order statistics, so identical samples yield zero
    coefficients up to float rounding.
    """
    knots = tuple(float(k) for k in knots)
    if len(knots) != 4 or not np.all(np.diff(knots) > 0):
        raise ValidationError("need 4 strictly ascending knots")
    k0, k1, k2, k3 = knots
    if grid_step is None:
        grid_step = (k3 - k0) / 400.0
    if not grid_step > 0:
        raise ValidationError("grid_step must be positive")
    if not np.any((s1.treatments >= k0) & (s1.treatments <= k3)):
        raise EmptySelectionError("no period-1 sample mass between the outer knots")
    if not np.any((s2.treatments >= k0) & (s2.treatments <= k3)):
        raise EmptySelectionError("no period-2 sample mass between the outer knots")
    n_steps = int(np.ceil((k3 - k0) / grid_step))
    grid = k0 + grid_step * np.arange(n_steps + 1)
    grid[-1] = k3
    transport = QQTransport.from_samples(s1.treatments, s2.treatments)
    target = transport(grid) - grid
    basis = np.column_stack(
        [np.maximum(grid - k, 0.0) - np.maximum(grid - k3, 0.0) for k in (k0, k1, k2)]
    )
    if np.linalg.matrix_rank(basis) < 3:
        raise ValidationError("singular piecewise design; check knots against the grid")
    zeta, *_ = np.linalg.lstsq(basis, target, rcond=None)
    resid = target - basis @ zeta
    fit_error = float(np.sum(resid**2) * grid_step)
    return PiecewiseQFit(knots=knots, zeta=tuple(float(z) for z in zeta), fit_error=fit_error)
