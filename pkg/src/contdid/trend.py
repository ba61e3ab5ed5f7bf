"""Heterogeneous time-trend estimation via quantile-quantile transport.

The trend map g_t carries the reference-period outcome scale onto the
period-t scale: its value at y is the period-t conditional outcome
quantile at the rank that y occupies in the reference period's
conditional outcome distribution, both conditioned at a treatment-CDF
crossing point (kernel-weighted) or on a control interval (plain
subsample ECDFs). Its inverse places period-t outcomes on the
reference-period scale, which is what the effect estimators consume.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._transport import QQTransport
from .data_model import CrossSection, Dataset, resample_dataset
from .empirical import CrossingPoint
from .errors import EmptyKernelWindowError, EmptySelectionError, ValidationError
from .kernels import KernelSpec, conditional_cdf_at, kernel_weights

DEFAULT_GRID_SIZE = 512
ISOTONIC_TOL = 1e-10


def _ensure_monotone(values: np.ndarray) -> np.ndarray:
    diffs = np.diff(values)
    if np.any(diffs < -ISOTONIC_TOL):
        raise ValidationError("trend evaluations invert order beyond the isotonic tolerance")
    if np.any(diffs < 0):
        return np.maximum.accumulate(values)
    return values


@dataclass(frozen=True)
class TrendMap:
    """Monotone transport between the reference and period-t outcome scales.

    ``grid`` spans the observed reference-period outcome range and
    ``g_values`` holds g_t on it; exact evaluation (including the
    inverse) goes through the underlying piecewise-linear transport, with
    slope-1 extrapolation beyond the observed conditional ranges.
    """

    period: int
    reference_period: int
    source: dict
    grid: np.ndarray = field(repr=False)
    g_values: np.ndarray = field(repr=False)
    _forward: QQTransport = field(repr=False)

    def g(self, y):
        """g_t: reference-period outcome scale -> period-t scale."""
        return self._forward(y)

    def g_inv(self, y):
        """g_t^{-1}: period-t outcome scale -> reference-period scale."""
        return self._forward.inverse()(y)

    def adjustment_flags(self, y) -> np.ndarray:
        """Mask of period-t outcomes beyond the transport's observed range."""
        return self._forward.inverse().out_of_range(y)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("y_grid,g_value\n")
            for y, g in zip(self.grid, self.g_values):
                fh.write(f"{float(y)!r},{float(g)!r}\n")

    def metadata(self) -> dict:
        return {
            "period": self.period,
            "reference_period": self.reference_period,
            "source": self.source,
            "grid_size": int(len(self.grid)),
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata())


def _build_trend(
    period: int,
    reference_period: int,
    source: dict,
    ref_outcomes,
    ref_weights,
    t_outcomes,
    t_weights,
    grid_size: int,
) -> TrendMap:
    forward = QQTransport.from_samples(
        ref_outcomes, t_outcomes, src_weights=ref_weights, dst_weights=t_weights
    )
    grid = np.linspace(float(np.min(ref_outcomes)), float(np.max(ref_outcomes)), grid_size)
    g_values = _ensure_monotone(np.asarray(forward(grid), dtype=float))
    return TrendMap(
        period=period,
        reference_period=reference_period,
        source=source,
        grid=grid,
        g_values=g_values,
        _forward=forward,
    )


def estimate_trend_point(
    dataset: Dataset,
    t: int,
    crossing: CrossingPoint,
    spec: KernelSpec,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> TrendMap:
    """Estimate g_t from kernel-conditional outcome distributions at a crossing.

    Parameters
    ----------
    dataset : Dataset
    t : int
        Comparison period, ``1 <= t < T``.
    crossing : CrossingPoint
        Estimated crossing between the period-t and reference treatment CDFs.
    spec : KernelSpec
        Kernel family and bandwidth policy; ``auto`` resolves one
        bandwidth per period from its treatment vector.
    grid_size : int
        Number of grid points spanning the observed reference outcome range.
    """
    ref = dataset.reference
    if not 1 <= t < ref.period:
        raise ValidationError(f"comparison period must lie in 1..{ref.period - 1}")
    cs_t = dataset.period(t)
    x_star = crossing.location
    # one common bandwidth for both sides of the transport: unequal windows
    # add unequal local mixture spread to the two conditional distributions,
    # which shows up as a spurious scale in the estimated trend
    h = min(spec.resolve_bandwidth(cs.treatments) for cs in (cs_t, ref))
    weights = {}
    for cs in (cs_t, ref):
        w = kernel_weights(x_star, cs.treatments, spec, h)
        if not w.sum() > 0:
            raise EmptyKernelWindowError(
                f"empty kernel window at the crossing x*={x_star:.6g} in period {cs.period}"
            )
        weights[cs.period] = w
    source = {
        "kind": "point",
        "x_star": x_star,
        "kernel": spec.family,
        "bandwidth": h,
    }
    return _build_trend(
        t, ref.period, source, ref.outcomes, weights[ref.period], cs_t.outcomes, weights[t], grid_size
    )


def _interval_mask(treatments: np.ndarray, intervals) -> np.ndarray:
    mask = np.zeros(len(treatments), dtype=bool)
    for a, b in intervals:
        if not a < b:
            raise ValidationError(f"control interval ({a}, {b}) needs a < b")
        mask |= (treatments >= a) & (treatments <= b)
    return mask


def control_set_imbalance(x_t: np.ndarray, x_ref: np.ndarray) -> float:
    """Sup distance between the two restricted treatment ECDFs.

    On a genuine crossing set the restricted treatment distributions
    coincide, so a large value flags a misspecified control set.
    """
    pts = np.unique(np.concatenate([x_t, x_ref]))
    f1 = np.searchsorted(np.sort(x_t), pts, side="right") / len(x_t)
    f2 = np.searchsorted(np.sort(x_ref), pts, side="right") / len(x_ref)
    return float(np.max(np.abs(f1 - f2)))


def estimate_trend_interval(
    dataset: Dataset,
    t: int,
    intervals,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> TrendMap:
    """Estimate g_t from plain outcome ECDFs on a control set of intervals.

    ``intervals`` is a union of closed intervals ``[(a, b), ...]`` on the
    treatment scale where the two treatment CDFs are supposed to
    coincide. No kernel is involved, so the estimate converges at the
    parametric rate. A warning is emitted when the restricted treatment
    ECDFs differ by more than the two-sample Kolmogorov-Smirnov 5%
    critical value, which suggests the set is not a crossing set.
    """
    ref = dataset.reference
    if not 1 <= t < ref.period:
        raise ValidationError(f"comparison period must lie in 1..{ref.period - 1}")
    cs_t = dataset.period(t)
    intervals = [(float(a), float(b)) for a, b in intervals]
    if not intervals:
        raise ValidationError("need at least one control interval")
    mask_t = _interval_mask(cs_t.treatments, intervals)
    mask_ref = _interval_mask(ref.treatments, intervals)
    if not mask_t.any():
        raise EmptySelectionError(f"no period-{t} observations inside the control set")
    if not mask_ref.any():
        raise EmptySelectionError("no reference-period observations inside the control set")
    x_t = cs_t.treatments[mask_t]
    x_ref = ref.treatments[mask_ref]
    imbalance = control_set_imbalance(x_t, x_ref)
    n1, n2 = len(x_t), len(x_ref)
    ks_crit = 1.358 * np.sqrt((n1 + n2) / (n1 * n2))
    if imbalance > ks_crit:
        warnings.warn(
            f"restricted treatment ECDFs differ by {imbalance:.3f} "
            f"(KS 5% critical value {ks_crit:.3f}); the control set may not be a crossing set",
            stacklevel=2,
        )
    source = {
        "kind": "interval",
        "intervals": [list(iv) for iv in intervals],
        "imbalance": imbalance,
        "n_control": [int(n1), int(n2)],
    }
    return _build_trend(
        t, ref.period, source, ref.outcomes[mask_ref], None, cs_t.outcomes[mask_t], None, grid_size
    )


def adjust_outcomes(cross_section: CrossSection, trend: TrendMap, with_flags: bool = False):
    """Place period-t outcomes on the reference-period scale via g_t^{-1}.

    Outcomes beyond the transport's observed range are carried by slope-1
    extrapolation from the edge; the optional flags mark them.
    """
    adjusted = trend.g_inv(cross_section.outcomes)
    if with_flags:
        return adjusted, trend.adjustment_flags(cross_section.outcomes)
    return adjusted


@dataclass(frozen=True)
class OveridResult:
    statistic: float
    p_value: float
    locations: tuple[float, float]
    grid_range: tuple[float, float]
    n_boot: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "statistic": self.statistic,
                "p_value": self.p_value,
                "locations": list(self.locations),
                "grid_range": list(self.grid_range),
                "n_boot": self.n_boot,
                "seed": self.seed,
            }
        )


def _trend_pair_sup(dataset, t, xa, xb, spec, grid):
    trend_a = estimate_trend_point(dataset, t, _point_at(xa), spec, grid_size=2)
    trend_b = estimate_trend_point(dataset, t, _point_at(xb), spec, grid_size=2)
    return trend_a.g(grid) - trend_b.g(grid)


def _point_at(x: float) -> CrossingPoint:
    return CrossingPoint(
        location=x,
        objective=0.0,
        trim_lower=0.05,
        trim_upper=0.95,
        search_interval=(x, x),
        flat_set_width=0.0,
    )


def overid_diagnostic(
    dataset: Dataset,
    t: int,
    crossing_a: CrossingPoint,
    crossing_b: CrossingPoint,
    spec: KernelSpec,
    grid_size: int = DEFAULT_GRID_SIZE,
    n_boot: int = 199,
    seed: int = 0,
) -> OveridResult:
    """Overidentification diagnostic from two crossing points.

    With several crossings the trend is overidentified: the transports
    estimated at any two of them must agree. The statistic is the sup
    distance between the two estimates over a common outcome grid
    restricted to the region where both are informative (between the 5%
    and 95% conditional outcome quantiles of the reference period at both
    points). The p-value bootstraps the centered statistic, re-estimating
    both transports on each resample while holding the two locations
    fixed.
    """
    ref = dataset.reference
    cs_t = dataset.period(t)
    xa, xb = crossing_a.location, crossing_b.location
    h = max(spec.resolve_bandwidth(cs_t.treatments), spec.resolve_bandwidth(ref.treatments))
    if abs(xa - xb) < h:
        raise ValidationError(
            f"crossings {xa:.6g} and {xb:.6g} are closer than one bandwidth ({h:.6g}); "
            "the two trend maps are not distinguishable"
        )
    lo_bounds, hi_bounds = [], []
    for x in (xa, xb):
        cdf = conditional_cdf_at(x, ref, spec)
        lo_bounds.append(cdf.quantile(0.05))
        hi_bounds.append(cdf.quantile(0.95))
    grid_lo, grid_hi = max(lo_bounds), min(hi_bounds)
    if not grid_lo < grid_hi:
        raise ValidationError("the informative outcome ranges at the two crossings do not overlap")
    grid = np.linspace(grid_lo, grid_hi, grid_size)
    base_diff = _trend_pair_sup(dataset, t, xa, xb, spec, grid)
    statistic = float(np.max(np.abs(base_diff)))
    exceed = 0
    for r in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        boot = resample_dataset(dataset, rng)
        try:
            diff = _trend_pair_sup(boot, t, xa, xb, spec, grid)
        except EmptyKernelWindowError:
            continue
        if np.max(np.abs(diff - base_diff)) >= statistic:
            exceed += 1
    p_value = (1 + exceed) / (n_boot + 1)
    return OveridResult(
        statistic=statistic,
        p_value=p_value,
        locations=(xa, xb),
        grid_range=(float(grid_lo), float(grid_hi)),
        n_boot=n_boot,
        seed=seed,
    )
