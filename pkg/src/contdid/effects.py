"""Treatment-effect estimators.

ATT and QTT compare trend-adjusted period-t outcomes at the rank-mapped
treatment value against reference-period outcomes at the original value.
Dividing an ATT by its rank gap gives an approximate average marginal
effect; averaging those ratios over well-separated sample points trades
locality for precision. Secant ratios from neighboring rank-map images
bound marginal effects under a local concavity-or-convexity condition,
and under a linear correlated-random-coefficient outcome model the same
ratio point-identifies the average marginal effect everywhere, which is
testable with three or more periods.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .data_model import CrossSection, Dataset, resample_dataset
from .empirical import RankMap, rank_map
from .errors import (
    DegenerateRankGapError,
    EmptyKernelWindowError,
    EmptySelectionError,
    ValidationError,
)
from .kernels import KernelSpec, cond_mean, cond_quantile, nw_mean_many
from .trend import (
    TrendMap,
    _point_at,
    adjust_outcomes,
    estimate_trend_interval,
    estimate_trend_point,
)

EFFECT_KINDS = ("ATT", "QTT", "AME_app", "AME_avg", "AME_rc", "bound_lower", "bound_upper")


@dataclass(frozen=True)
class EffectEstimate:
    """A point estimate with its evaluation point and rank-map image."""

    kind: str
    eval_x: float
    counterfactual_x: float
    value: float
    period_t: int
    quantile_p: float | None = None
    ci: tuple[float, float] | None = None
    retained_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in EFFECT_KINDS:
            raise ValidationError(f"unknown effect kind {self.kind!r}")
        if self.kind == "QTT" and not (self.quantile_p and 0 < self.quantile_p < 1):
            raise ValidationError("QTT needs a quantile level in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eval_x": self.eval_x,
            "counterfactual_x": self.counterfactual_x,
            "quantile_p": self.quantile_p,
            "value": self.value,
            "ci_lo": None if self.ci is None else self.ci[0],
            "ci_hi": None if self.ci is None else self.ci[1],
            "period_t": self.period_t,
            "retained_fraction": self.retained_fraction,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def effect_curve_to_csv(estimates, path) -> None:
    """Serialize a sequence of effect estimates as ``x,q_x,value,ci_lo,ci_hi``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,q_x,value,ci_lo,ci_hi\n")
        for est in estimates:
            lo = "" if est.ci is None else repr(float(est.ci[0]))
            hi = "" if est.ci is None else repr(float(est.ci[1]))
            fh.write(
                f"{float(est.eval_x)!r},{float(est.counterfactual_x)!r},"
                f"{float(est.value)!r},{lo},{hi}\n"
            )


def _bandwidths(dataset: Dataset, t: int, spec: KernelSpec) -> tuple[float, float]:
    h_t = spec.resolve_bandwidth(dataset.period(t).treatments)
    h_ref = spec.resolve_bandwidth(dataset.reference.treatments)
    return h_t, h_ref


def att(dataset: Dataset, t: int, x: float, trend: TrendMap, spec: KernelSpec) -> EffectEstimate:
    """ATT of moving treatment from x to its rank-mapped value q_t(x).

    Nadaraya-Watson mean of trend-adjusted period-t outcomes at q_t(x)
    minus the mean of reference outcomes at x.
    """
    cs_t = dataset.period(t)
    ref = dataset.reference
    q = rank_map(dataset, t, ref.period)
    qx = float(q(x))
    adjusted = adjust_outcomes(cs_t, trend)
    h_t, h_ref = _bandwidths(dataset, t, spec)
    m_t = cond_mean(qx, adjusted, cs_t.treatments, spec, bandwidth=h_t)
    m_ref = cond_mean(x, ref.outcomes, ref.treatments, spec, bandwidth=h_ref)
    return EffectEstimate(kind="ATT", eval_x=float(x), counterfactual_x=qx,
                          value=m_t - m_ref, period_t=t)


def qtt(dataset: Dataset, t: int, p: float, x: float, trend: TrendMap,
        spec: KernelSpec) -> EffectEstimate:
    """QTT: difference of conditional p-quantiles at matched ranks."""
    if not 0 < p < 1:
        raise ValidationError("QTT quantile level must lie in (0, 1)")
    cs_t = dataset.period(t)
    ref = dataset.reference
    q = rank_map(dataset, t, ref.period)
    qx = float(q(x))
    adjusted = adjust_outcomes(cs_t, trend)
    h_t, h_ref = _bandwidths(dataset, t, spec)
    adjusted_section = CrossSection(period=cs_t.period, outcomes=adjusted, treatments=cs_t.treatments)
    q_t_val = cond_quantile(p, qx, adjusted_section, spec, bandwidth=h_t)
    q_ref_val = cond_quantile(p, x, ref, spec, bandwidth=h_ref)
    return EffectEstimate(kind="QTT", eval_x=float(x), counterfactual_x=qx,
                          value=float(q_t_val - q_ref_val), period_t=t, quantile_p=p)


def _resolve_tol_q(dataset: Dataset, spec: KernelSpec, tol_q: float | None) -> float:
    # Below a tenth of the reference bandwidth, the secant denominator is
    # inside kernel resolution and the ratio is noise.
    if tol_q is not None:
        if not tol_q > 0:
            raise ValidationError("tol_q must be positive")
        return tol_q
    return 0.1 * spec.resolve_bandwidth(dataset.reference.treatments)


def ame_app(dataset: Dataset, t: int, x: float, trend: TrendMap, spec: KernelSpec,
            tol_q: float | None = None, kind: str = "AME_app") -> EffectEstimate:
    """Approximate average marginal effect: ATT divided by the rank gap.

    Near a crossing point this estimates the average marginal effect at
    the crossing itself. Degenerate gaps |q_t(x) - x| <= tol_q are an
    error: callers should fall back to bounds or averaging.
    """
    tol = _resolve_tol_q(dataset, spec, tol_q)
    est = att(dataset, t, x, trend, spec)
    gap = est.counterfactual_x - est.eval_x
    if abs(gap) <= tol:
        raise DegenerateRankGapError(
            f"|q({x}) - {x}| = {abs(gap):.3g} <= tol_q = {tol:.3g}; use bounds or averaging"
        )
    return EffectEstimate(kind=kind, eval_x=est.eval_x, counterfactual_x=est.counterfactual_x,
                          value=est.value / gap, period_t=t)


def _ratio_curve(dataset: Dataset, t: int, xs: np.ndarray, trend: TrendMap,
                 spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized secant ratios (ATT/gap) at many reference sample points."""
    cs_t = dataset.period(t)
    ref = dataset.reference
    q = rank_map(dataset, t, ref.period)
    qs = np.asarray(q(xs), dtype=float)
    adjusted = adjust_outcomes(cs_t, trend)
    h_t, h_ref = _bandwidths(dataset, t, spec)
    m_t = nw_mean_many(qs, cs_t.treatments, adjusted, spec, bandwidth=h_t)
    m_ref = nw_mean_many(xs, ref.treatments, ref.outcomes, spec, bandwidth=h_ref)
    return qs, (m_t - m_ref) / (qs - xs)


def ame_avg(dataset: Dataset, t: int, c: float, trend: TrendMap, spec: KernelSpec,
            kind: str = "AME_avg") -> EffectEstimate:
    """Average of the approximate marginal effect over well-separated points.

    Equal-weight average of ATT(x, q_t(x)) / (q_t(x) - x) over reference
    sample points with |q_t(x) - x| > c. The retained fraction of the
    reference sample is reported alongside.
    """
    if not c > 0:
        raise ValidationError("separation threshold c must be positive")
    ref = dataset.reference
    q = rank_map(dataset, t, ref.period)
    xs = ref.treatments
    gaps = np.asarray(q(xs), dtype=float) - xs
    keep = np.abs(gaps) > c
    if not keep.any():
        raise EmptySelectionError(f"no reference sample points with |q(x) - x| > c = {c}")
    _, ratios = _ratio_curve(dataset, t, xs[keep], trend, spec)
    return EffectEstimate(
        kind=kind,
        eval_x=math.nan,
        counterfactual_x=math.nan,
        value=float(np.mean(ratios)),
        period_t=t,
        retained_fraction=float(keep.mean()),
    )


def neighbors(x: float, x_prime: float, rank_maps: dict[int, RankMap]) -> tuple[float, float]:
    """Nearest rank-map images strictly below and above x_prime.

    Images equal to x itself carry no counterfactual variation and are
    excluded. Empty sides return -inf / +inf.
    """
    if len(rank_maps) < 1:
        raise ValidationError("need at least one rank map")
    below, above = -math.inf, math.inf
    for q in rank_maps.values():
        qx = float(q(x))
        if qx == x:
            continue
        if qx < x_prime:
            below = max(below, qx)
        elif qx > x_prime:
            above = min(above, qx)
    return below, above


@dataclass(frozen=True)
class BoundsResult:
    """Secant bounds on an effect, with the neighbors that produced them."""

    eval_x: float
    counterfactual_x: float
    lower: float
    upper: float
    neighbors: tuple[float, float]
    periods_used: tuple[int, ...]

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValidationError("bounds out of order")

    def to_dict(self) -> dict:
        return {
            "eval_x": self.eval_x,
            "counterfactual_x": self.counterfactual_x,
            "lower": self.lower,
            "upper": self.upper,
            "neighbor_below": self.neighbors[0],
            "neighbor_above": self.neighbors[1],
            "periods_used": list(self.periods_used),
        }


def secant_bounds(x: float, x_prime: float, candidates, scale_by_gap: bool) -> BoundsResult:
    """Combine per-period secants into curvature bounds.

    ``candidates`` is a sequence of ``(period, q_value, att_value)``
    triples. Under local concavity or convexity on the spanned interval,
    the two secants at the nearest images below and above ``x_prime``
    bracket the effect; with ``scale_by_gap`` the bracket applies to
    ATT(x, x_prime) via the factor ``(x_prime - x)``, otherwise to the
    average marginal effect at ``x``. A missing neighbor leaves both
    bounds infinite, since the curvature direction is unknown.
    """
    below, above = -math.inf, math.inf
    sec_below = sec_above = math.nan
    periods = []
    for period, q_val, att_val in candidates:
        if q_val == x:
            continue
        if q_val < x_prime and q_val > below:
            below, sec_below, p_below = q_val, att_val / (q_val - x), period
        elif q_val > x_prime and q_val < above:
            above, sec_above, p_above = q_val, att_val / (q_val - x), period
    if not (math.isfinite(below) and math.isfinite(above)):
        lower, upper = -math.inf, math.inf
    else:
        periods = [p_below, p_above]
        r_lo, r_hi = sec_below, sec_above
        if scale_by_gap:
            b1, b2 = (x_prime - x) * r_lo, (x_prime - x) * r_hi
        else:
            b1, b2 = r_lo, r_hi
        lower, upper = min(b1, b2), max(b1, b2)
    return BoundsResult(
        eval_x=float(x),
        counterfactual_x=float(x_prime),
        lower=float(lower),
        upper=float(upper),
        neighbors=(below, above),
        periods_used=tuple(periods),
    )


def _secant_candidates(dataset: Dataset, x: float, x_prime: float,
                       trends: dict[int, TrendMap], spec: KernelSpec):
    ref = dataset.reference
    out = []
    for t in range(1, ref.period):
        if t not in trends:
            raise ValidationError(f"missing trend map for period {t}")
        q = rank_map(dataset, t, ref.period)
        qx = float(q(x))
        if qx == x:
            continue
        out.append((t, qx))
    # only the nearest image on each side of x_prime can furnish a bound,
    # so the ATT is estimated for at most two periods
    lows = [(t, qv) for t, qv in out if qv < x_prime]
    highs = [(t, qv) for t, qv in out if qv > x_prime]
    chosen = []
    if lows:
        chosen.append(max(lows, key=lambda tq: tq[1]))
    if highs:
        chosen.append(min(highs, key=lambda tq: tq[1]))
    cands = []
    for t, qv in chosen:
        est = att(dataset, t, x, trends[t], spec)
        cands.append((t, qv, est.value))
    return cands


def att_bounds(dataset: Dataset, x: float, x_prime: float, trends: dict[int, TrendMap],
               spec: KernelSpec) -> BoundsResult:
    """Curvature bounds on ATT(x, x_prime) from estimated secants."""
    return secant_bounds(x, x_prime, _secant_candidates(dataset, x, x_prime, trends, spec),
                         scale_by_gap=True)


def ame_bounds(dataset: Dataset, x: float, trends: dict[int, TrendMap],
               spec: KernelSpec) -> BoundsResult:
    """Curvature bounds on the average marginal effect at x."""
    return secant_bounds(x, x, _secant_candidates(dataset, x, x, trends, spec),
                         scale_by_gap=False)


def rc_ame(dataset: Dataset, t: int, x: float, trend: TrendMap, spec: KernelSpec,
           tol_q: float | None = None) -> EffectEstimate:
    """Average marginal effect at x under the linear random-coefficient model.

    Identical arithmetic to :func:`ame_app`; under outcome linearity in
    treatment the secant ratio equals the marginal effect exactly, at
    every x with a nondegenerate rank gap.
    """
    return ame_app(dataset, t, x, trend, spec, tol_q=tol_q, kind="AME_rc")


def rc_ame_overall(dataset: Dataset, t: int, trend: TrendMap, spec: KernelSpec,
                   c: float) -> EffectEstimate:
    """Population-average marginal effect under the linear RC model.

    Sample average of the secant ratio over reference points with
    |q_t(x) - x| > c; the retained-mass fraction is reported because the
    extrapolation requires q_t(X) != X almost surely.
    """
    return ame_avg(dataset, t, c, trend, spec, kind="AME_rc")


def rc_trend_shift(trend: TrendMap) -> float:
    """Additive trend shift implied by a linear-RC trend map.

    Trimmed mean (central 80%) of g_t(y) - y over the trend grid: a
    robust location summary of an approximately constant shift.
    """
    diffs = np.sort(trend.g_values - trend.grid)
    k = len(diffs)
    cut = int(0.1 * k)
    core = diffs[cut : k - cut] if k - 2 * cut >= 1 else diffs
    return float(np.mean(core))


@dataclass(frozen=True)
class LinearityTestResult:
    statistic: float
    p_value: float
    eval_x: float
    ratios: dict[int, float]
    n_boot: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "statistic": self.statistic,
                "p_value": self.p_value,
                "eval_x": self.eval_x,
                "ratios": {str(k): v for k, v in self.ratios.items()},
                "n_boot": self.n_boot,
                "seed": self.seed,
            }
        )


def _period_ratios(dataset: Dataset, x: float, trends: dict[int, TrendMap],
                   spec: KernelSpec, tol: float) -> dict[int, float]:
    ratios = {}
    for t, trend in trends.items():
        q = rank_map(dataset, t, dataset.reference.period)
        if abs(float(q(x)) - x) <= tol:
            continue
        ratios[t] = ame_app(dataset, t, x, trend, spec, tol_q=tol).value
    return ratios


def _reestimated_trends(dataset: Dataset, trends: dict[int, TrendMap],
                        spec: KernelSpec) -> dict[int, TrendMap]:
    out = {}
    for t, trend in trends.items():
        if trend.source.get("kind") == "interval":
            out[t] = estimate_trend_interval(dataset, t, trend.source["intervals"],
                                             grid_size=len(trend.grid))
        else:
            out[t] = estimate_trend_point(dataset, t, _point_at(trend.source["x_star"]),
                                          spec, grid_size=2)
    return out


def rc_linearity_test(dataset: Dataset, x: float, trends: dict[int, TrendMap],
                      spec: KernelSpec, n_boot: int = 199, seed: int = 0,
                      tol_q: float | None = None) -> LinearityTestResult:
    """Test of outcome linearity in treatment across period pairs.

    Under the linear RC model the secant ratios agree across periods, so
    the statistic is the largest pairwise gap between per-period ratios
    at x. The p-value bootstraps the centered statistic with the full
    per-replicate re-estimation of trends and rank maps (crossing
    locations held fixed at those recorded in the supplied trends).
    """
    if dataset.n_periods < 3:
        raise ValidationError("the linearity test needs at least 3 periods")
    tol = _resolve_tol_q(dataset, spec, tol_q)
    ratios = _period_ratios(dataset, x, trends, spec, tol)
    if len(ratios) < 2:
        raise ValidationError(
            f"fewer than two periods have |q_t(x) - x| > {tol:.3g} at x = {x}"
        )
    keys = sorted(ratios)
    vals = np.array([ratios[k] for k in keys])
    statistic = float(np.max(vals) - np.min(vals))
    exceed = 0
    for r in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        boot = resample_dataset(dataset, rng)
        try:
            boot_trends = _reestimated_trends(boot, {k: trends[k] for k in keys}, spec)
            boot_ratios = _period_ratios(boot, x, boot_trends, spec, tol)
            if any(k not in boot_ratios for k in keys):
                continue
        except (EmptyKernelWindowError, DegenerateRankGapError, EmptySelectionError):
            continue
        centered = np.array([boot_ratios[k] - ratios[k] for k in keys])
        if (np.max(centered) - np.min(centered)) >= statistic:
            exceed += 1
    p_value = (1 + exceed) / (n_boot + 1)
    return LinearityTestResult(statistic=statistic, p_value=p_value, eval_x=float(x),
                               ratios=ratios, n_boot=n_boot, seed=seed)
