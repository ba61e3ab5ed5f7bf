"""Full-pipeline percentile bootstrap.

Each replicate resamples every period's cross-section with replacement
and reruns the entire pipeline: crossing point, bandwidths, rank map,
trend, effect. Replicates draw from RNG streams spawned per replicate
index, so confidence intervals are deterministic given the seed and
identical whether replicates run serially or in parallel. Failed
replicates (empty kernel windows, degenerate rank gaps, empty selection
sets) are dropped and tallied by reason rather than retried, since
retrying would bias the bootstrap distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, resample_dataset
from .empirical import estimate_crossing
from .errors import (
    ContdidError,
    DegenerateRankGapError,
    EmptyKernelWindowError,
    EmptySelectionError,
    ValidationError,
)
from .kernels import KernelSpec
from .trend import _point_at, estimate_trend_interval, estimate_trend_point
from . import effects

ESTIMAND_KINDS = ("att", "qtt", "ame_app", "ame_avg", "rc_ame", "rc_ame_overall", "crossing")

_FAILURE_TYPES = (EmptyKernelWindowError, DegenerateRankGapError, EmptySelectionError)


@dataclass(frozen=True)
class Estimand:
    """Named pipeline configuration for one scalar estimand."""

    kind: str
    t: int = 1
    x: float | None = None
    p: float | None = None
    c: float | None = None
    tol_q: float | None = None
    trim_lower: float = 0.05
    trim_upper: float = 0.95
    control_set: tuple[tuple[float, float], ...] | None = None
    freeze_crossing: bool = False
    grid_size: int = 64

    def __post_init__(self):
        if self.kind not in ESTIMAND_KINDS:
            raise ValidationError(f"unknown estimand {self.kind!r}; choose from {ESTIMAND_KINDS}")
        if self.kind in ("att", "qtt", "ame_app", "rc_ame") and self.x is None:
            raise ValidationError(f"estimand {self.kind} needs an evaluation point x")
        if self.kind == "qtt" and self.p is None:
            raise ValidationError("estimand qtt needs a quantile level p")
        if self.kind in ("ame_avg", "rc_ame_overall") and self.c is None:
            raise ValidationError(f"estimand {self.kind} needs a separation threshold c")


class _PipelineContext:
    """Per-dataset shared stages: crossing, trend, adjusted outcomes."""

    def __init__(self, dataset: Dataset, estimand: Estimand, spec: KernelSpec,
                 fixed_crossing: float | None = None):
        self.dataset = dataset
        t = estimand.t
        ref = dataset.reference
        if not 1 <= t < ref.period:
            raise ValidationError(f"comparison period must lie in 1..{ref.period - 1}")
        if fixed_crossing is not None:
            self.crossing = _point_at(fixed_crossing)
        else:
            self.crossing = estimate_crossing(
                dataset.period(t), ref, estimand.trim_lower, estimand.trim_upper
            )
        if estimand.kind == "crossing":
            self.trend = None
        elif estimand.control_set is not None:
            self.trend = estimate_trend_interval(dataset, t, estimand.control_set,
                                                 grid_size=estimand.grid_size)
        else:
            self.trend = estimate_trend_point(dataset, t, self.crossing, spec,
                                              grid_size=estimand.grid_size)

    def evaluate(self, estimand: Estimand, spec: KernelSpec) -> float:
        ds, t = self.dataset, estimand.t
        kind = estimand.kind
        if kind == "crossing":
            return self.crossing.location
        if kind == "att":
            return effects.att(ds, t, estimand.x, self.trend, spec).value
        if kind == "qtt":
            return effects.qtt(ds, t, estimand.p, estimand.x, self.trend, spec).value
        if kind == "ame_app":
            return effects.ame_app(ds, t, estimand.x, self.trend, spec, tol_q=estimand.tol_q).value
        if kind == "rc_ame":
            return effects.rc_ame(ds, t, estimand.x, self.trend, spec, tol_q=estimand.tol_q).value
        if kind == "ame_avg":
            return effects.ame_avg(ds, t, estimand.c, self.trend, spec).value
        if kind == "rc_ame_overall":
            return effects.rc_ame_overall(ds, t, self.trend, spec, estimand.c).value
        raise ValidationError(f"unknown estimand {kind!r}")


def run_pipeline(dataset: Dataset, estimand: Estimand, spec: KernelSpec,
                 fixed_crossing: float | None = None) -> float:
    """Run the full estimation pipeline for one estimand on one dataset."""
    ctx = _PipelineContext(dataset, estimand, spec, fixed_crossing)
    return ctx.evaluate(estimand, spec)


@dataclass(frozen=True)
class BootstrapResult:
    """Percentile-bootstrap output for one estimand."""

    point: float
    replicates: np.ndarray = field(repr=False)
    ci_level: float
    ci: tuple[float, float]
    failures: int
    failure_reasons: dict
    n_boot: int
    seed: int

    @property
    def reliable(self) -> bool:
        """False when 20% or more of the replicates failed."""
        return self.failures < 0.2 * self.n_boot

    def to_json(self) -> str:
        return json.dumps(
            {
                "point": self.point,
                "ci_lo": self.ci[0],
                "ci_hi": self.ci[1],
                "level": self.ci_level,
                "B": self.n_boot,
                "failures": self.failures,
                "seed": self.seed,
            }
        )


def _percentile_ci(replicates: np.ndarray, level: float) -> tuple[float, float]:
    alpha = 1.0 - level
    lo, hi = np.quantile(replicates, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def bootstrap_many(dataset: Dataset, estimands, spec: KernelSpec, n_boot: int = 199,
                   level: float = 0.90, seed: int = 0) -> list[BootstrapResult]:
    """Bootstrap several estimands on shared resamples.

    All estimands must agree on the pipeline stages they share (period,
    trimming, control set, crossing policy); each replicate then builds
    those stages once and evaluates every estimand on them, which is also
    what makes joint statements across estimands (differences of QTTs,
    several evaluation points) coherent.
    """
    estimands = list(estimands)
    if not estimands:
        raise ValidationError("need at least one estimand")
    if n_boot < 199:
        raise ValidationError("bootstrap needs at least 199 replicates")
    if not 0.5 < level < 1.0:
        raise ValidationError("confidence level must lie in (0.5, 1)")
    shared = [(e.t, e.trim_lower, e.trim_upper, e.control_set, e.freeze_crossing, e.grid_size)
              for e in estimands]
    if len(set(shared)) != 1:
        raise ValidationError("estimands must share period, trimming, control set, and crossing policy")

    base_ctx = _PipelineContext(dataset, estimands[0], spec)
    points = [base_ctx.evaluate(e, spec) for e in estimands]
    frozen = base_ctx.crossing.location if estimands[0].freeze_crossing else None

    reps = [[] for _ in estimands]
    failures = 0
    reasons: dict[str, int] = {}
    for r in range(n_boot):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        boot = resample_dataset(dataset, rng)
        try:
            ctx = _PipelineContext(boot, estimands[0], spec, fixed_crossing=frozen)
            values = [ctx.evaluate(e, spec) for e in estimands]
        except _FAILURE_TYPES as exc:
            failures += 1
            name = type(exc).__name__
            reasons[name] = reasons.get(name, 0) + 1
            continue
        for bucket, v in zip(reps, values):
            bucket.append(v)
    results = []
    for point, bucket in zip(points, reps):
        if not bucket:
            raise ContdidError("all bootstrap replicates failed")
        arr = np.asarray(bucket)
        results.append(
            BootstrapResult(
                point=point,
                replicates=arr,
                ci_level=level,
                ci=_percentile_ci(arr, level),
                failures=failures,
                failure_reasons=dict(reasons),
                n_boot=n_boot,
                seed=seed,
            )
        )
    return results


def bootstrap(dataset: Dataset, estimand: Estimand, spec: KernelSpec, n_boot: int = 199,
              level: float = 0.90, seed: int = 0) -> BootstrapResult:
    """Percentile bootstrap of one estimand over the full pipeline.

    Within each replicate the crossing point, bandwidths, rank map, and
    trend are all re-estimated (unless the estimand freezes the crossing
    for sensitivity analysis).
    """
    return bootstrap_many(dataset, [estimand], spec, n_boot=n_boot, level=level, seed=seed)[0]
