"""Repeated cross-section data containers, CSV ingestion, and summaries.

A :class:`Dataset` holds one :class:`CrossSection` per period. Period
labels are relabeled internally to ``1..T`` preserving the order of the
original labels; the reference period is always the largest label, where
the time trend is normalized to the identity.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

DEFAULT_SCHEMA = {"period": "period", "y": "y", "x": "x"}

SUMMARY_KEYS = (
    "period",
    "n",
    "y_mean",
    "y_sd",
    "x_mean",
    "x_sd",
    "y_min",
    "y_max",
    "x_min",
    "x_max",
)


def _as_clean_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise ValidationError(f"{name} must be a nonempty 1-d vector")
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr))[:5].tolist()
        raise ValidationError(f"{name} contains non-finite values at indices {bad}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CrossSection:
    """One period's observations: paired outcome/treatment vectors."""

    period: int
    outcomes: np.ndarray
    treatments: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "outcomes", _as_clean_vector(self.outcomes, "outcomes"))
        object.__setattr__(self, "treatments", _as_clean_vector(self.treatments, "treatments"))
        if len(self.outcomes) != len(self.treatments):
            raise ValidationError(
                f"period {self.period}: outcomes ({len(self.outcomes)}) and "
                f"treatments ({len(self.treatments)}) differ in length"
            )

    @property
    def n(self) -> int:
        return len(self.outcomes)

    def has_treatment_ties(self) -> bool:
        """True when the treatment vector contains repeated values.

        Ties are legal in data but worth flagging: the identification
        argument presumes continuously distributed treatments, and the
        generalized inverses used downstream merely tolerate ties.
        """
        return len(np.unique(self.treatments)) < self.n


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of cross-sections; the last period is the reference."""

    periods: tuple[CrossSection, ...]
    source_labels: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if len(self.periods) < 2:
            raise ValidationError("a dataset needs at least 2 periods")
        labels = [cs.period for cs in self.periods]
        if labels != list(range(1, len(labels) + 1)):
            raise ValidationError(
                "internal period labels must be 1..T in order; use Dataset.from_cross_sections"
            )
        if not self.source_labels:
            object.__setattr__(self, "source_labels", tuple(labels))

    @classmethod
    def from_cross_sections(cls, sections) -> "Dataset":
        """Build a dataset, relabeling periods to 1..T in label order."""
        sections = list(sections)
        if len(sections) < 2:
            raise ValidationError("a dataset needs at least 2 periods")
        raw = [cs.period for cs in sections]
        if len(set(raw)) != len(raw):
            raise ValidationError(f"duplicate period labels: {sorted(raw)}")
        ordered = sorted(sections, key=lambda cs: cs.period)
        relabeled = tuple(
            CrossSection(period=i + 1, outcomes=cs.outcomes, treatments=cs.treatments)
            for i, cs in enumerate(ordered)
        )
        return cls(periods=relabeled, source_labels=tuple(cs.period for cs in ordered))

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def reference(self) -> CrossSection:
        return self.periods[-1]

    def period(self, label: int) -> CrossSection:
        if not 1 <= label <= self.n_periods:
            raise ValidationError(f"period {label} not in 1..{self.n_periods}")
        return self.periods[label - 1]


def load_csv(path, schema: dict | None = None) -> Dataset:
    """Load a repeated cross-section dataset from a single CSV file.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV with a header row. Newlines may be ``\\n`` or ``\\r\\n``.
    schema : dict, optional
        Column mapping with keys ``period``, ``y``, ``x``; values are the
        column names in the file. Defaults to those literal names.

    Returns
    -------
    Dataset
        Periods relabeled to ``1..T`` in increasing order of the labels
        found in the file.

    Raises
    ------
    ValidationError
        On malformed CSV, unresolvable columns, non-numeric or missing
        cells (reported with file line numbers), or fewer than 2 periods.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise ValidationError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        cols = {}
        for key in ("period", "y", "x"):
            name = schema[key]
            if name not in header:
                raise ValidationError(f"{path}: column {name!r} (for {key}) not in header {header}")
            cols[key] = header.index(name)
        by_period: dict[int, tuple[list, list]] = {}
        bad_rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                p = int(row[cols["period"]])
                y = float(row[cols["y"]])
                x = float(row[cols["x"]])
                if not (math.isfinite(y) and math.isfinite(x)):
                    raise ValueError("non-finite value")
            except (ValueError, IndexError):
                bad_rows.append(lineno)
                continue
            ys, xs = by_period.setdefault(p, ([], []))
            ys.append(y)
            xs.append(x)
        if bad_rows:
            shown = ", ".join(map(str, bad_rows[:10]))
            more = "" if len(bad_rows) <= 10 else f" (+{len(bad_rows) - 10} more)"
            raise ValidationError(f"{path}: rejected rows at lines {shown}{more}")
    if len(by_period) < 2:
        raise ValidationError(f"{path}: found {len(by_period)} period(s); need at least 2")
    sections = [
        CrossSection(period=p, outcomes=np.array(ys), treatments=np.array(xs))
        for p, (ys, xs) in by_period.items()
    ]
    return Dataset.from_cross_sections(sections)


def load_csv_pair(path_early, path_reference, schema: dict | None = None) -> Dataset:
    """Load one CSV per period, assigning labels 1 (early) and 2 (reference).

    Each file needs the ``y`` and ``x`` columns of the schema; a period
    column, if present, is ignored.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    sections = []
    for label, path in ((1, path_early), (2, path_reference)):
        try:
            fh = open(path, "r", encoding="utf-8", newline="")
        except OSError as exc:
            raise ValidationError(f"cannot open {path}: {exc}") from exc
        with fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise ValidationError(f"{path}: empty file") from None
            idx = {}
            for key in ("y", "x"):
                name = schema[key]
                if name not in header:
                    raise ValidationError(f"{path}: column {name!r} not in header {header}")
                idx[key] = header.index(name)
            ys, xs, bad = [], [], []
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    y = float(row[idx["y"]])
                    x = float(row[idx["x"]])
                    if not (math.isfinite(y) and math.isfinite(x)):
                        raise ValueError
                except (ValueError, IndexError):
                    bad.append(lineno)
                    continue
                ys.append(y)
                xs.append(x)
            if bad:
                raise ValidationError(f"{path}: rejected rows at lines {bad[:10]}")
            if not ys:
                raise ValidationError(f"{path}: no data rows")
        sections.append(CrossSection(period=label, outcomes=np.array(ys), treatments=np.array(xs)))
    return Dataset.from_cross_sections(sections)


def save_csv(dataset: Dataset, path, schema: dict | None = None) -> None:
    """Write a dataset in the canonical CSV layout (round-trips via repr)."""
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{schema['period']},{schema['y']},{schema['x']}\n")
        for cs in dataset.periods:
            for y, x in zip(cs.outcomes, cs.treatments):
                fh.write(f"{cs.period},{float(y)!r},{float(x)!r}\n")


def resample_dataset(dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Resample every period iid with replacement (same sizes).

    Periods are resampled independently, matching the sampling scheme of
    independent repeated cross-sections. Draws consume the generator in
    period order, so a fixed generator state fixes the resample.
    """
    sections = []
    for cs in dataset.periods:
        idx = rng.integers(0, cs.n, size=cs.n)
        sections.append(
            CrossSection(period=cs.period, outcomes=cs.outcomes[idx], treatments=cs.treatments[idx])
        )
    return Dataset(periods=tuple(sections), source_labels=dataset.source_labels)


def summarize(dataset: Dataset) -> list[dict]:
    """Per-period summary statistics of outcomes and treatments.

    Returns one dict per period with keys
    ``period,n,y_mean,y_sd,x_mean,x_sd,y_min,y_max,x_min,x_max``.
    The standard deviation uses ddof=1 and is 0 for singleton periods.
    """
    out = []
    for cs in dataset.periods:
        y, x = cs.outcomes, cs.treatments
        sd = lambda v: float(np.std(v, ddof=1)) if len(v) > 1 else 0.0
        out.append(
            {
                "period": cs.period,
                "n": cs.n,
                "y_mean": float(np.mean(y)),
                "y_sd": sd(y),
                "x_mean": float(np.mean(x)),
                "x_sd": sd(x),
                "y_min": float(np.min(y)),
                "y_max": float(np.max(y)),
                "x_min": float(np.min(x)),
                "x_max": float(np.max(x)),
            }
        )
    return out
