"""Monotone piecewise-linear quantile-quantile transport.

Maps values on a source scale to equally-ranked values on a destination
scale. Vertices sit at the (possibly weighted) midpoint plotting
positions of each sample, evaluation interpolates linearly between them,
and queries beyond the source value range continue with slope 1 from the
edge image (shift extrapolation). Exact-knot queries return the stored
ordinate bit-for-bit, so transports built from identical weighted samples
are the identity map at and between sample points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _collapse_ties(values: np.ndarray, weights: np.ndarray):
    order = np.argsort(values, kind="mergesort")
    v = values[order]
    w = weights[order]
    uniq, start = np.unique(v, return_index=True)
    wsum = np.add.reduceat(w, start)
    return uniq, wsum


def _midpoint_positions(weights: np.ndarray) -> np.ndarray:
    total = weights.sum()
    cum = np.cumsum(weights)
    return (cum - 0.5 * weights) / total


def _trim_tails(values: np.ndarray, positions: np.ndarray, tail_trim: float):
    if tail_trim <= 0.0:
        return values, positions
    keep = (positions >= tail_trim) & (positions <= 1.0 - tail_trim)
    if keep.sum() < 2:
        return values, positions
    return values[keep], positions[keep]


def interp_exact(x, xp: np.ndarray, fp: np.ndarray):
    """np.interp with bit-exact results at knots (handles repeated queries)."""
    x = np.asarray(x, dtype=float)
    out = np.interp(x, xp, fp)
    j = np.searchsorted(xp, x)
    j = np.minimum(j, len(xp) - 1)
    hit = xp[j] == x
    if np.any(hit):
        out = np.asarray(out)
        out[hit] = fp[j[hit]]
    return out


@dataclass(frozen=True)
class QQTransport:
    """Piecewise-linear transport from a source sample to a destination sample."""

    src_values: np.ndarray
    src_pos: np.ndarray
    dst_values: np.ndarray
    dst_pos: np.ndarray

    @classmethod
    def from_samples(cls, src, dst, src_weights=None, dst_weights=None,
                     tail_trim: float = 0.02) -> "QQTransport":
        """Build the transport from two (optionally weighted) samples.

        ``tail_trim`` drops vertices whose plotting position falls outside
        ``[tail_trim, 1 - tail_trim]``; values beyond the kept range are
        shift-extrapolated from the trimmed edge, so the extrapolation
        anchor is a moderate weighted quantile rather than an extreme
        order statistic.
        """
        src = np.asarray(src, dtype=float)
        dst = np.asarray(dst, dtype=float)
        if src.size == 0 or dst.size == 0:
            raise ValidationError("transport needs nonempty samples on both scales")
        if not 0.0 <= tail_trim < 0.5:
            raise ValidationError("tail_trim must lie in [0, 0.5)")
        sw = np.ones_like(src) if src_weights is None else np.asarray(src_weights, dtype=float)
        dw = np.ones_like(dst) if dst_weights is None else np.asarray(dst_weights, dtype=float)
        keep_s = sw > 0
        keep_d = dw > 0
        if not keep_s.any() or not keep_d.any():
            raise ValidationError("transport needs positive total weight on both scales")
        sv, swc = _collapse_ties(src[keep_s], sw[keep_s])
        dv, dwc = _collapse_ties(dst[keep_d], dw[keep_d])
        sp = _midpoint_positions(swc)
        dp = _midpoint_positions(dwc)
        sv, sp = _trim_tails(sv, sp, tail_trim)
        dv, dp = _trim_tails(dv, dp, tail_trim)
        return cls(sv, sp, dv, dp)

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        p = interp_exact(y, self.src_values, self.src_pos)
        out = np.asarray(interp_exact(p, self.dst_pos, self.dst_values), dtype=float)
        lo = y < self.src_values[0]
        hi = y > self.src_values[-1]
        if np.any(lo):
            out[lo] = self.dst_values[0] + (y[lo] - self.src_values[0])
        if np.any(hi):
            out[hi] = self.dst_values[-1] + (y[hi] - self.src_values[-1])
        return out

    def out_of_range(self, y) -> np.ndarray:
        """Mask of queries beyond the source value range (shift-extrapolated)."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return (y < self.src_values[0]) | (y > self.src_values[-1])

    def inverse(self) -> "QQTransport":
        return QQTransport(self.dst_values, self.dst_pos, self.src_values, self.src_pos)
