"""Module for dimension invariants: box counting, doubling constants and
the distance-surjectivity check."""

import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from snowprobe.errors import InputError
from snowprobe.metric_core import FiniteMetricSpace, PointRef
from snowprobe.utils import make_rng, parallel_map

DEFAULT_SCALE_COUNT = 8
DIMENSION_REL_BAND = 0.15


class BoxCountRecord(BaseModel):
    """Greedy r-net size N(r)."""

    model_config = ConfigDict(frozen=True)

    scale: float = Field(..., gt=0)
    count: int = Field(..., ge=0)


class DimensionEstimate(BaseModel):
    """Least-squares slope of log N(r) against log(1/r)."""

    model_config = ConfigDict(frozen=True)

    slope: float = Field(..., ge=0)
    residual: float = Field(..., ge=0, description="RMS of the fit")
    records: List[BoxCountRecord]


class DoublingEstimate(BaseModel):
    """Largest greedy cover of a sampled r-ball by r/2-balls."""

    model_config = ConfigDict(frozen=True)

    c_hat: int = Field(..., ge=0)
    radii: List[float]
    centers_tested: int
    worst: Optional[Tuple[int, float]] = Field(
        default=None, description="(center, radius) of the largest cover"
    )


class SphereSurjectivity(BaseModel):
    """Per radius r, the smallest |d(x0, x) - r| over the sample."""

    model_config = ConfigDict(frozen=True)

    center: int
    rows: List[Tuple[float, float]]
    gap_tol: float
    surjective: bool = Field(
        ..., description="Every gap is at most gap_tol"
    )


def resolution(space: FiniteMetricSpace) -> float:
    """Largest nearest-neighbour distance; 0 for fewer than two points."""
    if space.n < 2:
        return 0.0
    dist = space.dist.copy()
    np.fill_diagonal(dist, np.inf)
    return float(dist.min(axis=1).max())


def default_scales(space: FiniteMetricSpace) -> List[float]:
    """
    8 logarithmically spaced scales in [diam/64, diam/4], raised to start
    at the sample resolution. Below the resolution every point becomes its
    own net center and N(r) stops growing. When the resolution is close to
    diam/4 the window is [resolution, 2 resolution], capped at diam/2.

    Parameters
    ----------
    space : FiniteMetricSpace

    Returns
    -------
    List[float]

    """
    diam = space.diameter()
    if not diam > 0:
        raise InputError("Default scales need a space with positive diameter")
    low = min(max(diam / 64, resolution(space)), diam / 4)
    high = min(max(diam / 4, 2 * low), diam / 2)
    return [float(r) for r in np.geomspace(low, high, DEFAULT_SCALE_COUNT)]


def _net_size(dist: np.ndarray, r: float) -> int:
    """Greedy r-net: walk points in index order, each uncovered point
    becomes a center covering its closed r-ball."""
    n = dist.shape[0]
    covered = np.zeros(n, dtype=bool)
    count = 0
    for i in range(n):
        if not covered[i]:
            count += 1
            covered |= dist[i] <= r
    return count


def box_dimension(
    space: FiniteMetricSpace,
    scales: Optional[Sequence[float]] = None,
    threads: int = 1,
) -> DimensionEstimate:
    """
    Box-counting dimension from greedy r-nets.

    Parameters
    ----------
    space : FiniteMetricSpace
    scales : Optional[Sequence[float]]
      At least 3 positive scales spanning a factor of 10. Default is
      default_scales(space), which may span less on sparse samples.
    threads : int
      Default is 1.

    Returns
    -------
    DimensionEstimate
      The slope is clipped at 0.

    """
    span_checked = scales is not None
    if scales is None:
        scales = default_scales(space)
    scales = sorted(float(r) for r in scales)
    if len(scales) < 3:
        raise InputError(f"Need at least 3 scales, got {len(scales)}")
    if scales[0] <= 0 or any(not math.isfinite(r) for r in scales):
        raise InputError("Scales must be positive and finite")
    if len(set(scales)) != len(scales):
        raise InputError("Scales must be distinct")
    if span_checked and scales[-1] < 10 * scales[0]:
        raise InputError(
            f"Scales must span a decade, got [{scales[0]}, {scales[-1]}]"
        )
    counts = parallel_map(lambda r: _net_size(space.dist, r), scales, threads)
    records = [
        BoxCountRecord(scale=r, count=c) for r, c in zip(scales, counts)
    ]
    if space.n == 0:
        return DimensionEstimate(slope=0.0, residual=0.0, records=records)
    x = np.log(1.0 / np.asarray(scales))
    y = np.log(np.asarray(counts, dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    logging.debug(f"Box counts {counts} give slope {slope:.4f}.")
    return DimensionEstimate(
        slope=max(0.0, float(slope)), residual=residual, records=records
    )


def _cover_size(dist: np.ndarray, center: int, r: float) -> int:
    """Greedy cover of the closed r-ball around center by r/2-balls
    centered at points of the ball. Each round takes the uncovered point
    farthest from center and, among ball points within r/2 of it, the one
    covering most uncovered points; ties go to the lowest index."""
    ball = np.nonzero(dist[center] <= r)[0]
    sub = dist[np.ix_(ball, ball)] <= r / 2
    radial = dist[center, ball]
    uncovered = np.ones(len(ball), dtype=bool)
    count = 0
    while uncovered.any():
        far = np.where(uncovered, radial, -np.inf)
        p = int(np.argmax(far))
        candidates = np.nonzero(sub[p])[0]
        gains = sub[np.ix_(candidates, uncovered.nonzero()[0])].sum(axis=1)
        q = int(candidates[np.argmax(gains)])
        uncovered &= ~sub[q]
        count += 1
    return count


def doubling_constant(
    space: FiniteMetricSpace,
    radii: Sequence[float],
    center_budget: int = 64,
    seed: int = 0,
    threads: int = 1,
) -> DoublingEstimate:
    """
    Empirical doubling constant, a lower bound for the true one. Centers
    are restricted to sample points, so in a 2-point space the whole
    space is one r/2-ball only once r >= 2 d(a, b).

    Parameters
    ----------
    space : FiniteMetricSpace
    radii : Sequence[float]
      Positive.
    center_budget : int
      Ball centers tested; all points when there are fewer. Default is 64.
    seed : int
      Seed for choosing centers. Default is 0.
    threads : int
      Default is 1.

    Returns
    -------
    DoublingEstimate

    """
    radii = [float(r) for r in radii]
    if not radii or any(not r > 0 for r in radii):
        raise InputError("Radii must be a non-empty list of positive values")
    n = space.n
    if n <= center_budget:
        centers = np.arange(n)
    else:
        rng = make_rng(seed)
        centers = np.sort(rng.choice(n, size=center_budget, replace=False))
    jobs = [(int(c), r) for c in centers for r in radii]
    sizes = parallel_map(
        lambda job: _cover_size(space.dist, job[0], job[1]), jobs, threads
    )
    if not sizes:
        return DoublingEstimate(
            c_hat=0, radii=radii, centers_tested=0, worst=None
        )
    k = int(np.argmax(sizes))
    return DoublingEstimate(
        c_hat=int(sizes[k]),
        radii=radii,
        centers_tested=len(centers),
        worst=jobs[k],
    )


def auto_radii(
    space: FiniteMetricSpace, x0: PointRef, count: int
) -> List[float]:
    """count evenly spaced radii from 0 to max d(x0, .)."""
    if count < 1:
        raise InputError(f"Need at least one radius, got {count}")
    reach = float(space.dist[space.index_of(x0)].max())
    if count == 1:
        return [0.0]
    return [float(r) for r in np.linspace(0.0, reach, count)]


def sphere_surjectivity(
    space: FiniteMetricSpace,
    x0: PointRef,
    radii: Sequence[float],
    gap_tol: float,
) -> SphereSurjectivity:
    """
    How close the distance map x -> d(x0, x) comes to every radius.

    Parameters
    ----------
    space : FiniteMetricSpace
    x0 : PointRef
    radii : Sequence[float]
      Within [0, max d(x0, .)].
    gap_tol : float

    Returns
    -------
    SphereSurjectivity

    """
    center = space.index_of(x0)
    values = space.dist[center]
    reach = float(values.max())
    radii = [float(r) for r in radii]
    for r in radii:
        if not 0 <= r <= reach:
            raise InputError(f"Radius {r} is outside [0, {reach}]")
    rows = [(r, float(np.min(np.abs(values - r)))) for r in radii]
    surjective = all(gap <= gap_tol for _, gap in rows)
    return SphereSurjectivity(
        center=center, rows=rows, gap_tol=gap_tol, surjective=surjective
    )


def dimension_bound_holds(
    p_star: float,
    estimate: DimensionEstimate,
    rel_band: float = DIMENSION_REL_BAND,
) -> bool:
    """
    p_star <= D with D the box-dimension slope widened by rel_band and
    inflated by its residual. Sampled slopes sit below the true dimension
    at the sample resolution and near the diameter, by up to rel_band.

    Parameters
    ----------
    p_star : float
    estimate : DimensionEstimate
    rel_band : float
      Relative accuracy of the slope. Default is 0.15.

    Returns
    -------
    bool
      Always False for p_star = inf.

    """
    return p_star <= estimate.slope * (1 + rel_band) + estimate.residual
