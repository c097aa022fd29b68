"""Module for the dyadic delta-subdivision geodesic constructor and its
isometry checks."""

import logging
from typing import Any, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from snowprobe.errors import (
    DomainError,
    InputError,
    OracleViolationError,
    ResourceLimitError,
)
from snowprobe.example_spaces import (
    SpaceDescriptor,
    _as_points,
    _raw_paired,
    _raw_pairwise,
)
from snowprobe.oracles import PlacementOracle, SegmentOracle

MAX_SCHEDULE_DEPTH = 20
MAX_EXHAUSTIVE_DEPTH = 12
_ROW_BLOCK = 256


class DyadicSchedule(BaseModel):
    """Endpoints E_n of the depth n subdivision of [0, 1]: each interval
    splits into a left part of share delta and a right part of share
    1 - delta."""

    model_config = ConfigDict(frozen=True)

    delta: float = Field(..., gt=0, lt=1)
    depth: int = Field(..., ge=0, le=MAX_SCHEDULE_DEPTH)
    endpoints: List[float]

    @model_validator(mode="after")
    def check_endpoints(self) -> "DyadicSchedule":
        """2**depth + 1 endpoints, ascending, from 0 to 1."""
        if len(self.endpoints) != 2**self.depth + 1:
            raise ValueError(
                f"Depth {self.depth} needs {2**self.depth + 1} endpoints"
            )
        if self.endpoints[0] != 0.0 or self.endpoints[-1] != 1.0:
            raise ValueError("Endpoints must run from 0 to 1")
        if any(s >= t for s, t in zip(self.endpoints, self.endpoints[1:])):
            raise ValueError("Endpoints must be strictly ascending")
        return self


def _split(values: np.ndarray, delta: float) -> np.ndarray:
    """Insert s + delta (u - s) between consecutive entries."""
    out = np.empty(2 * len(values) - 1, dtype=values.dtype)
    out[0::2] = values
    out[1::2] = values[:-1] + delta * (values[1:] - values[:-1])
    return out


def build_schedule(delta: float, n: int) -> DyadicSchedule:
    """
    Endpoints of the depth n subdivision, e.g. {0, delta, 1} at n = 1.

    Parameters
    ----------
    delta : float
      In (0, 1).
    n : int
      From 0 to 20.

    Returns
    -------
    DyadicSchedule

    """
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if n < 0:
        raise InputError(f"Depth must be non-negative, got {n}")
    if n > MAX_SCHEDULE_DEPTH:
        raise ResourceLimitError(
            f"Depth {n} exceeds the supported {MAX_SCHEDULE_DEPTH}"
        )
    endpoints = np.array([0.0, 1.0])
    for _ in range(n):
        endpoints = _split(endpoints, delta)
    return DyadicSchedule(
        delta=delta, depth=n, endpoints=[float(t) for t in endpoints]
    )


class BetweenOracle(BaseModel):
    """Places z' with d(x',z') = delta d(x',y') and d(z',y') =
    (1 - delta) d(x',y')."""

    model_config = ConfigDict(frozen=True)

    delta: float = Field(..., gt=0, lt=1)
    placement: PlacementOracle

    @model_validator(mode="after")
    def check_ratios(self) -> "BetweenOracle":
        """The placement must target (delta, 1 - delta)."""
        r1, r2 = self.placement.ratios
        if abs(r1 - self.delta) > 1e-12 or abs(r2 - (1 - self.delta)) > 1e-12:
            raise ValueError(
                f"Placement ratios {(r1, r2)} do not split at {self.delta}"
            )
        return self

    @property
    def descriptor(self) -> SpaceDescriptor:
        """Space the oracle places points in."""
        return self.placement.descriptor


def linear_between_oracle(
    desc: SpaceDescriptor, delta: float, check_tol: float = 1e-10
) -> BetweenOracle:
    """
    z' = x' + delta (y' - x'). Exact on normed spaces and along one axis of
    a mixed product; on snowflakes every placement is rejected, since
    there d(x', z') = delta**eps d(x', y').

    Parameters
    ----------
    desc : SpaceDescriptor
    delta : float
    check_tol : float
      Default is 1e-10.

    Returns
    -------
    BetweenOracle

    """
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    placement = SegmentOracle(
        descriptor=desc,
        ratios=(delta, 1.0 - delta),
        t=delta,
        check_tol=check_tol,
    )
    return BetweenOracle(delta=delta, placement=placement)


class GeodesicApprox(BaseModel):
    """gamma on E_n: points[i] is gamma(schedule.endpoints[i])."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    descriptor: SpaceDescriptor
    schedule: DyadicSchedule
    points: np.ndarray
    base_distance: float = Field(..., gt=0, description="d(x, y)")

    @property
    def x(self) -> np.ndarray:
        """gamma(0)."""
        return self.points[0]

    @property
    def y(self) -> np.ndarray:
        """gamma(1)."""
        return self.points[-1]

    def at_depth(self, k: int) -> "GeodesicApprox":
        """gamma restricted to E_k for k up to the schedule depth."""
        n = self.schedule.depth
        if not 0 <= k <= n:
            raise InputError(f"Depth {k} is not in [0, {n}]")
        stride = 2 ** (n - k)
        return GeodesicApprox(
            descriptor=self.descriptor,
            schedule=DyadicSchedule(
                delta=self.schedule.delta,
                depth=k,
                endpoints=self.schedule.endpoints[::stride],
            ),
            points=self.points[::stride],
            base_distance=self.base_distance,
        )


def construct_geodesic(
    oracle: BetweenOracle, x: Any, y: Any, delta: float, n: int
) -> GeodesicApprox:
    """
    gamma(0) = x, gamma(1) = y, then at every level each interval [s, u]
    gets gamma(s + delta (u - s)) = oracle(gamma(s), gamma(u)). So
    gamma(delta) = oracle(x, y) and deeper levels never move earlier points.

    Parameters
    ----------
    oracle : BetweenOracle
    x : Any
    y : Any
      Distinct from x.
    delta : float
      Must match the oracle.
    n : int
      Depth, from 0 to 20.

    Returns
    -------
    GeodesicApprox

    Raises
    ------
    OracleViolationError
      step holds the level and the interval (s, u).

    """
    if abs(delta - oracle.delta) > 1e-12:
        raise DomainError(
            f"Oracle splits at {oracle.delta}, not at the requested {delta}"
        )
    schedule = build_schedule(delta, n)
    desc = oracle.descriptor
    ends = np.vstack([_as_points(desc, x), _as_points(desc, y)])
    base = float(_raw_paired(desc, ends[:1], ends[1:])[0])
    if not base > 0:
        raise InputError("Geodesic endpoints must be distinct")
    params = np.array([0.0, 1.0])
    points = ends
    for level in range(1, n + 1):
        try:
            middles = oracle.placement.place_checked(
                points[:-1], points[1:], step=level
            )
        except OracleViolationError as e:
            _, i = e.step
            e.step = (level, (float(params[i]), float(params[i + 1])))
            raise
        refined = np.empty(
            (2 * points.shape[0] - 1, points.shape[1]), dtype=points.dtype
        )
        refined[0::2] = points
        refined[1::2] = middles
        points = refined
        params = _split(params, delta)
    points.setflags(write=False)
    logging.debug(f"Built a depth {n} geodesic through {len(points)} points.")
    return GeodesicApprox(
        descriptor=desc, schedule=schedule, points=points, base_distance=base
    )


class IsometryDeviation(BaseModel):
    """Worst |d(gamma(s), gamma(t)) - |s - t| d(x,y)| / d(x,y) over E_n."""

    model_config = ConfigDict(frozen=True)

    max_defect: float = Field(..., ge=0)
    worst_pair: Tuple[float, float]


def isometry_defect(g: GeodesicApprox) -> IsometryDeviation:
    """
    Exhaustive pairwise defect over E_n.

    Parameters
    ----------
    g : GeodesicApprox
      Depth at most 12.

    Returns
    -------
    IsometryDeviation

    Raises
    ------
    ResourceLimitError
      For deeper schedules; restrict with g.at_depth first.

    """
    n = g.schedule.depth
    if n > MAX_EXHAUSTIVE_DEPTH:
        raise ResourceLimitError(
            f"Exhaustive checks need depth <= {MAX_EXHAUSTIVE_DEPTH}, got "
            f"{n}; check g.at_depth({MAX_EXHAUSTIVE_DEPTH}) instead"
        )
    params = np.asarray(g.schedule.endpoints)
    m = len(params)
    best, pair = 0.0, (0.0, 0.0)
    for start in range(0, m, _ROW_BLOCK):
        rows = slice(start, min(start + _ROW_BLOCK, m))
        actual = _raw_pairwise(g.descriptor, g.points[rows], g.points)
        expected = np.abs(params[rows, None] - params[None, :])
        defect = np.abs(actual / g.base_distance - expected)
        i, j = np.unravel_index(np.argmax(defect), defect.shape)
        if defect[i, j] > best:
            best = float(defect[i, j])
            pair = (float(params[start + i]), float(params[j]))
    return IsometryDeviation(max_defect=best, worst_pair=pair)


def adjacent_additivity_defect(g: GeodesicApprox) -> float:
    """
    Worst |d(gamma(s),gamma(t)) + d(gamma(t),gamma(u)) - d(gamma(s),
    gamma(u))| / d(gamma(s), gamma(u)) over every level, where [s, u] is
    an interval of E_k and t its split point in E_{k+1}.

    Parameters
    ----------
    g : GeodesicApprox

    Returns
    -------
    float
      0 for depth 0.

    """
    n = g.schedule.depth
    worst = 0.0
    for k in range(n):
        stride = 2 ** (n - k)
        half = stride // 2
        s = g.points[0:-1:stride]
        u = g.points[stride::stride]
        t = g.points[half::stride]
        whole = _raw_paired(g.descriptor, s, u)
        parts = _raw_paired(g.descriptor, s, t) + _raw_paired(
            g.descriptor, t, u
        )
        worst = max(worst, float(np.max(np.abs(parts - whole) / whole)))
    return worst


def running_defect(
    g: GeodesicApprox,
) -> List[Tuple[float, List[float], float]]:
    """
    Rows (t, gamma(t), defect so far) in ascending t, where the running
    defect at row i is the isometry defect among the first i + 1 endpoints.

    Parameters
    ----------
    g : GeodesicApprox
      Depth at most 12.

    Returns
    -------
    List[Tuple[float, List[float], float]]

    """
    n = g.schedule.depth
    if n > MAX_EXHAUSTIVE_DEPTH:
        raise ResourceLimitError(
            f"Running defects need depth <= {MAX_EXHAUSTIVE_DEPTH}, got {n}"
        )
    params = np.asarray(g.schedule.endpoints)
    rows = []
    running = 0.0
    for i in range(len(params)):
        if i > 0:
            actual = _raw_pairwise(
                g.descriptor, g.points[i : i + 1], g.points[:i]
            )
            expected = params[i] - params[:i]
            defect = np.abs(actual[0] / g.base_distance - expected)
            running = max(running, float(defect.max()))
        rows.append(
            (float(params[i]), [float(c) for c in g.points[i]], running)
        )
    return rows
