"""Module for chain refinement, p-lengths of chains and empirical
quasi-triangle constants."""

import logging
from typing import Any, List

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationInfo,
    field_validator,
    model_validator,
)

from snowprobe.errors import DomainError, InputError, ResourceLimitError
from snowprobe.example_spaces import (
    SampleSet,
    SpaceDescriptor,
    _as_points,
    _raw_paired,
)
from snowprobe.metric_core import FiniteMetricSpace
from snowprobe.oracles import (
    FiniteSpaceOracle,
    PlacementOracle,
    SegmentOracle,
)
from snowprobe.utils import make_rng

MAX_DEPTH = 20


class Chain(BaseModel):
    """Points x_0, ..., x_m of a descriptor space, stored by coordinates."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    descriptor: SpaceDescriptor
    points: np.ndarray = Field(..., description="Shape (m + 1, dimension)")

    @field_validator("points", mode="before")
    @classmethod
    def coerce_points(cls, value: Any, info: ValidationInfo) -> np.ndarray:
        """Points become a read-only array valid for the descriptor."""
        desc = info.data.get("descriptor")
        if desc is None:
            return value
        points = _as_points(desc, value).copy()
        points.setflags(write=False)
        return points

    @model_validator(mode="after")
    def check_consecutive_distinct(self) -> "Chain":
        """A chain has at least one segment and no repeated neighbours."""
        points = self.points
        if points.shape[0] < 2:
            raise ValueError("A chain needs at least two points")
        legs = _raw_paired(self.descriptor, points[:-1], points[1:])
        if np.any(legs <= 0):
            raise ValueError("Consecutive chain points must be distinct")
        return self

    @property
    def segments(self) -> int:
        """Number of segments m."""
        return int(self.points.shape[0]) - 1

    def legs(self) -> np.ndarray:
        """Segment lengths d(x_i, x_{i-1})."""
        points = self.points
        return _raw_paired(self.descriptor, points[:-1], points[1:])


class SubdivisionOracle(BaseModel):
    """A base triple (a, z, b) together with a placement rule reproducing
    its distance ratios between any two points."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    a: np.ndarray
    z: np.ndarray
    b: np.ndarray
    placement: PlacementOracle

    @model_validator(mode="after")
    def check_ratios(self) -> "SubdivisionOracle":
        """The placement ratios must be those of the base triple."""
        desc = self.placement.descriptor
        a, z, b = (_as_points(desc, p) for p in (self.a, self.z, self.b))
        d_ab = _raw_paired(desc, a, b)[0]
        if not d_ab > 0:
            raise ValueError("Base points a and b must be distinct")
        ratios = (
            _raw_paired(desc, a, z)[0] / d_ab,
            _raw_paired(desc, z, b)[0] / d_ab,
        )
        if not np.allclose(
            ratios, self.placement.ratios, rtol=0, atol=1e-12
        ):
            raise ValueError(
                f"Placement ratios {self.placement.ratios} differ from the "
                f"base triple's {ratios}"
            )
        return self

    @property
    def descriptor(self) -> SpaceDescriptor:
        """Space the oracle places points in."""
        return self.placement.descriptor

    def base_chain(self) -> Chain:
        """The depth 0 chain (a, z, b)."""
        return Chain(
            descriptor=self.descriptor,
            points=np.stack([self.a, self.z, self.b]),
        )

    def base_distances(self):
        """(d(a,b), d(a,z), d(z,b))."""
        desc = self.descriptor
        a, z, b = (_as_points(desc, p) for p in (self.a, self.z, self.b))
        return (
            float(_raw_paired(desc, a, b)[0]),
            float(_raw_paired(desc, a, z)[0]),
            float(_raw_paired(desc, z, b)[0]),
        )


def segment_oracle(
    desc: SpaceDescriptor, a: Any, b: Any, t: float
) -> SubdivisionOracle:
    """
    The analytic subdivision oracle on the straight segment from a to b:
    z = a + t (b - a), and every placement uses the same parameter t. The
    ratios hold exactly on normed spaces and their snowflakes, and along a
    single axis of a mixed product.

    Parameters
    ----------
    desc : SpaceDescriptor
    a : Any
    b : Any
    t : float
      Euclidean parameter in (0, 1).

    Returns
    -------
    SubdivisionOracle

    """
    if not 0 < t < 1:
        raise DomainError(f"Segment parameter must lie in (0, 1), got {t}")
    a, b = _as_points(desc, a), _as_points(desc, b)
    z = a + t * (b - a)
    d_ab = _raw_paired(desc, a, b)[0]
    if not d_ab > 0:
        raise InputError("Segment endpoints must be distinct")
    ratios = (
        float(_raw_paired(desc, a, z)[0] / d_ab),
        float(_raw_paired(desc, z, b)[0] / d_ab),
    )
    placement = SegmentOracle(descriptor=desc, ratios=ratios, t=t)
    return SubdivisionOracle(a=a[0], z=z[0], b=b[0], placement=placement)


def search_oracle(
    samples: SampleSet, a: int, z: int, b: int, check_tol: float = 1e-10
) -> SubdivisionOracle:
    """
    Subdivision oracle for a finite sample: placements pick the sample
    point that best matches the ratios of (a, z, b).

    Parameters
    ----------
    samples : SampleSet
    a : int
    z : int
    b : int
      Row indices of the base triple in samples.
    check_tol : float
      Residual accepted per placement. Default is 1e-10.

    Returns
    -------
    SubdivisionOracle

    """
    desc = samples.descriptor
    pa, pz, pb = (samples.points[i : i + 1] for i in (a, z, b))
    d_ab = _raw_paired(desc, pa, pb)[0]
    if not d_ab > 0:
        raise InputError("Base points a and b must be distinct")
    ratios = (
        float(_raw_paired(desc, pa, pz)[0] / d_ab),
        float(_raw_paired(desc, pz, pb)[0] / d_ab),
    )
    placement = FiniteSpaceOracle(
        descriptor=desc,
        ratios=ratios,
        check_tol=check_tol,
        candidates=samples,
    )
    return SubdivisionOracle(a=pa[0], z=pz[0], b=pb[0], placement=placement)


def _refine_once(
    oracle: SubdivisionOracle, points: np.ndarray, depth: int
) -> np.ndarray:
    """Keep the old points at even positions and place new ones at odd
    positions between their neighbours."""
    middles = oracle.placement.place_checked(
        points[:-1], points[1:], step=depth
    )
    refined = np.empty(
        (2 * points.shape[0] - 1, points.shape[1]), dtype=points.dtype
    )
    refined[0::2] = points
    refined[1::2] = middles
    return refined


def _check_depth(k: int) -> None:
    """Depths run from 0 to MAX_DEPTH."""
    if k < 0:
        raise InputError(f"Depth must be non-negative, got {k}")
    if k > MAX_DEPTH:
        raise ResourceLimitError(
            f"Depth {k} builds 2**{k + 1} segments; at most {MAX_DEPTH} "
            f"is supported"
        )


def refine_chain(oracle: SubdivisionOracle, k: int) -> Chain:
    """
    The depth k chain from a to b, with 2**(k + 1) segments.

    Parameters
    ----------
    oracle : SubdivisionOracle
    k : int

    Returns
    -------
    Chain

    Raises
    ------
    OracleViolationError
      When a placement misses its equations; step holds the depth.

    """
    _check_depth(k)
    points = oracle.base_chain().points
    for depth in range(1, k + 1):
        points = _refine_once(oracle, points, depth)
    return Chain(descriptor=oracle.descriptor, points=points)


def p_length(chain: Chain, p: float) -> float:
    """Sum over segments of d(x_i, x_{i-1})**p."""
    if not p > 0:
        raise DomainError(f"p must be positive, got {p}")
    return float(np.sum(np.power(chain.legs(), p)))


def chain_ratio(chain: Chain, p: float) -> float:
    """d(x_0, x_m)**p / sum of d(x_i, x_{i-1})**p for a single chain."""
    ends = _raw_paired(chain.descriptor, chain.points[:1], chain.points[-1:])
    return float(ends[0] ** p) / p_length(chain, p)


class ChainDecayRow(BaseModel):
    """p-length of the depth k chain against c**(k + 1)."""

    model_config = ConfigDict(frozen=True)

    depth: int
    segments: int
    p_length: float
    predicted: float
    relative_error: float


def chain_decay(
    oracle: SubdivisionOracle, p: float, k_max: int
) -> List[ChainDecayRow]:
    """
    p-lengths of the chains of depth 0 to k_max, with
    c = d(a,z)**p + d(z,b)**p. Lengths are divided by d(a,b)**p so the
    prediction is c**(k + 1) for any base scale.

    Parameters
    ----------
    oracle : SubdivisionOracle
    p : float
    k_max : int

    Returns
    -------
    List[ChainDecayRow]

    """
    if not p > 0:
        raise DomainError(f"p must be positive, got {p}")
    _check_depth(k_max)
    d_ab, d_az, d_zb = oracle.base_distances()
    c = (d_az / d_ab) ** p + (d_zb / d_ab) ** p
    rows = []
    chain = oracle.base_chain()
    points = chain.points
    for depth in range(0, k_max + 1):
        if depth > 0:
            points = _refine_once(oracle, points, depth)
            chain = Chain(descriptor=oracle.descriptor, points=points)
        length = p_length(chain, p) / d_ab**p
        predicted = c ** (depth + 1)
        rows.append(
            ChainDecayRow(
                depth=depth,
                segments=chain.segments,
                p_length=length,
                predicted=predicted,
                relative_error=abs(length - predicted) / predicted,
            )
        )
    return rows


def verify_recursion(
    oracle: SubdivisionOracle, p: float, k_max: int
) -> float:
    """
    Worst relative deviation between chain p-lengths and c**(k + 1) over
    depths 0 to k_max.

    Parameters
    ----------
    oracle : SubdivisionOracle
    p : float
    k_max : int

    Returns
    -------
    float

    """
    rows = chain_decay(oracle, p, k_max)
    worst = max(row.relative_error for row in rows)
    logging.info(f"Chain recursion holds to {worst:.3g} up to depth {k_max}.")
    return worst


class QuasiTriangleEstimate(BaseModel):
    """Largest d(x_0,x_m)**p / sum d(x_i,x_{i-1})**p seen over sampled
    chains: a lower bound for the quasi-triangle constant L at p."""

    model_config = ConfigDict(frozen=True)

    p: float
    l_hat: float = Field(..., ge=0)
    witness: List[int] = Field(..., description="Point indices of the chain")
    chains_tested: int
    seed: int


def estimate_quasi_triangle(
    space: FiniteMetricSpace,
    p: float,
    chain_budget: int = 2000,
    max_len: int = 8,
    seed: int = 0,
) -> QuasiTriangleEstimate:
    """
    Sample random chains and keep the worst ratio. Chain lengths are
    uniform in 1 to max_len segments; points are uniform with consecutive
    points distinct. Ties keep the first chain drawn.

    Parameters
    ----------
    space : FiniteMetricSpace
      At least 2 points.
    p : float
    chain_budget : int
      Number of chains. Default is 2000.
    max_len : int
      Longest chain in segments. Default is 8.
    seed : int
      Default is 0.

    Returns
    -------
    QuasiTriangleEstimate

    """
    if not p > 0:
        raise DomainError(f"p must be positive, got {p}")
    if chain_budget < 1 or max_len < 1:
        raise InputError("chain_budget and max_len must be at least 1")
    n = space.n
    if n < 2:
        raise InputError("Chains need a space with at least 2 points")
    rng = make_rng(seed)
    powered = np.power(space.dist, p)
    best, witness = -1.0, []
    for _ in range(chain_budget):
        m = int(rng.integers(1, max_len + 1))
        steps = rng.integers(1, n, size=m)
        start = int(rng.integers(0, n))
        indices = (start + np.concatenate([[0], np.cumsum(steps)])) % n
        total = powered[indices[:-1], indices[1:]].sum()
        ratio = float(powered[indices[0], indices[-1]] / total)
        if ratio > best:
            best, witness = ratio, [int(i) for i in indices]
    return QuasiTriangleEstimate(
        p=p,
        l_hat=best,
        witness=witness,
        chains_tested=chain_budget,
        seed=seed,
    )
