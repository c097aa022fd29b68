"""Module for between-points, lens-shaped sets and uniform non-convexity."""

import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from snowprobe.errors import InputError
from snowprobe.metric_core import FiniteMetricSpace, PointId, PointRef
from snowprobe.utils import make_rng, parallel_map

DEFAULT_DELTAS = tuple(round(0.01 * k, 2) for k in range(1, 50))
DEFAULT_LAMBDAS = tuple(k / 100 for k in range(1, 100))
EXACT_TOL = 1e-9


class BetweennessCertificate(BaseModel):
    """Evidence that z lies between x and y."""

    model_config = ConfigDict(frozen=True)

    triple: Tuple[int, int, int] = Field(..., description="(x, z, y)")
    defect: float = Field(..., description="d(x,z) + d(z,y) - d(x,y)")
    exact: bool = Field(..., description="defect <= 1e-9 * d(x,y)")


class LensQuery(BaseModel):
    """Parameters of the lens L(x, y; lam, delta)."""

    model_config = ConfigDict(frozen=True)

    x: int = Field(..., ge=0)
    y: int = Field(..., ge=0)
    lam: float = Field(..., gt=0, lt=1)
    delta: float = Field(..., gt=0)


class PairVerdict(BaseModel):
    """An empty lens found for one pair."""

    model_config = ConfigDict(frozen=True)

    pair: Tuple[int, int]
    lam: float
    margin: float = Field(
        ..., gt=0, description="Room left before a point enters the lens"
    )


class NonConvexityCertificate(BaseModel):
    """Every tested pair has an empty lens at delta."""

    model_config = ConfigDict(frozen=True)

    delta: float
    entries: List[PairVerdict]
    pairs_tested: int
    sampled: bool = Field(
        ..., description="True when pairs were subsampled with the seed"
    )
    seed: int
    refuted_deltas: List[float] = Field(default_factory=list)


class NonConvexityRefutation(BaseModel):
    """A pair whose lenses are all non-empty at delta."""

    model_config = ConfigDict(frozen=True)

    delta: float
    pair: Tuple[int, int]
    lambdas: List[float]
    witnesses: List[int] = Field(
        ..., description="A lens member for each lambda"
    )
    pairs_tested: int
    sampled: bool
    seed: int
    refuted_deltas: List[float] = Field(default_factory=list)


def _scan_between(
    space: FiniteMetricSpace,
    rel_tol: float,
    limit: Optional[int],
    threads: int,
) -> Tuple[int, np.ndarray, np.ndarray]:
    """Count approximate between-triples and keep the best ones. Returns
    (count, triples as an (m, 3) array of (x, z, y), defects)."""
    dist = space.dist
    n = space.n
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)

    def scan(z: int) -> Tuple[np.ndarray, np.ndarray]:
        """Triples with middle point z."""
        defect = dist[:, z][:, None] + dist[z, :][None, :] - dist
        mask = upper & (defect <= rel_tol * dist)
        mask[z, :] = False
        mask[:, z] = False
        xs, ys = np.nonzero(mask)
        triples = np.stack([xs, np.full(xs.shape, z), ys], axis=1)
        return triples, defect[xs, ys]

    count = 0
    kept_triples = np.zeros((0, 3), dtype=np.int64)
    kept_defects = np.zeros(0)
    for triples, defects in parallel_map(scan, range(n), threads):
        count += len(defects)
        kept_triples = np.concatenate([kept_triples, triples])
        kept_defects = np.concatenate([kept_defects, defects])
        if limit is not None and len(kept_defects) > limit:
            order = np.lexsort(
                (
                    kept_triples[:, 2],
                    kept_triples[:, 1],
                    kept_triples[:, 0],
                    kept_defects,
                )
            )[:limit]
            kept_triples = kept_triples[order]
            kept_defects = kept_defects[order]
    order = np.lexsort(
        (
            kept_triples[:, 2],
            kept_triples[:, 1],
            kept_triples[:, 0],
            kept_defects,
        )
    )
    return count, kept_triples[order], kept_defects[order]


def find_between_points(
    space: FiniteMetricSpace,
    rel_tol: float = 1e-9,
    limit: Optional[int] = None,
    threads: int = 1,
) -> List[BetweennessCertificate]:
    """
    All triples (x, z, y), z not in {x, y}, with
    d(x,z) + d(z,y) - d(x,y) <= rel_tol * d(x,y).

    Parameters
    ----------
    space : FiniteMetricSpace
      A validated metric.
    rel_tol : float
      Default is 1e-9.
    limit : Optional[int]
      Keep only the limit smallest defects. Default is None (all).
    threads : int
      Default is 1.

    Returns
    -------
    List[BetweennessCertificate]
      Sorted by defect ascending, then by triple. exact is judged at
      EXACT_TOL, not at rel_tol, so a loose search still tells exact
      between-points from approximate ones.

    """
    _, triples, defects = _scan_between(space, rel_tol, limit, threads)
    return [
        BetweennessCertificate(
            triple=(int(t[0]), int(t[1]), int(t[2])),
            defect=float(d),
            exact=bool(d <= EXACT_TOL * space.dist[t[0], t[2]]),
        )
        for t, d in zip(triples, defects)
    ]


def count_between_points(
    space: FiniteMetricSpace, rel_tol: float = 1e-9, threads: int = 1
) -> int:
    """Number of triples find_between_points would return."""
    count, _, _ = _scan_between(space, rel_tol, 0, threads)
    return count


def between_delta(
    space: FiniteMetricSpace, certificate: BetweennessCertificate
) -> float:
    """delta = d(x,z) / d(x,y), the split ratio a geodesic through the
    certificate uses."""
    x, z, y = certificate.triple
    return float(space.dist[x, z] / space.dist[x, y])


def _lens_slack(
    space: FiniteMetricSpace, x: int, y: int, lams: np.ndarray
) -> np.ndarray:
    """slack[l, z] = max(d(x,z)/d(x,y) - lam, d(z,y)/d(x,y) - (1 - lam));
    z is in L(x, y; lam, delta) iff slack <= delta."""
    d_xy = space.dist[x, y]
    to_x = space.dist[x] / d_xy
    to_y = space.dist[:, y] / d_xy
    return np.maximum(
        to_x[None, :] - lams[:, None], to_y[None, :] - (1.0 - lams[:, None])
    )


def _check_pair(space: FiniteMetricSpace, x: PointRef, y: PointRef):
    """Resolve a pair of distinct points."""
    ix, iy = space.index_of(x), space.index_of(y)
    if ix == iy:
        raise InputError(f"Lens pair needs distinct points, got {ix} twice")
    return ix, iy


def lens_members(space: FiniteMetricSpace, q: LensQuery) -> List[PointId]:
    """
    Points of the closed lens B(x, (lam + delta) d(x,y)) intersected with
    B(y, (1 - lam + delta) d(x,y)). x and y belong to it when the radius
    inequalities hold for them.

    Parameters
    ----------
    space : FiniteMetricSpace
    q : LensQuery

    Returns
    -------
    List[PointId]

    """
    x, y = _check_pair(space, q.x, q.y)
    slack = _lens_slack(space, x, y, np.array([q.lam]))[0]
    return [space.point(int(z)) for z in np.nonzero(slack <= q.delta)[0]]


def midpoint_defect(
    space: FiniteMetricSpace, x: PointRef, y: PointRef
) -> float:
    """
    min over z not in {x, y} of max(d(x,z), d(z,y)) / d(x,y) - 1/2. At most
    delta exactly when the lam = 1/2 lens with margin delta is non-empty.

    Parameters
    ----------
    space : FiniteMetricSpace
    x : PointRef
    y : PointRef

    Returns
    -------
    float
      +inf for spaces with fewer than 3 points.

    """
    ix, iy = _check_pair(space, x, y)
    if space.n < 3:
        return math.inf
    slack = _lens_slack(space, ix, iy, np.array([0.5]))[0]
    others = np.ones(space.n, dtype=bool)
    others[[ix, iy]] = False
    return float(slack[others].min())


def _select_pairs(
    n: int, pair_budget: int, seed: int
) -> Tuple[np.ndarray, bool]:
    """All pairs i < j, or pair_budget of them drawn with the seed."""
    xs, ys = np.triu_indices(n, k=1)
    if len(xs) <= pair_budget:
        return np.stack([xs, ys], axis=1), False
    rng = make_rng(seed)
    chosen = np.sort(rng.choice(len(xs), size=pair_budget, replace=False))
    return np.stack([xs[chosen], ys[chosen]], axis=1), True


def uniform_nonconvexity(
    space: FiniteMetricSpace,
    delta_grid: Optional[Sequence[float]] = None,
    lambda_grid: Optional[Sequence[float]] = None,
    pair_budget: int = 2000,
    seed: int = 0,
    threads: int = 1,
) -> Union[NonConvexityCertificate, NonConvexityRefutation]:
    """
    Look for the largest delta in the grid such that every tested pair has
    some lam in (delta, 1 - delta) with an empty lens.

    Parameters
    ----------
    space : FiniteMetricSpace
    delta_grid : Optional[Sequence[float]]
      Values in (0, 1/2). Default is 0.01, 0.02, ..., 0.49.
    lambda_grid : Optional[Sequence[float]]
      Values in (0, 1), filtered per delta. Default is 99 even points.
    pair_budget : int
      Pairs tested; all pairs when there are fewer. Default is 2000.
    seed : int
      Seed for pair sampling. Default is 0.
    threads : int
      Default is 1.

    Returns
    -------
    Union[NonConvexityCertificate, NonConvexityRefutation]
      The certificate for the largest certified delta, or the refutation
      for the largest delta attempted when none is certified.

    """
    deltas = sorted(
        set(DEFAULT_DELTAS if delta_grid is None else delta_grid),
        reverse=True,
    )
    lams = np.array(
        sorted(set(DEFAULT_LAMBDAS if lambda_grid is None else lambda_grid))
    )
    if len(deltas) == 0 or len(lams) == 0:
        raise InputError("Delta and lambda grids must be non-empty")
    if any(not 0 < d < 0.5 for d in deltas):
        raise InputError("Delta values must lie in (0, 1/2)")
    if np.any((lams <= 0) | (lams >= 1)):
        raise InputError("Lambda values must lie in (0, 1)")
    if space.n < 2:
        return NonConvexityCertificate(
            delta=deltas[0],
            entries=[],
            pairs_tested=0,
            sampled=False,
            seed=seed,
        )

    pairs, sampled = _select_pairs(space.n, pair_budget, seed)

    def empty_margins(pair: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Per lam: smallest slack, and the point attaining it."""
        slack = _lens_slack(space, int(pair[0]), int(pair[1]), lams)
        return slack.min(axis=1), slack.argmin(axis=1)

    results = parallel_map(empty_margins, pairs, threads)
    margins = np.stack([r[0] for r in results])
    members = np.stack([r[1] for r in results])

    refuted: List[float] = []
    first_refutation = None
    for delta in deltas:
        admissible = (lams > delta) & (lams < 1.0 - delta)
        if not admissible.any():
            logging.warning(f"No lambda in ({delta}, {1 - delta}); skipped.")
            continue
        usable = np.where(admissible[None, :], margins, -np.inf)
        empty = usable > delta
        certified = empty.any(axis=1)
        if certified.all():
            best = np.argmax(usable, axis=1)
            entries = [
                PairVerdict(
                    pair=(int(p[0]), int(p[1])),
                    lam=float(lams[k]),
                    margin=float(usable[i, k] - delta),
                )
                for i, (p, k) in enumerate(zip(pairs, best))
            ]
            logging.info(f"Certified uniform non-convexity at {delta}.")
            return NonConvexityCertificate(
                delta=delta,
                entries=entries,
                pairs_tested=len(pairs),
                sampled=sampled,
                seed=seed,
                refuted_deltas=refuted,
            )
        refuted.append(delta)
        if first_refutation is None:
            i = int(np.argmin(certified))
            first_refutation = dict(
                delta=delta,
                pair=(int(pairs[i][0]), int(pairs[i][1])),
                lambdas=[float(v) for v in lams[admissible]],
                witnesses=[int(w) for w in members[i][admissible]],
            )
    if first_refutation is None:
        raise InputError("No delta in the grid admits a lambda")
    return NonConvexityRefutation(
        **first_refutation,
        pairs_tested=len(pairs),
        sampled=sampled,
        seed=seed,
        refuted_deltas=refuted,
    )


def is_ultrametric(space: FiniteMetricSpace, rel_tol: float = 1e-9) -> bool:
    """True iff d(x,z) <= max(d(x,y), d(y,z)) * (1 + rel_tol) for every
    triple."""
    dist = space.dist
    for y in range(space.n):
        bound = np.maximum(dist[:, y][:, None], dist[y, :][None, :])
        if np.any(dist > bound * (1.0 + rel_tol)):
            return False
    return True
