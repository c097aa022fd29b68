"""Module for finite metric spaces, the power (snowflake) transform and
metric axiom validation."""

import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from snowprobe.errors import DomainError, InputError
from snowprobe.utils import parallel_map


class PointId(BaseModel):
    """Reference to a point of a finite metric space."""

    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=0, description="Dense index 0..n-1")
    label: Optional[str] = Field(default=None)


PointRef = Union[int, PointId]


def _check_matrix(matrix: Any) -> np.ndarray:
    """Coerce matrix to a read-only float64 square array with zero
    diagonal, or raise InputError."""
    try:
        array = np.array(matrix, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InputError(f"Distance matrix is not numeric: {e}")
    if array.size == 0:
        array = array.reshape(0, 0)
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise InputError(
            f"Distance matrix must be square, got shape {array.shape}"
        )
    if not np.all(np.isfinite(array)):
        raise InputError("Distance matrix contains NaN or infinite values")
    if np.any(np.diag(array) != 0):
        raise InputError("Distance matrix has a non-zero diagonal")
    array.setflags(write=False)
    return array


class FiniteMetricSpace(BaseModel):
    """Labeled point set with a full n x n distance matrix. Immutable."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dist: np.ndarray = Field(..., description="Row-major distance matrix")
    labels: Optional[List[str]] = Field(default=None)

    @field_validator("dist", mode="before")
    @classmethod
    def coerce_matrix(cls, value: Any) -> np.ndarray:
        """Store distances as a read-only float64 square matrix."""
        return _check_matrix(value)

    @field_validator("labels")
    @classmethod
    def check_labels(cls, value: Optional[List[str]]):
        """Labels must be unique when present."""
        if value is not None and len(set(value)) != len(value):
            raise ValueError("Point labels must be unique")
        return value

    @classmethod
    def from_matrix(
        cls, matrix: Any, labels: Optional[Sequence[str]] = None
    ) -> "FiniteMetricSpace":
        """
        Construct a space, raising InputError on malformed input instead of
        a pydantic ValidationError.

        Parameters
        ----------
        matrix : Any
          Nested sequences or an array of shape (n, n).
        labels : Optional[Sequence[str]]
          One unique label per point. Default is None.

        Returns
        -------
        FiniteMetricSpace

        """
        array = _check_matrix(matrix)
        if labels is not None:
            labels = [str(label) for label in labels]
            if len(labels) != array.shape[0]:
                raise InputError(
                    f"Got {len(labels)} labels for {array.shape[0]} points"
                )
            if len(set(labels)) != len(labels):
                raise InputError("Point labels must be unique")
        return cls(dist=array, labels=labels)

    @property
    def n(self) -> int:
        """Number of points."""
        return int(self.dist.shape[0])

    def point(self, index: int) -> PointId:
        """PointId for an index."""
        label = None if self.labels is None else self.labels[index]
        return PointId(index=index, label=label)

    def point_ids(self) -> List[PointId]:
        """All points in index order."""
        return [self.point(i) for i in range(self.n)]

    def index_of(self, ref: PointRef) -> int:
        """
        Resolve a point reference to an index in range.

        Parameters
        ----------
        ref : PointRef
          An int index or a PointId.

        Returns
        -------
        int

        """
        index = ref.index if isinstance(ref, PointId) else int(ref)
        if not 0 <= index < self.n:
            raise InputError(f"Point index {index} out of range 0..{self.n}")
        return index

    def scaled(self, factor: float) -> "FiniteMetricSpace":
        """Same points with every distance multiplied by factor > 0."""
        if factor <= 0:
            raise DomainError(f"Scale factor must be positive, got {factor}")
        return FiniteMetricSpace(dist=self.dist * factor, labels=self.labels)

    def diameter(self) -> float:
        """Largest distance, 0 for fewer than two points."""
        return float(self.dist.max()) if self.n > 0 else 0.0


class ViolationKind(str, Enum):
    """Kinds of metric axiom violations."""

    ASYMMETRY = "asymmetry"
    NEGATIVE = "negative"
    ZERO_OFF_DIAGONAL = "zero-off-diagonal"
    TRIANGLE = "triangle"


class ViolationReport(BaseModel):
    """A violated axiom with its worst witness."""

    model_config = ConfigDict(frozen=True)

    kind: ViolationKind
    witness: Tuple[int, ...] = Field(
        ...,
        description=(
            "Point pair, or (x, z, y) for the triangle d(x,y) <= "
            "d(x,z) + d(z,y)"
        ),
    )
    defect: float = Field(..., gt=0)


class PowerTransform(BaseModel):
    """Entrywise power d -> d**p. With p < 1 this is a snowflake."""

    model_config = ConfigDict(frozen=True)

    exponent: float = Field(..., gt=0)

    def apply(self, space: FiniteMetricSpace) -> FiniteMetricSpace:
        """Raise every distance to the exponent. The result is not
        revalidated."""
        return FiniteMetricSpace(
            dist=np.power(space.dist, self.exponent), labels=space.labels
        )


def _worst_triangle_defects(
    dist: np.ndarray, threads: int = 1
) -> Tuple[np.ndarray, np.ndarray]:
    """For every pair (x, y), max over z of d(x,y) - d(x,z) - d(z,y) and
    the smallest z attaining it."""
    n = dist.shape[0]
    chunks = [range(s, min(s + 64, n)) for s in range(0, n, 64)]

    def scan(zs: range) -> Tuple[np.ndarray, np.ndarray]:
        """Scan a block of middle points."""
        worst = np.full((n, n), -np.inf)
        arg = np.zeros((n, n), dtype=np.int64)
        for z in zs:
            defect = dist - dist[:, z][:, None] - dist[z, :][None, :]
            better = defect > worst
            worst = np.where(better, defect, worst)
            arg = np.where(better, z, arg)
        return worst, arg

    worst = np.full((n, n), -np.inf)
    arg = np.zeros((n, n), dtype=np.int64)
    # Blocks arrive in z order, so strict comparison keeps the smallest z
    for block_worst, block_arg in parallel_map(scan, chunks, threads):
        better = block_worst > worst
        worst = np.where(better, block_worst, worst)
        arg = np.where(better, block_arg, arg)
    return worst, arg


def validate_metric(
    space: FiniteMetricSpace,
    rel_tol: float = 1e-9,
    allow_zero: bool = False,
    threads: int = 1,
) -> List[ViolationReport]:
    """
    Check the metric axioms on every pair and triple.

    Parameters
    ----------
    space : FiniteMetricSpace
    rel_tol : float
      A triangle d(x,y) <= d(x,z) + d(z,y) passes when its defect is at most
      rel_tol * d(x,y); asymmetry is compared against the larger entry.
      Default is 1e-9.
    allow_zero : bool
      If True, zero distances between distinct points are logged as a
      warning instead of being reported. Default is False.
    threads : int
      Worker threads for the triple scan. Default is 1.

    Returns
    -------
    List[ViolationReport]
      One report per violated pair, holding its worst witness, sorted by
      witness indices. Empty iff every axiom holds.

    """
    if rel_tol < 0:
        raise DomainError(f"rel_tol must be non-negative, got {rel_tol}")
    dist = space.dist
    n = space.n
    reports: List[ViolationReport] = []
    if n < 2:
        return reports
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)

    gap = np.abs(dist - dist.T)
    scale = np.maximum(np.abs(dist), np.abs(dist.T))
    for i, j in zip(*np.nonzero(upper & (gap > rel_tol * scale))):
        reports.append(
            ViolationReport(
                kind=ViolationKind.ASYMMETRY,
                witness=(int(i), int(j)),
                defect=float(gap[i, j]),
            )
        )

    lowest = np.minimum(dist, dist.T)
    for i, j in zip(*np.nonzero(upper & (lowest < 0))):
        reports.append(
            ViolationReport(
                kind=ViolationKind.NEGATIVE,
                witness=(int(i), int(j)),
                defect=float(-lowest[i, j]),
            )
        )

    # A coincident pair reports a full relative gap of 1
    zero_pairs = list(zip(*np.nonzero(upper & (lowest == 0))))
    for i, j in zero_pairs:
        if allow_zero:
            logging.warning(
                f"Distinct points {i} and {j} are at distance zero."
            )
        else:
            reports.append(
                ViolationReport(
                    kind=ViolationKind.ZERO_OFF_DIAGONAL,
                    witness=(int(i), int(j)),
                    defect=1.0,
                )
            )

    worst, arg = _worst_triangle_defects(dist, threads=threads)
    bound = rel_tol * np.abs(dist)
    for x, y in zip(*np.nonzero(upper & (worst > bound) & (worst > 0))):
        reports.append(
            ViolationReport(
                kind=ViolationKind.TRIANGLE,
                witness=(int(x), int(arg[x, y]), int(y)),
                defect=float(worst[x, y]),
            )
        )

    reports.sort(key=lambda r: (r.witness, r.kind.value))
    return reports


def power_transform(space: FiniteMetricSpace, p: float) -> FiniteMetricSpace:
    """
    Raise every distance to the power p.

    Parameters
    ----------
    space : FiniteMetricSpace
    p : float
      Exponent, must be positive. p < 1 snowflakes the space.

    Returns
    -------
    FiniteMetricSpace
      Not revalidated; the caller decides.

    """
    if not p > 0:
        raise DomainError(f"Power exponent must be positive, got {p}")
    return PowerTransform(exponent=p).apply(space)


def restrict(
    space: FiniteMetricSpace, subset: Sequence[PointRef]
) -> FiniteMetricSpace:
    """
    Induced subspace on subset, keeping the order of subset.

    Parameters
    ----------
    space : FiniteMetricSpace
    subset : Sequence[PointRef]
      Distinct, in-range indices or PointIds.

    Returns
    -------
    FiniteMetricSpace

    """
    indices = [space.index_of(ref) for ref in subset]
    if len(set(indices)) != len(indices):
        raise InputError(f"Subset has duplicate indices: {indices}")
    idx = np.array(indices, dtype=np.int64)
    labels = (
        None if space.labels is None else [space.labels[i] for i in indices]
    )
    return FiniteMetricSpace(dist=space.dist[np.ix_(idx, idx)], labels=labels)


def space_to_dict(space: FiniteMetricSpace) -> Dict[str, Any]:
    """Json-ready form {"labels": [...], "matrix": [[...], ...]}."""
    labels = (
        space.labels
        if space.labels is not None
        else [str(i) for i in range(space.n)]
    )
    return {"labels": list(labels), "matrix": space.dist.tolist()}


def space_from_dict(contents: Dict[str, Any]) -> FiniteMetricSpace:
    """Inverse of space_to_dict. Extra keys such as a descriptor echo are
    ignored."""
    if not isinstance(contents, dict) or "matrix" not in contents:
        raise InputError("Json metric space needs a 'matrix' field")
    return FiniteMetricSpace.from_matrix(
        contents["matrix"], labels=contents.get("labels")
    )


def _read_csv(path: Path) -> FiniteMetricSpace:
    """Read n rows of n comma separated reals, with an optional header of
    labels."""
    df = pd.read_csv(path, header=None, dtype=str, skipinitialspace=True)
    labels = None
    if len(df) > 0:
        first_row = pd.to_numeric(df.iloc[0], errors="coerce")
        if first_row.isna().any():
            labels = [str(v).strip() for v in df.iloc[0]]
            df = df.iloc[1:]
    try:
        matrix = df.apply(pd.to_numeric, errors="raise").to_numpy(
            dtype=np.float64
        )
    except (TypeError, ValueError) as e:
        raise InputError(f"Could not parse {path} as a distance matrix: {e}")
    return FiniteMetricSpace.from_matrix(matrix, labels=labels)


def load_space(path: Union[str, Path]) -> FiniteMetricSpace:
    """
    Load a space from a .json or .csv file.

    Parameters
    ----------
    path : Union[str, Path]

    Returns
    -------
    FiniteMetricSpace

    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    try:
        with open(path, "r") as f:
            contents = json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(f"Could not parse {path}: {e.msg}", offset=e.pos)
    return space_from_dict(contents)
