"""Module for parametric example spaces: Euclidean and normed spaces, their
snowflakes, mixed products, and the truncated shift space of 0/1
sequences. Also verifies dilations, isometries and the parallelogram law."""

import logging
import math
from enum import Enum
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.distance import cdist

from snowprobe.errors import DomainError, InputError
from snowprobe.metric_core import FiniteMetricSpace
from snowprobe.utils import make_rng


class SpaceKind(str, Enum):
    """Kinds of descriptor spaces."""

    EUCLIDEAN = "euclidean"
    NORMED = "normed"
    SNOWFLAKED = "snowflaked"
    MIXED_PRODUCT = "mixed_product"
    SHIFT_SPACE = "shift_space"


class SpaceDescriptor(BaseModel):
    """A parametric metric space. Build instances with the helpers
    euclidean, normed, snowflaked, mixed_product and shift_space."""

    model_config = ConfigDict(frozen=True)

    kind: SpaceKind
    dimension: Optional[int] = Field(default=None, ge=1)
    norm_q: Optional[float] = Field(
        default=None, ge=1, description="q of the q-norm, inf for sup-norm"
    )
    base: Optional["SpaceDescriptor"] = Field(default=None)
    epsilon: Optional[float] = Field(default=None, gt=0, le=1)
    exponents: Optional[Tuple[float, ...]] = Field(default=None)
    window: Optional[int] = Field(
        default=None, ge=1, description="N, sequences live on [-N, N]"
    )
    seed: int = Field(default=0)

    @model_validator(mode="before")
    @classmethod
    def merge_nested_snowflakes(cls, data: Any) -> Any:
        """snowflaked(snowflaked(S, e1), e2) becomes snowflaked(S, e1*e2)."""
        if not isinstance(data, dict):
            return data
        kind = data.get("kind")
        base = data.get("base")
        if kind in (SpaceKind.SNOWFLAKED, "snowflaked") and base is not None:
            if isinstance(base, dict):
                base = SpaceDescriptor(**base)
            epsilon = data.get("epsilon")
            if base.kind == SpaceKind.SNOWFLAKED and epsilon is not None:
                data = dict(data)
                data["base"] = base.base
                data["epsilon"] = epsilon * base.epsilon
        return data

    @model_validator(mode="after")
    def check_fields_for_kind(self) -> "SpaceDescriptor":
        """Each kind needs its own parameters."""
        if self.kind in (SpaceKind.EUCLIDEAN, SpaceKind.NORMED):
            if self.dimension is None:
                raise ValueError(f"{self.kind.value} needs a dimension")
        if self.kind == SpaceKind.NORMED and self.norm_q is None:
            raise ValueError("normed needs norm_q")
        if self.kind == SpaceKind.SNOWFLAKED:
            if self.base is None or self.epsilon is None:
                raise ValueError("snowflaked needs base and epsilon")
        if self.kind == SpaceKind.MIXED_PRODUCT:
            if not self.exponents:
                raise ValueError("mixed_product needs exponents")
            for e in self.exponents:
                if not 0 < e <= 1:
                    raise ValueError(f"Exponent {e} is not in (0, 1]")
        if self.kind == SpaceKind.SHIFT_SPACE and self.window is None:
            raise ValueError("shift_space needs a window")
        return self

    @property
    def point_dimension(self) -> int:
        """Length of the arrays that represent points."""
        if self.kind == SpaceKind.SNOWFLAKED:
            return self.base.point_dimension
        if self.kind == SpaceKind.MIXED_PRODUCT:
            return len(self.exponents)
        if self.kind == SpaceKind.SHIFT_SPACE:
            return 2 * self.window + 1
        return self.dimension

    @property
    def root(self) -> "SpaceDescriptor":
        """The descriptor under every snowflake layer."""
        return self.base.root if self.kind == SpaceKind.SNOWFLAKED else self

    @property
    def total_epsilon(self) -> float:
        """Product of the snowflake exponents above the root."""
        if self.kind == SpaceKind.SNOWFLAKED:
            return self.epsilon * self.base.total_epsilon
        return 1.0

    def to_spec(self) -> str:
        """Compact text form, parsed back by the CLI."""
        if self.kind == SpaceKind.EUCLIDEAN:
            return f"euclidean:{self.dimension}"
        if self.kind == SpaceKind.NORMED:
            q = "inf" if math.isinf(self.norm_q) else format(self.norm_q, "g")
            return f"normed:{self.dimension}:{q}"
        if self.kind == SpaceKind.SNOWFLAKED:
            return f"snowflake({self.base.to_spec()},{self.epsilon!r})"
        if self.kind == SpaceKind.MIXED_PRODUCT:
            return "mixed(" + ",".join(repr(e) for e in self.exponents) + ")"
        return f"shift:{self.window}"


def euclidean(n: int, seed: int = 0) -> SpaceDescriptor:
    """Euclidean space R^n."""
    return SpaceDescriptor(kind=SpaceKind.EUCLIDEAN, dimension=n, seed=seed)


def normed(n: int, q: float, seed: int = 0) -> SpaceDescriptor:
    """R^n with the q-norm; q = inf gives the sup-norm."""
    return SpaceDescriptor(
        kind=SpaceKind.NORMED, dimension=n, norm_q=q, seed=seed
    )


def snowflaked(base: SpaceDescriptor, epsilon: float) -> SpaceDescriptor:
    """The snowflake (base, d**epsilon)."""
    return SpaceDescriptor(
        kind=SpaceKind.SNOWFLAKED, base=base, epsilon=epsilon, seed=base.seed
    )


def mixed_product(exponents: Sequence[float], seed: int = 0):
    """R^k with d(x,y) = sum_k |x_k - y_k| ** exponents[k]."""
    return SpaceDescriptor(
        kind=SpaceKind.MIXED_PRODUCT,
        exponents=tuple(float(e) for e in exponents),
        seed=seed,
    )


def shift_space(window: int, seed: int = 0) -> SpaceDescriptor:
    """0/1 sequences on [-window, window] with d = 2**max{n : x_n != y_n}."""
    return SpaceDescriptor(
        kind=SpaceKind.SHIFT_SPACE, window=window, seed=seed
    )


def _as_points(desc: SpaceDescriptor, points: Any) -> np.ndarray:
    """Coerce points to a 2d array valid for desc."""
    is_shift = desc.root.kind == SpaceKind.SHIFT_SPACE
    try:
        array = np.atleast_2d(
            np.asarray(points, dtype=np.int8 if is_shift else np.float64)
        )
    except (TypeError, ValueError) as e:
        raise InputError(f"Points are not numeric: {e}")
    if array.ndim != 2 or array.shape[1] != desc.point_dimension:
        raise InputError(
            f"Points of {desc.to_spec()} need {desc.point_dimension} "
            f"entries, got shape {array.shape}"
        )
    if is_shift:
        if np.any((array != 0) & (array != 1)):
            raise InputError("Shift space points must be 0/1 sequences")
    elif not np.all(np.isfinite(array)):
        raise InputError("Points must have finite coordinates")
    return array


def _raw_pairwise(
    desc: SpaceDescriptor, xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    """Distance matrix between validated point arrays."""
    if desc.kind == SpaceKind.EUCLIDEAN:
        return cdist(xs, ys, metric="euclidean")
    if desc.kind == SpaceKind.NORMED:
        q = desc.norm_q
        if math.isinf(q):
            return cdist(xs, ys, metric="chebyshev")
        if q == 1:
            return cdist(xs, ys, metric="cityblock")
        return cdist(xs, ys, metric="minkowski", p=q)
    if desc.kind == SpaceKind.SNOWFLAKED:
        return np.power(_raw_pairwise(desc.base, xs, ys), desc.epsilon)
    if desc.kind == SpaceKind.MIXED_PRODUCT:
        total = np.zeros((xs.shape[0], ys.shape[0]))
        for k, e in enumerate(desc.exponents):
            total += np.power(np.abs(xs[:, k, None] - ys[None, :, k]), e)
        return total
    # Shift space: array slot i holds the sequence entry at n = i - N
    differ = xs[:, None, :] != ys[None, :, :]
    width = xs.shape[1]
    last = width - 1 - np.argmax(differ[:, :, ::-1], axis=2)
    dist = np.power(2.0, last - desc.window)
    return np.where(differ.any(axis=2), dist, 0.0)


def pairwise_distances(
    desc: SpaceDescriptor, xs: Any, ys: Optional[Any] = None
) -> np.ndarray:
    """
    Vectorized distance matrix between two point lists.

    Parameters
    ----------
    desc : SpaceDescriptor
    xs : Any
      Array-like of shape (m, point_dimension).
    ys : Optional[Any]
      Array-like of shape (k, point_dimension). Default is xs.

    Returns
    -------
    np.ndarray
      Shape (m, k).

    """
    xs = _as_points(desc, xs)
    ys = xs if ys is None else _as_points(desc, ys)
    return _raw_pairwise(desc, xs, ys)


def _raw_paired(
    desc: SpaceDescriptor, xs: np.ndarray, ys: np.ndarray
) -> np.ndarray:
    """Row-wise distances d(xs[i], ys[i])."""
    if desc.kind == SpaceKind.EUCLIDEAN:
        return np.linalg.norm(xs - ys, axis=1)
    if desc.kind == SpaceKind.NORMED:
        return np.linalg.norm(xs - ys, ord=desc.norm_q, axis=1)
    if desc.kind == SpaceKind.SNOWFLAKED:
        return np.power(_raw_paired(desc.base, xs, ys), desc.epsilon)
    if desc.kind == SpaceKind.MIXED_PRODUCT:
        exponents = np.asarray(desc.exponents)
        return np.power(np.abs(xs - ys), exponents[None, :]).sum(axis=1)
    differ = xs != ys
    last = xs.shape[1] - 1 - np.argmax(differ[:, ::-1], axis=1)
    return np.where(
        differ.any(axis=1), np.power(2.0, last - desc.window), 0.0
    )


def paired_distances(desc: SpaceDescriptor, xs: Any, ys: Any) -> np.ndarray:
    """
    Distances between matching rows of two point lists.

    Parameters
    ----------
    desc : SpaceDescriptor
    xs : Any
      Array-like of shape (m, point_dimension).
    ys : Any
      Same shape as xs.

    Returns
    -------
    np.ndarray
      Shape (m,).

    """
    xs, ys = _as_points(desc, xs), _as_points(desc, ys)
    if xs.shape != ys.shape:
        raise InputError(
            f"Paired point lists differ in shape: {xs.shape}, {ys.shape}"
        )
    return _raw_paired(desc, xs, ys)


def distance(desc: SpaceDescriptor, x: Any, y: Any) -> float:
    """
    The descriptor metric between two points.

    Parameters
    ----------
    desc : SpaceDescriptor
    x : Any
      Coordinate vector, or 0/1 array on the window for shift spaces.
    y : Any

    Returns
    -------
    float

    """
    return float(pairwise_distances(desc, x, y)[0, 0])


def norm(desc: SpaceDescriptor, u: Any) -> float:
    """Norm of a vector in a Euclidean or normed descriptor."""
    if desc.kind not in (SpaceKind.EUCLIDEAN, SpaceKind.NORMED):
        raise InputError(f"{desc.to_spec()} is not a normed space")
    u = _as_points(desc, u)[0]
    q = 2 if desc.kind == SpaceKind.EUCLIDEAN else desc.norm_q
    return float(np.linalg.norm(u, ord=q))


class SampleSet(BaseModel):
    """Points drawn from a descriptor."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray = Field(..., description="Shape (count, dimension)")
    descriptor: SpaceDescriptor

    @model_validator(mode="after")
    def check_points(self) -> "SampleSet":
        """All points must be valid for the descriptor."""
        if self.points.size > 0:
            _as_points(self.descriptor, self.points)
        return self

    @classmethod
    def from_points(cls, desc: SpaceDescriptor, points: Any) -> "SampleSet":
        """Wrap explicit points, e.g. hand-picked witnesses."""
        array = _as_points(desc, points)
        array.setflags(write=False)
        return cls(points=array, descriptor=desc)

    def __len__(self) -> int:
        """Number of points."""
        return int(self.points.shape[0])


def sample(
    desc: SpaceDescriptor,
    count: int,
    seed: Optional[int] = None,
    max_redraws: int = 1000,
) -> SampleSet:
    """
    Draw count distinct points. Coordinates are uniform in [0, 1] per axis;
    shift space slots are independent fair bits. Points are drawn one at a
    time and duplicates are redrawn.

    Parameters
    ----------
    desc : SpaceDescriptor
    count : int
    seed : Optional[int]
      Default is desc.seed.
    max_redraws : int
      Total duplicate redraws allowed before giving up. Default is 1000.

    Returns
    -------
    SampleSet
      Identical for identical (desc, count, seed).

    """
    if count < 0:
        raise InputError(f"count must be non-negative, got {count}")
    rng = make_rng(desc.seed if seed is None else seed)
    width = desc.point_dimension
    is_shift = desc.root.kind == SpaceKind.SHIFT_SPACE
    dtype = np.int8 if is_shift else np.float64
    points = np.zeros((count, width), dtype=dtype)
    seen = set()
    redraws = 0
    i = 0
    while i < count:
        if is_shift:
            candidate = rng.integers(0, 2, size=width, dtype=np.int8)
        else:
            candidate = rng.random(width)
        key = candidate.tobytes()
        if key in seen:
            redraws += 1
            if redraws > max_redraws:
                raise InputError(
                    f"Could not draw {count} distinct points from "
                    f"{desc.to_spec()} within {max_redraws} redraws"
                )
            continue
        seen.add(key)
        points[i] = candidate
        i += 1
    if redraws > 0:
        logging.warning(f"Redrew {redraws} duplicate points while sampling.")
    points.setflags(write=False)
    return SampleSet(points=points, descriptor=desc)


def _point_label(desc: SpaceDescriptor, point: np.ndarray) -> str:
    """Text label recording a point's data."""
    if desc.root.kind == SpaceKind.SHIFT_SPACE:
        return "".join(str(int(b)) for b in point)
    return ",".join(format(float(c), ".17g") for c in point)


def materialize(samples: SampleSet) -> FiniteMetricSpace:
    """
    Distance matrix of a sample.

    Parameters
    ----------
    samples : SampleSet
      Pairwise distinct points.

    Returns
    -------
    FiniteMetricSpace
      Labels record the point data.

    """
    points = samples.points
    if len(points) > 0:
        unique = np.unique(points, axis=0)
        if unique.shape[0] != points.shape[0]:
            raise InputError("Samples contain duplicate points")
        dist = _raw_pairwise(samples.descriptor, points, points)
        np.fill_diagonal(dist, 0.0)
    else:
        dist = np.zeros((0, 0))
    labels = [_point_label(samples.descriptor, p) for p in points]
    return FiniteMetricSpace.from_matrix(dist, labels=labels)


class MapKind(str, Enum):
    """Kinds of self maps."""

    TRANSLATION = "translation"
    LINEAR = "linear"
    COORDINATE_DILATION = "coordinate_dilation"
    SHIFT = "shift"
    COMPOSITE = "composite"


class MapDescriptor(BaseModel):
    """A self map with the dilation factor it claims. On shift spaces a
    translation adds its vector mod 2."""

    model_config = ConfigDict(frozen=True)

    kind: MapKind
    claimed_factor: float = Field(default=1.0, gt=0)
    vector: Optional[Tuple[float, ...]] = Field(default=None)
    matrix: Optional[Tuple[Tuple[float, ...], ...]] = Field(default=None)
    factors: Optional[Tuple[float, ...]] = Field(default=None)
    steps: Optional[int] = Field(default=None)
    parts: Optional[Tuple["MapDescriptor", ...]] = Field(
        default=None, description="Applied left to right"
    )

    @model_validator(mode="after")
    def check_fields_for_kind(self) -> "MapDescriptor":
        """Each kind needs its own parameters."""
        required = {
            MapKind.TRANSLATION: "vector",
            MapKind.LINEAR: "matrix",
            MapKind.COORDINATE_DILATION: "factors",
            MapKind.SHIFT: "steps",
            MapKind.COMPOSITE: "parts",
        }[self.kind]
        if getattr(self, required) is None:
            raise ValueError(f"{self.kind.value} map needs {required}")
        if self.factors is not None and any(f <= 0 for f in self.factors):
            raise ValueError("Dilation factors must be positive")
        return self


def translation(vector: Sequence[float]) -> MapDescriptor:
    """x -> x + vector, an isometry."""
    return MapDescriptor(
        kind=MapKind.TRANSLATION, vector=tuple(float(v) for v in vector)
    )


def linear(matrix: Any, claimed_factor: float = 1.0) -> MapDescriptor:
    """x -> matrix @ x."""
    rows = tuple(tuple(float(v) for v in row) for row in np.asarray(matrix))
    return MapDescriptor(
        kind=MapKind.LINEAR, matrix=rows, claimed_factor=claimed_factor
    )


def coordinate_dilation(
    factors: Sequence[float], claimed_factor: float
) -> MapDescriptor:
    """x_k -> factors[k] * x_k."""
    return MapDescriptor(
        kind=MapKind.COORDINATE_DILATION,
        factors=tuple(float(f) for f in factors),
        claimed_factor=claimed_factor,
    )


def shift(steps: int) -> MapDescriptor:
    """(x_n) -> (x_{n - steps}); a 2**steps dilation of the shift space."""
    return MapDescriptor(
        kind=MapKind.SHIFT, steps=steps, claimed_factor=2.0**steps
    )


def compose(
    parts: Sequence[MapDescriptor], claimed_factor: float
) -> MapDescriptor:
    """Apply parts left to right."""
    return MapDescriptor(
        kind=MapKind.COMPOSITE,
        parts=tuple(parts),
        claimed_factor=claimed_factor,
    )


def _apply(
    desc: SpaceDescriptor, m: MapDescriptor, points: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Image of points and a mask of images that stay in the window."""
    width = desc.point_dimension
    is_shift = desc.root.kind == SpaceKind.SHIFT_SPACE
    valid = np.ones(points.shape[0], dtype=bool)
    if m.kind == MapKind.COMPOSITE:
        for part in m.parts:
            points, part_valid = _apply(desc, part, points)
            valid &= part_valid
        return points, valid
    if m.kind == MapKind.SHIFT:
        if not is_shift:
            raise InputError("Shift maps only apply to shift spaces")
        s = m.steps
        out = np.zeros_like(points)
        if abs(s) >= width:
            # Every nonzero coordinate leaves the window.
            return out, valid & ~points.any(axis=1)
        if s >= 0:
            out[:, s:] = points[:, : width - s]
            valid &= ~points[:, width - s :].any(axis=1)
        else:
            out[:, : width + s] = points[:, -s:]
            valid &= ~points[:, :-s].any(axis=1)
        return out, valid
    if m.kind == MapKind.TRANSLATION:
        vector = np.asarray(m.vector)
        if vector.shape[0] != width:
            raise InputError(
                f"Translation needs {width} entries, got {vector.shape[0]}"
            )
        if is_shift:
            if np.any((vector != 0) & (vector != 1)):
                raise InputError("Shift space translations are 0/1 vectors")
            return np.bitwise_xor(points, vector.astype(np.int8)), valid
        return points + vector, valid
    if is_shift:
        raise InputError(f"{m.kind.value} maps do not apply to shift spaces")
    if m.kind == MapKind.LINEAR:
        matrix = np.asarray(m.matrix)
        if matrix.shape != (width, width):
            raise InputError(
                f"Linear map needs a {width}x{width} matrix, got "
                f"{matrix.shape}"
            )
        return points @ matrix.T, valid
    factors = np.asarray(m.factors)
    if factors.shape[0] != width:
        raise InputError(
            f"Dilation needs {width} factors, got {factors.shape[0]}"
        )
    return points * factors, valid


def apply_map(desc: SpaceDescriptor, m: MapDescriptor, points: Any):
    """
    Image of points under a map.

    Parameters
    ----------
    desc : SpaceDescriptor
    m : MapDescriptor
    points : Any
      Array-like of shape (k, point_dimension) or a single point.

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
      Images and a boolean mask, False where a shift pushed support out of
      the window.

    """
    return _apply(desc, m, _as_points(desc, points))


def verify_map(
    desc: SpaceDescriptor,
    m: MapDescriptor,
    samples: SampleSet,
    rel_tol: float = 1e-9,
) -> float:
    """
    Max relative dilation defect of a map over sampled pairs.

    Parameters
    ----------
    desc : SpaceDescriptor
    m : MapDescriptor
    samples : SampleSet
    rel_tol : float
      A result at most rel_tol certifies m as a dilation with its claimed
      factor on the sample. Default is 1e-9.

    Returns
    -------
    float
      max |d(f(x), f(y)) - l * d(x, y)| / (l * d(x, y)) over pairs x != y.

    """
    points = _as_points(desc, samples.points)
    images, valid = _apply(desc, m, points)
    skipped = int((~valid).sum())
    if skipped:
        logging.warning(
            f"Skipped {skipped} samples whose image leaves the window."
        )
    points, images = points[valid], images[valid]
    if points.shape[0] < 2:
        return 0.0
    before = _raw_pairwise(desc, points, points)
    after = _raw_pairwise(desc, images, images)
    iu = np.triu_indices(points.shape[0], k=1)
    target = m.claimed_factor * before[iu]
    keep = target > 0
    if not keep.any():
        return 0.0
    defect = float(
        np.max(np.abs(after[iu][keep] - target[keep]) / target[keep])
    )
    logging.debug(
        f"Map {m.kind.value} has defect {defect} "
        f"({'certified' if defect <= rel_tol else 'not certified'})."
    )
    return defect


def dilation_map(
    desc: SpaceDescriptor, factor: float, fixing: Optional[Any] = None
) -> MapDescriptor:
    """
    A dilation of the given factor, optionally fixing a base point.

    Parameters
    ----------
    desc : SpaceDescriptor
    factor : float
      Must be positive; a power of 2 on shift spaces, which admit no other
      dilation factors.
    fixing : Optional[Any]
      Base point the dilation must fix. Default is None.

    Returns
    -------
    MapDescriptor

    """
    if not factor > 0:
        raise DomainError(f"Dilation factor must be positive, got {factor}")
    root = desc.root
    scale = desc.total_epsilon
    if root.kind == SpaceKind.SHIFT_SPACE:
        steps = round(math.log2(factor) / scale)
        if abs(2.0 ** (steps * scale) - factor) > 1e-12 * factor:
            raise DomainError(
                f"The shift space admits dilations by powers of 2 only, "
                f"not {factor}"
            )
        core = MapDescriptor(
            kind=MapKind.SHIFT, steps=steps, claimed_factor=factor
        )
    elif root.kind == SpaceKind.MIXED_PRODUCT:
        core = coordinate_dilation(
            [factor ** (1.0 / (e * scale)) for e in root.exponents],
            claimed_factor=factor,
        )
    else:
        core = coordinate_dilation(
            [factor ** (1.0 / scale)] * root.point_dimension,
            claimed_factor=factor,
        )
    if fixing is None:
        return core
    x0 = _as_points(desc, fixing)[0]
    if root.kind == SpaceKind.SHIFT_SPACE:
        there = back = translation(x0)
    else:
        there, back = translation(-x0), translation(x0)
    return compose([there, core, back], claimed_factor=factor)


def pair_similarity(
    desc: SpaceDescriptor, x: Any, y: Any, x2: Any, y2: Any
) -> MapDescriptor:
    """
    A similarity sending x to x2 and y to y2 with factor
    d(x2, y2) / d(x, y): translate x to 0, reflect the direction of y - x
    onto that of y2 - x2, scale, translate to x2.

    Parameters
    ----------
    desc : SpaceDescriptor
      Euclidean, or a snowflake of a Euclidean space.
    x, y, x2, y2 : Any
      Points with x != y and x2 != y2.

    Returns
    -------
    MapDescriptor

    """
    if desc.root.kind != SpaceKind.EUCLIDEAN:
        raise InputError(
            f"Pair similarities are built for Euclidean spaces and their "
            f"snowflakes, not {desc.to_spec()}"
        )
    x, y, x2, y2 = (_as_points(desc, p)[0] for p in (x, y, x2, y2))
    u, v = y - x, y2 - x2
    length_u, length_v = np.linalg.norm(u), np.linalg.norm(v)
    if length_u == 0 or length_v == 0:
        raise InputError("Pair similarities need two distinct points")
    u, v = u / length_u, v / length_v
    w = u - v
    reflection = np.eye(u.shape[0])
    if np.linalg.norm(w) > 0:
        w = w / np.linalg.norm(w)
        reflection -= 2.0 * np.outer(w, w)
    factor = distance(desc, x2, y2) / distance(desc, x, y)
    return compose(
        [
            translation(-x),
            linear((length_v / length_u) * reflection, claimed_factor=factor),
            translation(x2),
        ],
        claimed_factor=factor,
    )


def parallelogram_defect(norm_desc: SpaceDescriptor, samples: SampleSet):
    """
    Max relative parallelogram-law defect
    |‖u+v‖² + ‖u−v‖² − 2‖u‖² − 2‖v‖²| / (2‖u‖² + 2‖v‖²) over sampled
    pairs. Zero is necessary for the norm to come from a scalar product.

    Parameters
    ----------
    norm_desc : SpaceDescriptor
      Euclidean or normed.
    samples : SampleSet

    Returns
    -------
    float

    """
    if norm_desc.kind not in (SpaceKind.EUCLIDEAN, SpaceKind.NORMED):
        raise InputError(f"{norm_desc.to_spec()} is not a normed space")
    vectors = _as_points(norm_desc, samples.points)
    m = vectors.shape[0]
    if m < 2:
        return 0.0
    zero = np.zeros((1, vectors.shape[1]))
    sq = _raw_pairwise(norm_desc, vectors, zero)[:, 0] ** 2
    i, j = np.triu_indices(m, k=1)
    plus = _raw_pairwise(norm_desc, vectors[i] + vectors[j], zero)[:, 0]
    minus = _raw_pairwise(norm_desc, vectors[i] - vectors[j], zero)[:, 0]
    scale = 2.0 * sq[i] + 2.0 * sq[j]
    keep = scale > 0
    if not keep.any():
        return 0.0
    defect = np.abs(plus**2 + minus**2 - scale)[keep] / scale[keep]
    return float(defect.max())


SpaceDescriptor.model_rebuild()
MapDescriptor.model_rebuild()
