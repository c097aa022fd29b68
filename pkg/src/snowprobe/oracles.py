"""Module for placement oracles: rules that put a point z' between x' and y'
with d(x',z') = r1 * d(x',y') and d(z',y') = r2 * d(x',y')."""

import logging
from typing import Any, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from snowprobe.errors import InputError, OracleViolationError
from snowprobe.example_spaces import (
    SampleSet,
    SpaceDescriptor,
    SpaceKind,
    _as_points,
    _raw_paired,
    _raw_pairwise,
)


class PlacementOracle(BaseModel):
    """Base class for placement oracles. It is not used directly:
    subclasses implement place, and place_checked validates their output."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    descriptor: SpaceDescriptor
    ratios: Tuple[float, float] = Field(
        ..., description="Target (d(x',z'), d(z',y')) over d(x',y')"
    )
    check_tol: float = Field(
        default=1e-10,
        gt=0,
        description="Largest relative residual a placement may have",
    )

    def place(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Candidate points for each row pair (xs[i], ys[i])."""
        raise NotImplementedError

    def residuals(
        self, xs: np.ndarray, ys: np.ndarray, zs: np.ndarray
    ) -> np.ndarray:
        """Relative residual of the worse distance equation per row."""
        base = _raw_paired(self.descriptor, xs, ys)
        if np.any(base <= 0):
            raise InputError("Placement needs pairs of distinct points")
        r1, r2 = self.ratios
        left = np.abs(_raw_paired(self.descriptor, xs, zs) - r1 * base)
        right = np.abs(_raw_paired(self.descriptor, zs, ys) - r2 * base)
        return np.maximum(left, right) / base

    def place_checked(
        self, xs: Any, ys: Any, step: object = None
    ) -> np.ndarray:
        """
        Place points and check both distance equations on every row.

        Parameters
        ----------
        xs : Any
          Array-like of shape (m, point_dimension).
        ys : Any
          Same shape as xs.
        step : object
          Reported with a violation, e.g. the refinement depth.

        Returns
        -------
        np.ndarray
          Shape (m, point_dimension).

        Raises
        ------
        OracleViolationError
          When some row misses its equations by more than check_tol.

        """
        xs = _as_points(self.descriptor, xs)
        ys = _as_points(self.descriptor, ys)
        zs = self.place(xs, ys)
        residual = self.residuals(xs, ys, zs)
        worst = int(np.argmax(residual)) if residual.size else 0
        if residual.size and residual[worst] > self.check_tol:
            raise OracleViolationError(
                f"Placement {worst} at step {step} misses its distance "
                f"equations by {residual[worst]:.3g} relative",
                step=(step, worst),
                residual=float(residual[worst]),
            )
        return zs


class SegmentOracle(PlacementOracle):
    """z' = x' + t (y' - x'), the point at Euclidean parameter t on the
    straight segment."""

    t: float = Field(..., gt=0, lt=1)

    def place(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Straight-line interpolation."""
        if self.descriptor.root.kind == SpaceKind.SHIFT_SPACE:
            raise InputError("Shift spaces have no straight segments")
        return xs + self.t * (ys - xs)


class FiniteSpaceOracle(PlacementOracle):
    """Picks, among fixed candidate points, the one with the smallest
    residual. Ties go to the lowest candidate index."""

    candidates: SampleSet

    def place(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Nearest feasible candidate for each pair."""
        points = self.candidates.points
        if len(points) == 0:
            raise InputError("The candidate set is empty")
        to_x = _raw_pairwise(self.descriptor, xs, points)
        to_y = _raw_pairwise(self.descriptor, ys, points)
        base = _raw_paired(self.descriptor, xs, ys)[:, None]
        r1, r2 = self.ratios
        residual = np.maximum(
            np.abs(to_x - r1 * base), np.abs(to_y - r2 * base)
        )
        best = np.argmin(residual, axis=1)
        found = residual[np.arange(len(best)), best] / base[:, 0]
        if found.size:
            logging.debug(
                f"Search placement residuals up to {found.max():.3g}."
            )
        return points[best]
