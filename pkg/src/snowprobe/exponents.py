"""Module for the gauge function phi(p) and the de-snowflake exponent, the
largest p for which d**p still satisfies the triangle inequality."""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from snowprobe.errors import DomainError, InputError, InvalidMetricError
from snowprobe.metric_core import FiniteMetricSpace, PointRef
from snowprobe.utils import parallel_map

# Bracket doubling gives up past this exponent and reports +inf
P_CAP = 2.0**20
MAX_ITERATIONS = 200


class GaugeContext(BaseModel):
    """A space pre-scaled so the anchor pair (a, b) is at distance 1."""

    model_config = ConfigDict(frozen=True)

    space: FiniteMetricSpace
    a: int = Field(..., ge=0)
    b: int = Field(..., ge=0)
    scale: float = Field(..., gt=0, description="Original d(a, b)")

    @classmethod
    def build(
        cls, space: FiniteMetricSpace, a: PointRef, b: PointRef
    ) -> "GaugeContext":
        """
        Normalize space by d(a, b).

        Parameters
        ----------
        space : FiniteMetricSpace
        a : PointRef
        b : PointRef
          Must differ from a and sit at positive distance from it.

        Returns
        -------
        GaugeContext

        """
        ia, ib = space.index_of(a), space.index_of(b)
        if ia == ib:
            raise InputError("Gauge anchors a and b must differ")
        d_ab = float(space.dist[ia, ib])
        if not d_ab > 0:
            raise InvalidMetricError(
                f"Anchors {ia} and {ib} are at distance {d_ab}",
                triple=(ia, ib),
            )
        normalized = FiniteMetricSpace(
            dist=space.dist / d_ab, labels=space.labels
        )
        return cls(space=normalized, a=ia, b=ib, scale=d_ab)


def _gauge_values(ctx: GaugeContext, ps: np.ndarray) -> np.ndarray:
    """phi at each exponent in ps."""
    legs_a = ctx.space.dist[ctx.a]
    legs_b = ctx.space.dist[:, ctx.b]
    values = np.power(legs_a[None, :], ps[:, None]) + np.power(
        legs_b[None, :], ps[:, None]
    )
    return values.min(axis=1)


def gauge(ctx: GaugeContext, p: float) -> float:
    """
    phi(p) = min over points x of d(a,x)**p + d(x,b)**p. The minimum is
    exact on a finite space and at most 1, since x = a gives 1.

    Parameters
    ----------
    ctx : GaugeContext
    p : float
      Must be at least 1.

    Returns
    -------
    float

    """
    if not p >= 1:
        raise DomainError(f"The gauge is defined for p >= 1, got {p}")
    return float(_gauge_values(ctx, np.array([float(p)]))[0])


def gauge_scan(
    ctx: GaugeContext, p_min: float, p_max: float, steps: int
) -> List[Tuple[float, float]]:
    """
    phi on an even grid of exponents.

    Parameters
    ----------
    ctx : GaugeContext
    p_min : float
      At least 1.
    p_max : float
      Greater than p_min.
    steps : int
      At least 2 grid points.

    Returns
    -------
    List[Tuple[float, float]]
      (p, phi(p)) rows, non-increasing in phi.

    """
    if not 1 <= p_min < p_max:
        raise InputError(f"Need 1 <= p_min < p_max, got {p_min}, {p_max}")
    if steps < 2:
        raise InputError(f"Need at least 2 steps, got {steps}")
    ps = np.linspace(p_min, p_max, steps)
    values = _gauge_values(ctx, ps)
    return [(float(p), float(v)) for p, v in zip(ps, values)]


class SolverTrace(BaseModel):
    """How the root of a**p + b**p = 1 was found."""

    model_config = ConfigDict(frozen=True)

    iterations: int = Field(default=0, ge=0)
    bracket_width: float = Field(default=0.0, ge=0)


class TripleExponent(BaseModel):
    """Critical exponent of one triple (x, z, y) with base d(x, y)."""

    model_config = ConfigDict(frozen=True)

    triple: Tuple[int, int, int] = Field(..., description="(x, z, y)")
    a: float = Field(..., description="d(x,z) / d(x,y)")
    b: float = Field(..., description="d(z,y) / d(x,y)")
    p_crit: float = Field(..., description="Root of a**p + b**p = 1, or inf")
    valid_metric: bool = Field(default=True)


class CriticalExponentResult(BaseModel):
    """The de-snowflake exponent p* with its witness triple."""

    model_config = ConfigDict(frozen=True)

    p_star: float
    witness: Optional[TripleExponent] = None
    solver_trace: SolverTrace = Field(default_factory=SolverTrace)


def critical_exponent_bounds(
    a: np.ndarray, b: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Closed form bracket for the root of a**p + b**p = 1. From
    2 min**p <= a**p + b**p <= 2 max**p the root lies between
    ln 2 / ln(1/min(a,b)) and ln 2 / ln(1/max(a,b)).

    Parameters
    ----------
    a : np.ndarray
    b : np.ndarray
      Entries in (0, 1).

    Returns
    -------
    Tuple[np.ndarray, np.ndarray]
      Lower and upper bounds.

    """
    with np.errstate(divide="ignore"):
        lower = math.log(2.0) / -np.log(np.minimum(a, b))
        upper = math.log(2.0) / -np.log(np.maximum(a, b))
    return lower, upper


def solve_power_sum_root(
    a: np.ndarray, b: np.ndarray, abs_tol: float = 1e-12
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorized root of g(p) = a**p + b**p - 1 on [1, inf). g is strictly
    decreasing for a, b < 1, so the root is bracketed by doubling an upper
    end from 2 and refined by Newton steps that fall back to bisection
    whenever they leave the bracket.

    Parameters
    ----------
    a : np.ndarray
    b : np.ndarray
      Normalized legs in (0, 1]; the caller rejects a + b < 1.
    abs_tol : float
      Stop when |g(p)| <= abs_tol. Default is 1e-12.

    Returns
    -------
    Tuple[np.ndarray, np.ndarray, np.ndarray]
      Roots (inf where max(a,b) >= 1 - abs_tol or past the cap), iteration
      counts and final bracket widths.

    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    roots = np.full(a.shape, np.inf)
    iterations = np.zeros(a.shape, dtype=np.int64)
    widths = np.zeros(a.shape)

    infinite = np.maximum(a, b) >= 1.0 - abs_tol
    at_one = ~infinite & (np.abs(a + b - 1.0) <= abs_tol)
    roots[at_one] = 1.0
    active = ~infinite & ~at_one
    if not active.any():
        return roots, iterations, widths

    aa, bb = a[active], b[active]
    lo = np.ones(aa.shape)
    hi = np.full(aa.shape, 2.0)
    with np.errstate(under="ignore"):
        unbracketed = np.power(aa, hi) + np.power(bb, hi) - 1.0 >= 0
        while unbracketed.any():
            lo = np.where(unbracketed, hi, lo)
            hi = np.where(unbracketed, 2.0 * hi, hi)
            unbracketed &= hi <= P_CAP
            unbracketed &= np.power(aa, hi) + np.power(bb, hi) - 1.0 >= 0
        capped = hi > P_CAP

        log_a, log_b = np.log(aa), np.log(bb)
        p = 0.5 * (lo + hi)
        running = ~capped
        found = np.full(aa.shape, np.inf)
        counts = np.zeros(aa.shape, dtype=np.int64)
        for _ in range(MAX_ITERATIONS):
            if not running.any():
                break
            pa, pb = np.power(aa, p), np.power(bb, p)
            g = pa + pb - 1.0
            counts += running
            converged = running & (np.abs(g) <= abs_tol)
            found = np.where(converged, p, found)
            running &= ~converged
            lo = np.where(running & (g > 0), p, lo)
            hi = np.where(running & (g <= 0), p, hi)
            slope = pa * log_a + pb * log_b
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = p - g / slope
            inside = np.isfinite(newton) & (newton > lo) & (newton < hi)
            step = np.where(inside, newton, 0.5 * (lo + hi))
            # A collapsed bracket cannot improve further
            stalled = running & ((step <= lo) | (step >= hi))
            found = np.where(stalled, step, found)
            running &= ~stalled
            p = np.where(running, step, p)
        found = np.where(running, p, found)

    roots[active] = found
    iterations[active] = counts
    widths[active] = np.where(capped, 0.0, hi - lo)
    return roots, iterations, widths


def triple_critical_exponent(
    d_xy: float, d_xz: float, d_zy: float, abs_tol: float = 1e-12
) -> float:
    """
    The exponent at which the triangle x, z, y with base d(x, y) stops
    satisfying the triangle inequality under d**p.

    Parameters
    ----------
    d_xy : float
      The largest of the three distances.
    d_xz : float
    d_zy : float
    abs_tol : float
      Default is 1e-12.

    Returns
    -------
    float
      +inf when one leg is as long as the base; 1 when the triangle is
      degenerate; otherwise the root of a**p + b**p = 1.

    """
    if min(d_xy, d_xz, d_zy) <= 0:
        raise DomainError("Triple distances must be positive")
    a, b = d_xz / d_xy, d_zy / d_xy
    if a + b < 1.0 - abs_tol:
        raise InvalidMetricError(
            f"Legs {d_xz} + {d_zy} are shorter than the base {d_xy}"
        )
    roots, _, _ = solve_power_sum_root(
        np.array([a]), np.array([b]), abs_tol=abs_tol
    )
    return float(roots[0])


def _orient_triples(
    dist: np.ndarray, i: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """All triples i < j < k oriented with the largest side as base.
    Returns (x, z, y, a, b) arrays in lexicographic (i, j, k) order."""
    n = dist.shape[0]
    js, ks = np.triu_indices(n - i - 1, k=1)
    js, ks = js + i + 1, ks + i + 1
    ii = np.full(js.shape, i)
    s_ij, s_ik, s_jk = dist[i, js], dist[i, ks], dist[js, ks]
    # Candidate bases in index tuple order: (i,j), (i,k), (j,k)
    choice = np.argmax(np.stack([s_ij, s_ik, s_jk]), axis=0)
    x = np.choose(choice, [ii, ii, js])
    z = np.choose(choice, [ks, js, ii])
    y = np.choose(choice, [js, ks, ks])
    base = np.choose(choice, [s_ij, s_ik, s_jk])
    leg_xz = np.choose(choice, [s_ik, s_ij, s_ij])
    leg_zy = np.choose(choice, [s_jk, s_jk, s_ik])
    return x, z, y, leg_xz / base, leg_zy / base


def desnowflake_exponent(
    space: FiniteMetricSpace, abs_tol: float = 1e-12, threads: int = 1
) -> CriticalExponentResult:
    """
    p* = min over triples of the critical exponent, the largest p for which
    d**p satisfies the triangle inequality.

    Parameters
    ----------
    space : FiniteMetricSpace
      A validated metric.
    abs_tol : float
      Root tolerance. Default is 1e-12.
    threads : int
      Worker threads for the triple scan. Default is 1.

    Returns
    -------
    CriticalExponentResult
      The witness is the lexicographically smallest triple attaining p*.

    """
    dist = space.dist
    n = space.n
    if n < 3:
        return CriticalExponentResult(p_star=math.inf)
    off_diagonal = ~np.eye(n, dtype=bool)
    if np.any(dist[off_diagonal] <= 0):
        i, j = np.argwhere(off_diagonal & (dist <= 0))[0]
        raise InvalidMetricError(
            f"Points {i} and {j} are at non-positive distance",
            triple=(int(i), int(j)),
        )

    def scan(i: int) -> Optional[Tuple[float, int, int, float, float, tuple]]:
        """Best triple with smallest index i."""
        x, z, y, a, b = _orient_triples(dist, i)
        broken = a + b < 1.0 - abs_tol
        if broken.any():
            t = int(np.argmax(broken))
            raise InvalidMetricError(
                f"Triangle ({x[t]}, {z[t]}, {y[t]}) is violated",
                triple=(int(x[t]), int(z[t]), int(y[t])),
            )
        finite = np.maximum(a, b) < 1.0 - abs_tol
        if not finite.any():
            return None
        lower, upper = critical_exponent_bounds(a, b)
        best_upper = float(upper[finite].min())
        keep = np.nonzero(finite & (lower <= best_upper * (1 + 1e-9)))[0]
        roots, counts, widths = solve_power_sum_root(
            a[keep], b[keep], abs_tol=abs_tol
        )
        t = int(np.argmin(roots))
        s = keep[t]
        return (
            float(roots[t]),
            int(counts[t]),
            float(widths[t]),
            float(a[s]),
            float(b[s]),
            (int(x[s]), int(z[s]), int(y[s])),
        )

    best = None
    for found in parallel_map(scan, range(n - 2), threads):
        if found is not None and (best is None or found[0] < best[0]):
            best = found

    if best is None:
        x, z, y, a, b = _orient_triples(dist, 0)
        witness = TripleExponent(
            triple=(int(x[0]), int(z[0]), int(y[0])),
            a=float(a[0]),
            b=float(b[0]),
            p_crit=math.inf,
        )
        logging.info("Every triple is ultrametric; p* is infinite.")
        return CriticalExponentResult(p_star=math.inf, witness=witness)

    p_star, count, width, a, b, triple = best
    logging.info(f"De-snowflake exponent {p_star} at triple {triple}.")
    return CriticalExponentResult(
        p_star=p_star,
        witness=TripleExponent(triple=triple, a=a, b=b, p_crit=p_star),
        solver_trace=SolverTrace(iterations=count, bracket_width=width),
    )
