"""
Ambient-space primitives.

Constraints, constraint sets, active sets and the min-norm point of the convex
hull of unit normals. A domain is D = {x : f(x) > 0 for every constraint f};
its boundary points see the convex hull Conv(x) of the unit inward normals of
the constraints vanishing there, and compatibility asks that the distance from
the origin to Conv(x) stay bounded away from zero.

Every constraint function accepts arrays of shape (..., D) so that the same
objects serve single states and vectorised ensembles.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import (ConstraintValidityError, DimensionError, HullInputError,
                     SingularObliquityError)

logger = logging.getLogger(__name__)

OPT_TOL = 1e-10
UNIT_TOL = 1e-9
MAX_CONDITION = 1e12

ConfigVector = np.ndarray
Screen = Callable[[np.ndarray, float], np.ndarray]


def config_vector(x, dimension: Optional[int] = None) -> ConfigVector:
    """Return ``x`` as a finite float vector, checking its dimension."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionError(f"configuration must be a vector, got shape {arr.shape}")
    if dimension is not None and arr.shape[0] != dimension:
        raise DimensionError(
            f"configuration has dimension {arr.shape[0]}, expected {dimension}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("configuration contains NaN or Inf entries")
    return arr


@dataclass(frozen=True)
class Constraint:
    """One smooth constraint f with D = {f > 0} on its own.

    ``value`` maps (..., D) arrays to (...) and ``gradient`` to (..., D).
    ``hessian_bound`` is a uniform bound on |D²f|; ``grad_floor`` a lower
    bound on |∇f| where f vanishes inside the closure of the domain.
    """
    id: str
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian_bound: float
    grad_floor: float

    def __post_init__(self):
        if self.hessian_bound < 0:
            raise ValueError(f"constraint {self.id}: negative hessian_bound")
        if self.grad_floor <= 0:
            raise ValueError(f"constraint {self.id}: grad_floor must be positive")


@dataclass
class ConstraintSet:
    """Finite family of constraints plus the obliquity matrix Θ."""
    constraints: List[Constraint]
    dimension: int
    obliquity: Optional[np.ndarray] = None
    scale: float = 1.0
    screen: Optional[Screen] = None
    box: Optional[Tuple[np.ndarray, np.ndarray]] = None
    name: str = "constraints"
    _index: Dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.obliquity is None:
            self.obliquity = np.eye(self.dimension)
        self.obliquity = np.asarray(self.obliquity, dtype=float)
        if self.obliquity.shape != (self.dimension, self.dimension):
            raise DimensionError(
                f"obliquity has shape {self.obliquity.shape}, "
                f"expected ({self.dimension}, {self.dimension})")
        check_invertible(self.obliquity)
        self._index = {}
        for k, c in enumerate(self.constraints):
            if c.id in self._index:
                raise ValueError(f"duplicate constraint id '{c.id}'")
            self._index[c.id] = k
        if self.box is not None:
            low, high = (np.asarray(b, dtype=float) for b in self.box)
            self.box = (low, high)

    def __len__(self) -> int:
        return len(self.constraints)

    @property
    def ids(self) -> List[str]:
        return [c.id for c in self.constraints]

    def index_of(self, constraint_id: str) -> int:
        return self._index[constraint_id]

    def __getitem__(self, constraint_id: str) -> Constraint:
        return self.constraints[self._index[constraint_id]]

    @property
    def reflection_matrix(self) -> np.ndarray:
        """Θ·ᵗΘ, the matrix turning inward normals into reflection directions."""
        return self.obliquity @ self.obliquity.T

    def tolerance(self, base: float) -> float:
        """A tolerance stated for unit-sized domains, rescaled to this set."""
        return base * self.scale

    @property
    def is_normal(self) -> bool:
        return bool(np.array_equal(self.obliquity, np.eye(self.dimension)))

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dimension:
            raise DimensionError(
                f"point has dimension {x.shape[-1]}, set '{self.name}' "
                f"has dimension {self.dimension}")
        return x

    def values(self, x, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Constraint values with shape (..., m); pruned entries are +inf."""
        x = self._check(x)
        out = np.full(x.shape[:-1] + (len(self.constraints),), np.inf)
        chosen = range(len(self.constraints)) if indices is None else indices
        for k in chosen:
            out[..., k] = self.constraints[k].value(x)
        return out

    def gradients(self, x, indices: Optional[Sequence[int]] = None) -> np.ndarray:
        """Constraint gradients with shape (..., m, D); pruned rows are zero."""
        x = self._check(x)
        out = np.zeros(x.shape[:-1] + (len(self.constraints), self.dimension))
        chosen = range(len(self.constraints)) if indices is None else indices
        for k in chosen:
            out[..., k, :] = self.constraints[k].gradient(x)
        return out

    def candidates(self, x, reach: float) -> np.ndarray:
        """Indices of constraints that may take a value ≤ ``reach`` somewhere in ``x``.

        Without a screen every constraint is a candidate. A screen must be
        exact: it may only drop constraints whose value provably exceeds
        ``reach`` on every row.
        """
        if self.screen is None:
            return np.arange(len(self.constraints))
        return np.asarray(self.screen(self._check(x), reach), dtype=int)

    def is_feasible(self, x, tol: float = 0.0) -> np.ndarray:
        return np.all(self.values(x) > -tol, axis=-1)


def check_invertible(theta: np.ndarray) -> float:
    """Return the condition number of ``theta``; raise when it is singular."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2 or theta.shape[0] != theta.shape[1]:
        raise DimensionError(f"obliquity must be square, got shape {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise SingularObliquityError("obliquity has non-finite entries")
    det = np.linalg.det(theta)
    cond = np.linalg.cond(theta)
    if det == 0.0 or not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularObliquityError(
            f"obliquity is singular or ill-conditioned (det={det:.3e}, cond={cond:.3e})")
    return float(cond)


def evaluate(cset: ConstraintSet, x) -> List[Tuple[str, float, np.ndarray]]:
    """One (id, value, gradient) triple per constraint, in declaration order."""
    x = config_vector(x)
    if x.shape[0] != cset.dimension:
        raise DimensionError(
            f"point has dimension {x.shape[0]}, set has dimension {cset.dimension}")
    return [(c.id, float(c.value(x)), np.asarray(c.gradient(x), dtype=float))
            for c in cset.constraints]


def active_set(cset: ConstraintSet, x, act_tol: float) -> List[str]:
    """Ids of the constraints with value ≤ act_tol at ``x``."""
    if act_tol <= 0:
        raise ValueError("act_tol must be positive")
    x = config_vector(x, cset.dimension)
    idx = cset.candidates(x[None, :], act_tol)
    vals = cset.values(x, idx)
    return [cset.constraints[k].id for k in idx if vals[k] <= act_tol]


def unit_normals(cset: ConstraintSet, x, ids: Sequence[str]) -> np.ndarray:
    """Unit inward normals of the named constraints at ``x``.

    A gradient shorter than half the declared floor at an active point breaks
    the gradient-floor requirement and is reported, never normalised.
    """
    x = config_vector(x, cset.dimension)
    normals = np.empty((len(ids), cset.dimension))
    for row, cid in enumerate(ids):
        c = cset[cid]
        g = np.asarray(c.gradient(x), dtype=float)
        norm = np.linalg.norm(g)
        if norm < 0.5 * c.grad_floor:
            raise ConstraintValidityError(
                f"constraint '{cid}' has |grad| = {norm:.3e} below half its "
                f"declared floor {c.grad_floor:.3e} at an active point",
                constraint_id=cid)
        normals[row] = g / norm
    return normals


def check_gradients(cset: ConstraintSet, points, h: float = 1e-5) -> float:
    """Worst relative error between analytic gradients and central differences."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst = 0.0
    eye = np.eye(cset.dimension)
    for x in points:
        for c in cset.constraints:
            g = np.asarray(c.gradient(x), dtype=float)
            fd = np.array([(c.value(x + h * e) - c.value(x - h * e)) / (2 * h) for e in eye])
            err = np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1.0)
            worst = max(worst, float(err))
    return worst


@dataclass
class HullResult:
    min_norm_point: np.ndarray
    distance: float
    coefficients: Dict[str, float]
    iterations: int = 0

    def weights(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()))


def _validate_unit(vectors) -> np.ndarray:
    P = np.atleast_2d(np.asarray(vectors, dtype=float))
    if P.size == 0 or P.shape[0] == 0:
        raise HullInputError("at least one vector is required")
    if not np.all(np.isfinite(P)):
        raise HullInputError("vectors contain NaN or Inf entries")
    norms = np.linalg.norm(P, axis=1)
    bad = np.nonzero(np.abs(norms - 1.0) > UNIT_TOL)[0]
    if bad.size:
        raise HullInputError(
            f"vector {int(bad[0])} has norm {norms[bad[0]]:.12f}, expected 1")
    return P


def _affine_minimizer(Q: np.ndarray) -> np.ndarray:
    """Weights v (Σv = 1) minimising |vᵀQ| over the affine hull of the rows of Q."""
    k = Q.shape[0]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = Q @ Q.T
    kkt[:k, k] = 1.0
    kkt[k, :k] = 1.0
    rhs = np.zeros(k + 1)
    rhs[k] = 1.0
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:k]


def _wolfe(P: np.ndarray, opt_tol: float, max_iter: int) -> Tuple[np.ndarray, int]:
    m = P.shape[0]
    eps = 1e-14
    first = int(np.argmin(np.einsum("ij,ij->i", P, P)))
    corral = [first]
    w = np.array([1.0])
    iterations = 0
    while iterations < max_iter:
        iterations += 1
        z = w @ P[corral]
        scores = P @ z
        j = int(np.argmin(scores))
        if scores[j] >= z @ z - opt_tol or j in corral:
            break
        corral.append(j)
        w = np.append(w, 0.0)
        while True:
            v = _affine_minimizer(P[corral])
            if np.all(v > eps):
                w = v
                break
            shrink = (w - v) > 0
            mask = shrink & (v <= eps)
            if not mask.any():
                w = np.clip(v, 0.0, None)
                w /= w.sum()
                break
            theta = float(np.min(w[mask] / (w[mask] - v[mask])))
            w = theta * v + (1.0 - theta) * w
            keep = w > eps
            corral = [c for c, k in zip(corral, keep) if k]
            w = w[keep]
            w /= w.sum()
    full = np.zeros(m)
    full[corral] = w
    return full, iterations


def min_norm_in_hull(vectors, ids: Optional[Sequence[str]] = None,
                     opt_tol: float = OPT_TOL, max_iter: int = 1000) -> HullResult:
    """Minimum-norm point of the convex hull of unit ``vectors``.

    Active-simplex (Wolfe) iteration stopped by the KKT condition
    z·u ≥ |z|² − opt_tol for every input u. Inputs are processed in a
    canonical lexicographic order so the result does not depend on how the
    caller ordered them.
    """
    P = _validate_unit(vectors)
    m = P.shape[0]
    if ids is None:
        ids = [str(k) for k in range(m)]
    if len(ids) != m:
        raise HullInputError(f"{len(ids)} ids for {m} vectors")
    order = np.lexsort(P.T[::-1])
    weights_sorted, iterations = _wolfe(P[order], opt_tol, max_iter)
    weights = np.empty(m)
    weights[order] = weights_sorted
    weights = np.clip(weights, 0.0, None)
    weights /= weights.sum()
    z = weights[order] @ P[order]
    return HullResult(
        min_norm_point=z,
        distance=float(np.linalg.norm(z)),
        coefficients={cid: float(wt) for cid, wt in zip(ids, weights)},
        iterations=iterations,
    )


class ConeAxis(NamedTuple):
    axis: np.ndarray
    beta: float
    degenerate: bool


def cone_axis(vectors, opt_tol: float = OPT_TOL) -> ConeAxis:
    """Axis and aperture cosine of a cone containing every unit vector.

    The axis is z/|z| for the min-norm point z; beta = min axis·u equals
    |z| up to opt_tol. When the origin lies in the hull the axis is NaN and
    the result is flagged degenerate.
    """
    P = _validate_unit(vectors)
    hull = min_norm_in_hull(P, opt_tol=opt_tol)
    if hull.distance <= np.sqrt(opt_tol):
        return ConeAxis(np.full(P.shape[1], np.nan), 0.0, True)
    axis = hull.min_norm_point / hull.distance
    return ConeAxis(axis, float(np.min(P @ axis)), False)
