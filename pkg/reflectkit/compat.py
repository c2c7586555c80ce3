"""
Numerical certification of constraint compatibility.

A set of constraints is compatible when the domain is non-empty and connected,
every gradient is bounded below where its constraint vanishes, every Hessian
is bounded, and the distance from the origin to the hull of active unit
normals stays above a positive β₀ on the whole boundary. The checker below
can only look at finitely many boundary points: it certifies at the sampled
points, reports the worst one, and never claims a proof.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Protocol, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import (ConstraintValidityError, DimensionError, InvarianceError,
                     SamplingError)
from .geometry import (OPT_TOL, Constraint, ConstraintSet, active_set,
                       check_invertible, config_vector, min_norm_in_hull,
                       unit_normals)
from .rng import FEASIBLE, SAMPLER, keyed_generator

logger = logging.getLogger(__name__)

REFUTE_TOL = 1e-6
ACT_TOL = 1e-8
CHUNK = 64

CERTIFIED = "certified-at-samples"
REFUTED = "refuted"
DEGENERATE = "degenerate-input"


class BoundarySampler(Protocol):
    """Produces boundary points addressed by sample index."""
    act_tol: float

    def sample(self, index: int) -> Optional[np.ndarray]:
        ...


@dataclass
class CompatReport:
    beta0_estimate: float
    grad_floor_observed: float
    hessian_bound_declared: float
    samples_checked: int
    worst_point: Optional[np.ndarray]
    verdict: str
    worst_active: List[str] = field(default_factory=list)
    failed_samples: int = 0
    degenerate_constraint: Optional[str] = None
    hessian_bound_observed: Optional[float] = None
    hessian_box: Optional[Tuple[List[float], List[float]]] = None
    interior_point: Optional[np.ndarray] = None
    near_active_tolerance: float = ACT_TOL

    @property
    def certified(self) -> bool:
        return self.verdict == CERTIFIED

    def to_dict(self) -> Dict:
        def listify(v):
            return None if v is None else [float(t) for t in v]
        return {
            "verdict": self.verdict,
            "beta0_estimate": float(self.beta0_estimate),
            "grad_floor_observed": float(self.grad_floor_observed),
            "hessian_bound_declared": float(self.hessian_bound_declared),
            "hessian_bound_observed": (None if self.hessian_bound_observed is None
                                       else float(self.hessian_bound_observed)),
            "hessian_box": self.hessian_box,
            "samples_checked": int(self.samples_checked),
            "failed_samples": int(self.failed_samples),
            "worst_point": listify(self.worst_point),
            "worst_active": list(self.worst_active),
            "degenerate_constraint": self.degenerate_constraint,
            "interior_point": listify(self.interior_point),
            "active_tolerance": self.near_active_tolerance,
        }


def hull_distance_at(cset: ConstraintSet, x,
                     act_tol: Optional[float] = None) -> Tuple[float, List[str], float]:
    """δ(0, Conv(x)) over the act_tol-relaxed active set.

    ``act_tol`` defaults to ACT_TOL rescaled by the set scale.

    Returns (distance, active ids, smallest active gradient norm). With no
    active constraint the distance is +inf.
    """
    if act_tol is None:
        act_tol = cset.tolerance(ACT_TOL)
    ids = active_set(cset, x, act_tol)
    if not ids:
        return float("inf"), [], float("inf")
    normals = unit_normals(cset, x, ids)
    grads = [np.linalg.norm(cset[cid].gradient(np.asarray(x, dtype=float))) for cid in ids]
    hull = min_norm_in_hull(normals, ids)
    return hull.distance, ids, float(min(grads))


def beta0_bound(beta0: float, theta) -> float:
    """Lower bound β₀ / (|θ⁻¹|·|ᵗθ|) on the transformed set's β₀."""
    theta = np.asarray(theta, dtype=float)
    return beta0 / (np.linalg.norm(np.linalg.inv(theta), 2) * np.linalg.norm(theta.T, 2))


def _default_box(cset: ConstraintSet) -> Tuple[np.ndarray, np.ndarray]:
    if cset.box is not None:
        return cset.box
    return np.full(cset.dimension, -1.0), np.full(cset.dimension, 1.0)


def find_feasible_point(cset: ConstraintSet, seed: int = 0, box=None,
                        restarts: int = 32, margin: Optional[float] = None) -> np.ndarray:
    """A strictly feasible point, by random restarts and violation descent."""
    low, high = _default_box(cset) if box is None else (np.asarray(box[0], float),
                                                         np.asarray(box[1], float))
    margin = 1e-3 * cset.scale if margin is None else margin
    gen = keyed_generator(seed, 0, 0, FEASIBLE)

    def penalty(x):
        vals = cset.values(x)
        short = np.clip(margin - vals, 0.0, None)
        grads = cset.gradients(x)
        return float(short @ short), -2.0 * (short @ grads)

    for attempt in range(restarts):
        x0 = gen.uniform(low, high)
        if np.min(cset.values(x0)) > margin:
            return x0
        res = minimize(penalty, x0, jac=True, method="L-BFGS-B")
        if np.min(cset.values(res.x)) > 0.0:
            logger.debug("feasible point found after %d restarts", attempt + 1)
            return res.x
    raise SamplingError(f"no feasible point of '{cset.name}' found in {restarts} restarts")


class RaySampler:
    """Boundary points from random rays shot out of an interior point.

    Each ray is marched outwards until some constraint goes nonpositive, the
    crossing is located by bisection, and with probability ``refine_prob`` the
    point is pulled onto nearby faces as well so corners get sampled.
    """

    def __init__(self, cset: ConstraintSet, seed: int, act_tol: Optional[float] = None,
                 box=None, max_tries: int = 100, refine_prob: float = 0.5,
                 refine_radius: float = 0.25, interior=None):
        self.cset = cset
        self.seed = seed
        self.act_tol = cset.tolerance(ACT_TOL) if act_tol is None else act_tol
        self.box = _default_box(cset) if box is None else box
        self.max_tries = max_tries
        self.refine_prob = refine_prob
        self.refine_radius = refine_radius * cset.scale
        self._interior = None if interior is None else config_vector(interior, cset.dimension)
        self._interior_failed = False

    @property
    def interior(self) -> Optional[np.ndarray]:
        if self._interior is None and not self._interior_failed:
            try:
                self._interior = find_feasible_point(self.cset, self.seed, self.box)
            except SamplingError as e:
                logger.warning("%s", e)
                self._interior_failed = True
        return self._interior

    def _min_value(self, x) -> float:
        return float(np.min(self.cset.values(x)))

    def _cross(self, x0, u, reach) -> Optional[np.ndarray]:
        t_lo, t = 0.0, reach / 64.0
        while t <= 4.0 * reach:
            if self._min_value(x0 + t * u) <= 0.0:
                break
            t_lo, t = t, 2.0 * t
        else:
            return None
        t_hi = t
        for _ in range(200):
            mid = 0.5 * (t_lo + t_hi)
            if mid in (t_lo, t_hi):
                break
            if self._min_value(x0 + mid * u) > 0.0:
                t_lo = mid
            else:
                t_hi = mid
        return x0 + t_lo * u

    def _coactivate(self, x, gen) -> Optional[np.ndarray]:
        vals = self.cset.values(x)
        near = np.nonzero(vals <= self.refine_radius)[0]
        if near.size < 2:
            return None
        chosen = near[np.argsort(vals[near], kind="stable")]
        chosen = chosen[: gen.integers(2, chosen.size + 1)]
        y = x.copy()
        for _ in range(50):
            F = self.cset.values(y, chosen)[chosen]
            if np.all(np.abs(F) <= 0.25 * self.act_tol):
                break
            J = self.cset.gradients(y, chosen)[chosen]
            y = y - np.linalg.lstsq(J, F, rcond=None)[0]
        others = self.cset.values(y)
        if np.all(others >= -0.5 * self.act_tol) and np.min(others) <= self.act_tol:
            return y
        return None

    def sample(self, index: int) -> Optional[np.ndarray]:
        x0 = self.interior
        if x0 is None:
            return None
        gen = keyed_generator(self.seed, index, 0, SAMPLER)
        low, high = self.box
        reach = float(np.linalg.norm(np.asarray(high) - np.asarray(low))) + 1.0
        for _ in range(self.max_tries):
            u = gen.standard_normal(self.cset.dimension)
            u /= np.linalg.norm(u)
            xb = self._cross(x0, u, reach)
            if xb is None:
                continue
            if gen.uniform() < self.refine_prob:
                refined = self._coactivate(xb, gen)
                if refined is not None:
                    return refined
            return xb
        return None


def observed_hessian_bound(cset: ConstraintSet, box, n_points: int = 16,
                           seed: int = 0, h: float = 1e-5) -> float:
    """Largest spectral norm of finite-difference Hessians over random box points."""
    low, high = (np.asarray(b, dtype=float) for b in box)
    gen = keyed_generator(seed, 1, 0, FEASIBLE)
    eye = np.eye(cset.dimension)
    worst = 0.0
    for _ in range(n_points):
        x = gen.uniform(low, high)
        for c in cset.constraints:
            H = np.column_stack([(c.gradient(x + h * e) - c.gradient(x - h * e)) / (2 * h)
                                 for e in eye])
            worst = max(worst, float(np.linalg.norm(0.5 * (H + H.T), 2)))
    return worst


@dataclass
class _PointResult:
    index: int
    distance: float
    point: Optional[np.ndarray]
    active: List[str]
    grad_min: float
    failed: bool = False
    degenerate: Optional[str] = None


def _examine(cset: ConstraintSet, sampler: BoundarySampler, index: int,
             act_tol: float) -> _PointResult:
    x = sampler.sample(index)
    if x is None:
        return _PointResult(index, float("inf"), None, [], float("inf"), failed=True)
    try:
        distance, ids, grad_min = hull_distance_at(cset, x, act_tol)
    except ConstraintValidityError as e:
        return _PointResult(index, float("inf"), x, [], float("inf"),
                            degenerate=e.constraint_id)
    if not ids:
        return _PointResult(index, float("inf"), x, [], float("inf"), failed=True)
    return _PointResult(index, distance, x, ids, grad_min)


def check_compatibility(cset: ConstraintSet, sampler: BoundarySampler, n_samples: int,
                        act_tol: Optional[float] = None, refute_tol: float = REFUTE_TOL,
                        workers: int = 1, hessian_samples: int = 8,
                        seed: int = 0) -> CompatReport:
    """Certify compatibility at ``n_samples`` sampled boundary points.

    The result does not depend on ``workers``: points are examined in fixed
    chunks and the worst point is chosen by (distance, sample index).
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if act_tol is None:
        act_tol = getattr(sampler, "act_tol", None) or cset.tolerance(ACT_TOL)
    chunks = [range(s, min(s + CHUNK, n_samples)) for s in range(0, n_samples, CHUNK)]

    def run_chunk(chunk):
        return [_examine(cset, sampler, i, act_tol) for i in chunk]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = [r for part in pool.map(run_chunk, chunks) for r in part]
    else:
        results = [r for chunk in chunks for r in run_chunk(chunk)]

    good = [r for r in results if not r.failed and r.degenerate is None]
    failed = sum(1 for r in results if r.failed)
    degenerate = next((r.degenerate for r in results if r.degenerate is not None), None)
    declared = max((c.hessian_bound for c in cset.constraints), default=0.0)

    box = _default_box(cset)
    observed = None
    if hessian_samples > 0:
        observed = observed_hessian_bound(cset, box, hessian_samples, seed)
        if observed > declared * (1.0 + 1e-4) + 1e-6:
            logger.warning("observed Hessian norm %.4g exceeds declared bound %.4g on box",
                           observed, declared)

    if good:
        worst = min(good, key=lambda r: (r.distance, r.index))
        beta0, worst_point, worst_active = worst.distance, worst.point, worst.active
        grad_floor = min(r.grad_min for r in good)
    else:
        beta0, worst_point, worst_active, grad_floor = float("inf"), None, [], float("inf")

    # a refuting sample decides the verdict even when other samples were unusable
    if good and beta0 <= refute_tol:
        verdict = REFUTED
    elif degenerate is not None or failed > 0 or not good:
        verdict = DEGENERATE
    else:
        verdict = CERTIFIED
    logger.info("compatibility of '%s': %s (beta0 %.6g over %d samples)",
                cset.name, verdict, beta0, len(good))
    return CompatReport(
        beta0_estimate=beta0,
        grad_floor_observed=grad_floor,
        hessian_bound_declared=declared,
        samples_checked=len(good),
        worst_point=worst_point,
        verdict=verdict,
        worst_active=worst_active,
        failed_samples=failed,
        degenerate_constraint=degenerate,
        hessian_bound_observed=observed,
        hessian_box=([float(v) for v in box[0]], [float(v) for v in box[1]]),
        interior_point=getattr(sampler, "interior", None),
        near_active_tolerance=act_tol,
    )


def _transformed(c: Constraint, theta: np.ndarray, inv_norm: float, norm: float) -> Constraint:
    tt = theta.T
    return Constraint(
        id=c.id,
        value=lambda y: c.value(np.asarray(y, dtype=float) @ tt),
        gradient=lambda y: np.asarray(c.gradient(np.asarray(y, dtype=float) @ tt)) @ theta,
        hessian_bound=c.hessian_bound * norm ** 2,
        grad_floor=c.grad_floor / inv_norm,
    )


def transform_set(cset: ConstraintSet, theta) -> ConstraintSet:
    """Constraints g(y) = f(θy) on the image θ⁻¹D.

    Gradients become ᵗθ∇f(θy); the Hessian bound scales by |θ|² and the
    gradient floor by 1/|θ⁻¹|. The obliquity becomes θ⁻¹Θ, so transforming
    by Θ itself yields normal reflection.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (cset.dimension, cset.dimension):
        raise DimensionError(f"theta has shape {theta.shape}, expected "
                             f"({cset.dimension}, {cset.dimension})")
    check_invertible(theta)
    inv = np.linalg.inv(theta)
    norm = float(np.linalg.norm(theta, 2))
    inv_norm = float(np.linalg.norm(inv, 2))
    cons = [_transformed(c, theta, inv_norm, norm) for c in cset.constraints]
    box = None
    if cset.box is not None:
        low, high = cset.box
        center, half = 0.5 * (low + high), 0.5 * (high - low)
        c2, h2 = inv @ center, np.abs(inv) @ half
        box = (c2 - h2, c2 + h2)
    return ConstraintSet(cons, cset.dimension, obliquity=inv @ cset.obliquity,
                         scale=cset.scale, box=box, name=f"{cset.name}@theta")


def _lifted(c: Constraint, k: int) -> Constraint:
    return Constraint(
        id=c.id,
        value=lambda z: c.value(np.insert(np.asarray(z, dtype=float), k, 0.0, axis=-1)),
        gradient=lambda z: np.delete(
            np.asarray(c.gradient(np.insert(np.asarray(z, dtype=float), k, 0.0, axis=-1))),
            k, axis=-1),
        hessian_bound=c.hessian_bound,
        grad_floor=c.grad_floor,
    )


def project_set(cset: ConstraintSet, dropped_coord: int, n_points: int = 64,
                tol: float = 1e-9, seed: int = 0) -> ConstraintSet:
    """Drop a coordinate every constraint ignores: f̲(z) = f(z with 0 at ``dropped_coord``)."""
    D = cset.dimension
    k = int(dropped_coord)
    if not 0 <= k < D or D < 2:
        raise DimensionError(f"cannot drop coordinate {k} of a {D}-dimensional set")
    low, high = _default_box(cset)
    gen = keyed_generator(seed, 2, 0, FEASIBLE)
    sample = gen.uniform(low, high, size=(n_points, D))
    shifted = sample.copy()
    shifted[:, k] = gen.uniform(-10.0, 10.0, size=n_points) * max(1.0, float(np.max(np.abs(high))))
    zeroed = sample.copy()
    zeroed[:, k] = 0.0
    for c in cset.constraints:
        gap = np.max(np.abs(c.value(shifted) - c.value(zeroed)))
        if gap > tol:
            raise InvarianceError(
                f"constraint '{c.id}' depends on coordinate {k} (value gap {gap:.3e})",
                constraint_id=c.id)
    theta = cset.obliquity
    off = np.concatenate([np.delete(theta[k], k), np.delete(theta[:, k], k)])
    if np.any(off != 0.0):
        raise InvarianceError(f"obliquity mixes coordinate {k} with the others")
    box = None
    if cset.box is not None:
        box = (np.delete(cset.box[0], k), np.delete(cset.box[1], k))
    return ConstraintSet([_lifted(c, k) for c in cset.constraints], D - 1,
                         obliquity=np.delete(np.delete(theta, k, axis=0), k, axis=1),
                         scale=cset.scale, box=box, name=f"{cset.name}/x{k}")


__all__ = [
    "BoundarySampler", "CompatReport", "RaySampler", "beta0_bound", "check_compatibility",
    "find_feasible_point", "hull_distance_at", "observed_hessian_bound", "project_set",
    "transform_set", "CERTIFIED", "REFUTED", "DEGENERATE", "OPT_TOL",
]
