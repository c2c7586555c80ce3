"""
Reflected SDE solver.

One step is an Euler–Maruyama prediction followed by a Skorokhod correction
that pushes the predicted point back into the domain along the oblique
directions Θ·ᵗΘ·∇f. The correction is a projected Gauss–Seidel iteration on
the per-constraint multipliers: each sweep visits the violated (or already
pushing) constraints deepest first, re-evaluates value and gradient at the
moving iterate and updates the multiplier, clipped at zero. The multiplier of
a constraint is its local-time increment for the step.

The same kernel advances a single path (shape (1, D)) and a whole chunk of an
ensemble (shape (N, D)); every path draws its noise from its own
counter-based stream, so ensembles are reproducible at any worker count.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, NamedTuple, Optional, Union

import numpy as np
from scipy import stats

from .compat import transform_set
from .errors import ModelError, SimulationError, StepFailure
from .geometry import ConstraintSet, check_invertible, config_vector
from .rng import EnsembleNoise, PathNoise, check_seed

logger = logging.getLogger(__name__)

ACT_TOL = 1e-8
MAX_SWEEPS = 50
CHUNK = 256

Matrix = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass
class DynamicsSpec:
    """Coefficients of dX = σ(X)dW + b(X)dt + Σ Θ·ᵗΘ∇f(X) dL_f.

    ``sigma`` is either a constant D×D matrix or a callable mapping (..., D)
    to (..., D, D); ``drift`` maps (..., D) to (..., D).
    """
    cset: ConstraintSet
    sigma: Matrix
    drift: Callable[[np.ndarray], np.ndarray]
    potential: Optional[object] = None
    lipschitz_note: str = ""
    feas_tol: Optional[float] = None
    act_tol: Optional[float] = None
    max_sweeps: int = MAX_SWEEPS
    name: str = "dynamics"
    _rank: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.feas_tol is None:
            self.feas_tol = 1e-9 * self.cset.scale
        if self.act_tol is None:
            self.act_tol = self.cset.tolerance(ACT_TOL)
        if self.feas_tol <= 0 or self.act_tol <= 0:
            raise ValueError("feas_tol and act_tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if not callable(self.sigma):
            self.sigma = np.asarray(self.sigma, dtype=float)
            D = self.cset.dimension
            if self.sigma.shape != (D, D):
                raise ValueError(f"sigma has shape {self.sigma.shape}, expected ({D}, {D})")
        ids = self.cset.ids
        order = sorted(range(len(ids)), key=lambda k: ids[k])
        self._rank = np.empty(len(ids), dtype=int)
        self._rank[order] = np.arange(len(ids))

    @property
    def dimension(self) -> int:
        return self.cset.dimension

    @property
    def constant_sigma(self) -> Optional[np.ndarray]:
        return None if callable(self.sigma) else self.sigma

    def diffuse(self, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """σ(X)·Z row by row."""
        if self.constant_sigma is not None:
            return Z @ self.constant_sigma.T
        return np.einsum("nij,nj->ni", self.sigma(X), Z)

    def check_coefficients(self, points) -> None:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        Z = np.ones_like(points)
        if not (np.all(np.isfinite(self.diffuse(points, Z)))
                and np.all(np.isfinite(self.drift(points)))):
            raise ValueError(f"dynamics '{self.name}' has non-finite coefficients at sampled points")


def gradient_dynamics(cset: ConstraintSet, potential, **kwargs) -> DynamicsSpec:
    """σ = Θ and b = −½Θ·ᵗΘ∇Φ, the form whose reversible law is 1_D e^{−Φ}."""
    M = cset.reflection_matrix

    def drift(x):
        return -0.5 * (potential.gradient(x) @ M)

    kwargs.setdefault("name", f"gradient-{cset.name}")
    return DynamicsSpec(cset, cset.obliquity.copy(), drift, potential=potential, **kwargs)


def n_steps(T: float, dt: float) -> int:
    if not (dt > 0 and T > 0):
        raise ValueError("T and dt must be positive")
    if dt >= T:
        raise ValueError(f"dt = {dt} must be smaller than T = {T}")
    return int(math.ceil(T / dt - 1e-9))


@dataclass
class PathRecord:
    times: np.ndarray
    states: np.ndarray
    local_times: Dict[str, np.ndarray]
    seed: int
    dt: float
    step_minima: np.ndarray
    path_index: int = 0
    retried_steps: List[int] = field(default_factory=list)

    @property
    def ids(self) -> List[str]:
        return list(self.local_times)

    def __len__(self) -> int:
        return self.states.shape[0]

    def increments(self) -> np.ndarray:
        """Per-step local-time increments, shape (steps, constraints)."""
        if not self.local_times:
            return np.zeros((len(self) - 1, 0))
        return np.diff(np.column_stack(list(self.local_times.values())), axis=0)

    def check_support(self, act_tol: float = ACT_TOL) -> int:
        """Number of (step, constraint) pairs pushing while the constraint stayed above act_tol."""
        dL = self.increments()
        return int(np.count_nonzero((dL > 0.0) & (self.step_minima > act_tol)))

    def min_feasibility(self, cset: ConstraintSet) -> float:
        return float(np.min(cset.values(self.states)))

    def reversed(self) -> "PathRecord":
        """Time reversal: states run backwards and L̃(t) = L(T) − L(T − t)."""
        local = {cid: L[-1] - L[::-1] for cid, L in self.local_times.items()}
        return PathRecord(self.times.copy(), self.states[::-1].copy(), local, self.seed,
                          self.dt, self.step_minima[::-1].copy(), self.path_index,
                          sorted(len(self.times) - 2 - k for k in self.retried_steps))

    def rows(self):
        """(time, state, cumulative local times) per grid point."""
        for k, t in enumerate(self.times):
            yield float(t), self.states[k], {cid: float(L[k]) for cid, L in self.local_times.items()}


class _Correction(NamedTuple):
    x: np.ndarray
    dL: np.ndarray
    minima: np.ndarray
    final_min: np.ndarray
    failed: np.ndarray
    worst: np.ndarray
    violation: np.ndarray


def _correct(spec: DynamicsSpec, y: np.ndarray) -> _Correction:
    cset = spec.cset
    M = cset.reflection_matrix
    N = y.shape[0]
    m = len(cset)
    settle = 1e-3 * spec.feas_tol
    xi = y.copy()
    lam = np.zeros((N, m))
    minima = np.full((N, m), np.inf)
    final_min = np.full(N, np.inf)
    moved = np.full(N, np.inf)
    failed = np.zeros(0, dtype=int)
    worst = np.zeros(0, dtype=int)
    violation = np.zeros(0)
    pending = np.arange(N)
    sweeps = 0
    while True:
        sub = xi[pending]
        idx = np.union1d(cset.candidates(sub, spec.act_tol),
                         np.nonzero(lam[pending].any(axis=0))[0])
        vals = cset.values(sub, idx)
        minima[pending] = np.minimum(minima[pending], vals)
        final_min[pending] = vals.min(axis=1, initial=np.inf)
        selected = (vals < 0.0) | (lam[pending] > 0.0)
        feasible = np.all(vals >= -spec.feas_tol, axis=1)
        done = feasible & (~selected.any(axis=1) | (moved[pending] <= settle))
        if sweeps == spec.max_sweeps:
            bad = ~feasible
            failed = pending[bad]
            worst = np.argmin(vals[bad], axis=1)
            violation = -vals[bad].min(axis=1, initial=np.inf)
            break
        keep = ~done
        pending, vals, selected = pending[keep], vals[keep], selected[keep]
        if pending.size == 0:
            break
        sweeps += 1
        key = np.where(selected, vals, np.inf)
        order = np.lexsort((np.broadcast_to(spec._rank, key.shape), key))
        counts = selected.sum(axis=1)
        step_move = np.zeros(pending.size)
        for r in range(int(counts.max())):
            col = order[:, r]
            live = r < counts
            for k in np.unique(col[live]):
                local = np.nonzero(live & (col == k))[0]
                rows = pending[local]
                c = cset.constraints[k]
                X = xi[rows]
                f = np.asarray(c.value(X), dtype=float)
                g = np.asarray(c.gradient(X), dtype=float)
                Mg = g @ M
                denom = np.einsum("ij,ij->i", g, Mg)
                with np.errstate(divide="ignore", invalid="ignore"):
                    new = np.where(denom > 0.0, np.maximum(lam[rows, k] - f / denom, 0.0),
                                   lam[rows, k])
                delta = new - lam[rows, k]
                xi[rows] += delta[:, None] * Mg
                lam[rows, k] = new
                minima[rows, k] = np.minimum(minima[rows, k], f)
                step_move[local] = np.maximum(step_move[local],
                                              np.abs(delta) * np.linalg.norm(Mg, axis=1))
        moved[pending] = step_move
    if sweeps > 1:
        logger.debug("correction used %d sweeps for %d rows", sweeps, N)
    return _Correction(xi, lam, minima, final_min, failed, worst, violation)


def _advance(spec: DynamicsSpec, X: np.ndarray, Z: np.ndarray, dt: float) -> _Correction:
    y = X + math.sqrt(dt) * spec.diffuse(X, Z) + dt * spec.drift(X)
    broken = ~np.all(np.isfinite(y), axis=1)
    if broken.any():
        y[broken] = X[broken]
        res = _correct(spec, y)
        failed = np.union1d(res.failed, np.nonzero(broken)[0])
        worst = np.zeros(failed.size, dtype=int)
        violation = np.full(failed.size, np.inf)
        return res._replace(failed=failed, worst=worst, violation=violation)
    return _correct(spec, y)


def _failure(spec: DynamicsSpec, res: _Correction, step_index: Optional[int]) -> StepFailure:
    k = int(res.worst[0]) if res.worst.size else 0
    cid = spec.cset.constraints[k].id if len(spec.cset) else None
    v = float(res.violation[0]) if res.violation.size else float("nan")
    return StepFailure(f"correction did not converge in {spec.max_sweeps} sweeps "
                       f"(constraint '{cid}' violated by {v:.3e})",
                       constraint_id=cid, violation=v, step_index=step_index)


def step(spec: DynamicsSpec, x, dt: float, noise) -> tuple:
    """One predicted and corrected step; returns (x_next, {id: dL})."""
    x = config_vector(x, spec.dimension)
    if dt <= 0:
        raise ValueError("dt must be positive")
    if np.min(spec.cset.values(x), initial=np.inf) < -spec.feas_tol:
        raise ValueError("step needs a feasible starting point")
    z = np.asarray(noise, dtype=float).reshape(1, spec.dimension)
    res = _advance(spec, x[None, :], z, dt)
    if res.failed.size:
        raise _failure(spec, res, None)
    return res.x[0], dict(zip(spec.cset.ids, res.dL[0].tolist()))


def _retry(spec: DynamicsSpec, x: np.ndarray, z: np.ndarray, bridge: np.ndarray,
           dt: float, step_index: int):
    """Redo one step as two half steps whose increments sum to the full one."""
    halves = ((z + bridge) / math.sqrt(2.0), (z - bridge) / math.sqrt(2.0))
    X = x[None, :]
    total = np.zeros((1, len(spec.cset)))
    minima = np.full((1, len(spec.cset)), np.inf)
    for h in halves:
        res = _advance(spec, X, h[None, :], 0.5 * dt)
        if res.failed.size:
            raise _failure(spec, res, step_index)
        X = res.x
        total += res.dL
        minima = np.minimum(minima, res.minima)
    return X[0], total[0], minima[0], float(res.final_min[0])


def _check_start(spec: DynamicsSpec, x0: np.ndarray) -> None:
    vals = spec.cset.values(x0)
    if vals.size and np.any(np.min(vals, axis=-1) <= 0.0):
        raise ModelError(f"starting point is not strictly inside '{spec.cset.name}'")
    spec.check_coefficients(x0)


def _record(spec, times, states, dls, minima, seed, dt, path, retried, upto) -> PathRecord:
    cum = np.vstack([np.zeros((1, dls.shape[1])), np.cumsum(dls[:upto], axis=0)])
    local = {cid: cum[:, k].copy() for k, cid in enumerate(spec.cset.ids)}
    return PathRecord(times[: upto + 1].copy(), states[: upto + 1].copy(), local, seed, dt,
                      minima[:upto].copy(), path, list(retried))


def simulate(spec: DynamicsSpec, x0, T: float, dt: float, seed: int,
             path: int = 0, noise=None) -> PathRecord:
    """Integrate one path over ⌈T/dt⌉ steps.

    ``noise`` may replace the default counter-based stream of (seed, path);
    it must provide ``normals(step)`` and ``bridge(step)``.
    """
    seed = check_seed(seed)
    x = config_vector(x0, spec.dimension)
    steps = n_steps(T, dt)
    _check_start(spec, x)
    noise = PathNoise(seed, path, spec.dimension) if noise is None else noise
    m = len(spec.cset)
    times = dt * np.arange(steps + 1)
    states = np.empty((steps + 1, spec.dimension))
    states[0] = x
    dls = np.zeros((steps, m))
    minima = np.full((steps, m), np.inf)
    retried: List[int] = []
    for k in range(steps):
        z = np.asarray(noise.normals(k), dtype=float)
        res = _advance(spec, x[None, :], z[None, :], dt)
        if res.failed.size:
            logger.debug("step %d failed, retrying with two half steps", k)
            try:
                x, dl, mins, _ = _retry(spec, x, z, np.asarray(noise.bridge(k)), dt, k)
            except StepFailure as e:
                partial = _record(spec, times, states, dls, minima, seed, dt, path, retried, k)
                raise SimulationError(f"path {path} failed at step {k}: {e}",
                                      partial=partial, cause=e) from e
            retried.append(k)
            dls[k], minima[k] = dl, mins
        else:
            x = res.x[0]
            dls[k], minima[k] = res.dL[0], res.minima[0]
        states[k + 1] = x
    if retried:
        logger.info("path %d: %d steps needed a retry", path, len(retried))
    return _record(spec, times, states, dls, minima, seed, dt, path, retried, steps)


@dataclass
class EnsembleResult:
    initial: np.ndarray
    final: np.ndarray
    local_times: np.ndarray
    ids: List[str]
    seed: int
    dt: float
    steps: int
    support_violations: int = 0
    min_feasibility: float = float("inf")
    retried: int = 0
    snapshots: Optional[np.ndarray] = None
    snapshot_steps: Optional[np.ndarray] = None
    time_average: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.initial.shape[0]


def _run_chunk(spec: DynamicsSpec, x0s: np.ndarray, paths: np.ndarray, steps: int, dt: float,
               seed: int, record_every: Optional[int], average_from: Optional[int]) -> dict:
    noise = EnsembleNoise(seed, paths, spec.dimension)
    X = x0s.copy()
    m = len(spec.cset)
    total = np.zeros((X.shape[0], m))
    snaps = []
    avg = np.zeros_like(X) if average_from is not None else None
    out = {"support": 0, "feas": float("inf"), "retried": 0}
    for k in range(steps):
        Z = noise.normals(k)
        res = _advance(spec, X, Z, dt)
        Xn, dL, minima = res.x, res.dL, res.minima
        final_min = res.final_min
        for row in res.failed:
            try:
                xr, dl, mins, fmin = _retry(spec, X[row], Z[row], noise.bridge(k, [row])[0], dt, k)
            except StepFailure as e:
                raise SimulationError(f"path {paths[row]} failed at step {k}: {e}",
                                      cause=e) from e
            Xn[row], dL[row], minima[row], final_min[row] = xr, dl, mins, fmin
            out["retried"] += 1
        X = Xn
        total += dL
        out["support"] += int(np.count_nonzero((dL > 0.0) & (minima > spec.act_tol)))
        out["feas"] = min(out["feas"], float(final_min.min(initial=np.inf)))
        if record_every and (k + 1) % record_every == 0:
            snaps.append(X.copy())
        if avg is not None and k + 1 >= average_from:
            avg += X
    out.update(final=X, total=total, snaps=snaps, avg=avg)
    return out


def simulate_ensemble(spec: DynamicsSpec, x0s, T: float, dt: float, seed: int,
                      workers: int = 1, record_every: Optional[int] = None,
                      average_from: Optional[float] = None) -> EnsembleResult:
    """Independent paths started at the rows of ``x0s``; path i uses stream (seed, i).

    ``record_every`` keeps every k-th state of every path; ``average_from``
    accumulates each path's time average over grid times ≥ that time.
    """
    seed = check_seed(seed)
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    if x0s.shape[1] != spec.dimension:
        raise ValueError(f"starting points have dimension {x0s.shape[1]}, "
                         f"expected {spec.dimension}")
    steps = n_steps(T, dt)
    _check_start(spec, x0s)
    first_avg = None
    if average_from is not None:
        first_avg = min(max(int(math.ceil(average_from / dt - 1e-9)), 1), steps)
    N = x0s.shape[0]
    chunks = [np.arange(s, min(s + CHUNK, N)) for s in range(0, N, CHUNK)]

    def run(paths):
        return _run_chunk(spec, x0s[paths], paths, steps, dt, seed, record_every, first_avg)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(paths) for paths in chunks]

    snapshots = snapshot_steps = time_average = None
    if record_every:
        snapshots = np.concatenate([np.stack(p["snaps"], axis=0) for p in parts], axis=1) \
            if parts[0]["snaps"] else np.zeros((0, N, spec.dimension))
        snapshot_steps = record_every * np.arange(1, snapshots.shape[0] + 1)
    if first_avg is not None:
        time_average = np.concatenate([p["avg"] for p in parts]) / (steps - first_avg + 1)
    result = EnsembleResult(
        initial=x0s.copy(),
        final=np.concatenate([p["final"] for p in parts]),
        local_times=np.concatenate([p["total"] for p in parts]),
        ids=spec.cset.ids,
        seed=seed,
        dt=dt,
        steps=steps,
        support_violations=sum(p["support"] for p in parts),
        min_feasibility=min(p["feas"] for p in parts),
        retried=sum(p["retried"] for p in parts),
        snapshots=snapshots,
        snapshot_steps=snapshot_steps,
        time_average=time_average,
    )
    logger.info("ensemble of %d paths over %d steps done (%d retries)", N, steps, result.retried)
    return result


def transform_dynamics(spec: DynamicsSpec) -> DynamicsSpec:
    """Normal-reflection system in Y = Θ⁻¹X.

    Coefficients become Θ⁻¹σ(Θy) and Θ⁻¹b(Θy), constraints f(Θy). Driven by
    the same noise, Θ·Y tracks X step for step.
    """
    theta = spec.cset.obliquity
    check_invertible(theta)
    if spec.cset.is_normal:
        return spec
    inv = np.linalg.inv(theta)
    cset = transform_set(spec.cset, theta)
    cset.obliquity = np.eye(spec.dimension)
    tt = theta.T

    def drift(y):
        return spec.drift(np.asarray(y, dtype=float) @ tt) @ inv.T

    if spec.constant_sigma is not None:
        sigma = inv @ spec.constant_sigma
    else:
        def sigma(y):
            return inv @ spec.sigma(np.asarray(y, dtype=float) @ tt)

    potential = None
    if spec.potential is not None:
        potential = spec.potential.transformed(theta)
    return DynamicsSpec(cset, sigma, drift, potential=potential,
                        lipschitz_note=spec.lipschitz_note, feas_tol=spec.feas_tol,
                        act_tol=spec.act_tol, max_sweeps=spec.max_sweeps,
                        name=f"{spec.name}@normal")


@dataclass
class ReversibilityReport:
    verdict: str
    alpha: float
    n_paths: int
    bowker_statistic: float = float("nan")
    bowker_df: int = 0
    bowker_pvalue: float = float("nan")
    hotelling_statistic: float = float("nan")
    hotelling_pvalue: float = float("nan")
    ks_statistics: List[float] = field(default_factory=list)
    ks_pvalues: List[float] = field(default_factory=list)
    reason: str = ""

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "alpha": self.alpha,
            "n_paths": self.n_paths,
            "bowker_statistic": self.bowker_statistic,
            "bowker_df": self.bowker_df,
            "bowker_pvalue": self.bowker_pvalue,
            "hotelling_statistic": self.hotelling_statistic,
            "hotelling_pvalue": self.hotelling_pvalue,
            "ks_statistics": list(self.ks_statistics),
            "ks_pvalues": list(self.ks_pvalues),
            "reason": self.reason,
        }


def _cells(a: np.ndarray, b: np.ndarray, bins: int) -> tuple:
    """Quantile-grid cell index of each row of ``a`` and ``b`` (pooled edges)."""
    pooled = np.vstack([a, b])
    ca = np.zeros(a.shape[0], dtype=int)
    cb = np.zeros(b.shape[0], dtype=int)
    for j in range(pooled.shape[1]):
        edges = np.quantile(pooled[:, j], np.linspace(0, 1, bins + 1)[1:-1])
        ca = ca * bins + np.searchsorted(edges, a[:, j], side="right")
        cb = cb * bins + np.searchsorted(edges, b[:, j], side="right")
    return ca, cb


def bowker_symmetry(a: np.ndarray, b: np.ndarray, bins: int) -> tuple:
    """Bowker's χ² for symmetry of the (cell(a), cell(b)) contingency table."""
    ca, cb = _cells(a, b, bins)
    cells = bins ** a.shape[1]
    table = np.zeros((cells, cells))
    np.add.at(table, (ca, cb), 1.0)
    upper = np.triu_indices(cells, 1)
    n_ab, n_ba = table[upper], table.T[upper]
    used = (n_ab + n_ba) > 0
    df = int(used.sum())
    if df == 0:
        return 0.0, 0, 1.0
    stat = float(np.sum((n_ab[used] - n_ba[used]) ** 2 / (n_ab[used] + n_ba[used])))
    return stat, df, float(stats.chi2.sf(stat, df))


def _antisymmetric_features(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    D = a.shape[1]
    cols = [a[:, i] ** 2 * b[:, i] - a[:, i] * b[:, i] ** 2 for i in range(D)]
    for i in range(D):
        for j in range(D):
            if i < j:
                cols.append(a[:, i] * b[:, j] - a[:, j] * b[:, i])
            if i != j:
                cols.append(a[:, i] ** 2 * b[:, j] - b[:, i] ** 2 * a[:, j])
    return np.column_stack(cols)


def hotelling_antisymmetry(a: np.ndarray, b: np.ndarray) -> tuple:
    """Hotelling T² that antisymmetric cross moments h(a, b) = −h(b, a) have mean zero."""
    pooled = np.vstack([a, b])
    scale = pooled.std(axis=0)
    scale[scale == 0.0] = 1.0
    center = pooled.mean(axis=0)
    H = _antisymmetric_features((a - center) / scale, (b - center) / scale)
    n, p = H.shape
    if n <= p + 1:
        return float("nan"), float("nan")
    mean = H.mean(axis=0)
    cov = np.cov(H, rowvar=False)
    try:
        t2 = float(n * mean @ np.linalg.solve(np.atleast_2d(cov), mean))
    except np.linalg.LinAlgError:
        return float("nan"), float("nan")
    F = (n - p) / (p * (n - 1)) * t2
    return t2, float(stats.f.sf(F, p, n - p))


def reversibility_test(spec: DynamicsSpec, n_paths: int, T: float, dt: float, seed: int,
                       alpha: float = 0.01, initial=None, gibbs=None, workers: int = 1,
                       bins: Optional[int] = None, min_paths: int = 200) -> ReversibilityReport:
    """Swap symmetry of (X(0), X(T)) and stationarity of X(T) with X(0) ~ μ.

    X(0) is drawn by rejection from 1_D e^{−Φ} unless ``initial`` is given.
    Bowker's test on a quantile grid (first two coordinates) and a Hotelling
    test on antisymmetric moments check swap symmetry; two-sample KS tests
    per coordinate check the marginal at T against X(0). The family of tests
    shares ``alpha`` by Bonferroni.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must be in (0, 1)")
    if initial is None:
        from .gibbs import BoxEnvelope, GibbsSpec, sample_rejection
        if gibbs is None:
            if spec.potential is None or spec.cset.box is None:
                raise ModelError("reversibility test needs a potential and a box envelope, "
                                 "or explicit initial states")
            gibbs = GibbsSpec(spec.cset, spec.potential, BoxEnvelope(*spec.cset.box))
        initial = sample_rejection(gibbs, n_paths, seed)
    X0 = np.atleast_2d(np.asarray(initial, dtype=float))[:n_paths]
    N = X0.shape[0]
    report = ReversibilityReport("inconclusive", alpha, N)
    if N < min_paths:
        report.reason = f"{N} paths is below the minimum of {min_paths}"
        return report
    ens = simulate_ensemble(spec, X0, T, dt, seed, workers=workers)
    XT = ens.final
    D = spec.dimension
    sub = slice(0, min(D, 2))
    bins = bins if bins is not None else (5 if D == 1 else 3)
    n_tests = 2 + D
    level = alpha / n_tests

    report.bowker_statistic, report.bowker_df, report.bowker_pvalue = \
        bowker_symmetry(X0[:, sub], XT[:, sub], bins)
    report.hotelling_statistic, report.hotelling_pvalue = hotelling_antisymmetry(X0, XT)
    for j in range(D):
        ks = stats.ks_2samp(X0[:, j], XT[:, j])
        report.ks_statistics.append(float(ks.statistic))
        report.ks_pvalues.append(float(ks.pvalue))

    if report.bowker_df == 0 or not np.isfinite(report.hotelling_pvalue):
        report.reason = "too few distinct transitions for the symmetry tests"
        return report
    pvalues = [report.bowker_pvalue, report.hotelling_pvalue] + report.ks_pvalues
    worst = min(pvalues)
    report.verdict = "fail" if worst < level else "pass"
    report.reason = f"smallest p-value {worst:.3g} against level {level:.3g}"
    logger.info("reversibility of '%s': %s (%s)", spec.name, report.verdict, report.reason)
    return report


__all__ = [
    "DynamicsSpec", "EnsembleResult", "PathRecord", "ReversibilityReport", "bowker_symmetry",
    "gradient_dynamics", "hotelling_antisymmetry", "n_steps", "reversibility_test",
    "simulate", "simulate_ensemble", "step", "transform_dynamics",
]
