"""
Hard particles around an attractive planet.

A configuration of n particles in dimension d is one vector of length
n(d+1) laid out particle by particle as (x₁, x̆₁, …, x_n, x̆_n): a position
x_i and a radius x̆_i ∈ [r₋, r₊]. Particles may not overlap each other or
the planet (a ball of radius R at the origin) and are pulled towards it by a
gravity potential G(|x_i|). At temperature τ the equilibrium law is
proportional to 1_D e^{−ΣG(|x_i|)/τ²}; as τ → 0 configurations that do not
pack tightly around the planet become rare.
"""

import logging
import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize

from .compat import ACT_TOL, CompatReport, check_compatibility
from .errors import IntegrabilityError, ModelError
from .geometry import Constraint, ConstraintSet, active_set, check_gradients, config_vector
from .gibbs import (ETA, BoxEnvelope, GibbsSpec, Integrability, Potential, TailInfo,
                    check_integrability, estimate_ell, sample_rejection)
from .reflect import DynamicsSpec, PathRecord, gradient_dynamics
from .rng import MASK64, SAMPLER, SEARCH, keyed_generator
from .unionfind import UnionFind

logger = logging.getLogger(__name__)

GRID_THRESHOLD = 64
RHO_MAX_FACTOR = 1e3
CONTACT_TOL = 1e-12


@dataclass
class Gravity:
    """G with its first two derivatives, each vectorised over ρ > 0."""
    G: Callable[[np.ndarray], np.ndarray]
    dG: Callable[[np.ndarray], np.ndarray]
    d2G: Callable[[np.ndarray], np.ndarray]
    name: str = "gravity"


def log_gravity(c: float = 1.0) -> Gravity:
    """G(ρ) = c ln ρ, whose drift is −c/ρ towards the planet."""
    if c <= 0:
        raise ModelError("log gravity needs c > 0")
    return Gravity(lambda r: c * np.log(r), lambda r: c / np.asarray(r, dtype=float),
                   lambda r: -c / np.asarray(r, dtype=float) ** 2, name=f"{c:g}*ln")


def zero_gravity() -> Gravity:
    """G ≡ 0; breaks the growth hypotheses, used only as a control."""
    return Gravity(lambda r: np.zeros(np.shape(r)), lambda r: np.zeros(np.shape(r)),
                   lambda r: np.zeros(np.shape(r)), name="zero")


@dataclass
class GravityCheck:
    ok: bool
    ell: float
    problems: List[str] = field(default_factory=list)


def check_gravity(gravity: Gravity, span: Tuple[float, float] = (0.5, 1e6),
                  points: int = 2000) -> GravityCheck:
    """G′ > 0, G″ ≤ 0 and ρG′(ρ) bounded below by a positive constant on ``span``."""
    rho = np.geomspace(span[0], span[1], points)
    problems = []
    d1 = np.asarray(gravity.dG(rho), dtype=float)
    d2 = np.asarray(gravity.d2G(rho), dtype=float)
    if not np.all(d1 > 0.0):
        problems.append(f"G' is not positive at rho = {rho[np.argmin(d1 > 0)]:.4g}")
    if not np.all(d2 <= 0.0):
        problems.append(f"G'' is positive at rho = {rho[np.argmax(d2 > 0)]:.4g}")
    ell = estimate_ell(gravity, span)
    if not ell > 0.0:
        problems.append(f"rho*G' has no positive lower bound on the tail (min {ell:.4g})")
    return GravityCheck(not problems, ell, problems)


@dataclass
class PlanetModel:
    n: int
    d: int
    R: float
    r_minus: float
    r_plus: float
    elasticity: float
    temperature: float
    gravity: Gravity
    container: Optional[float] = None
    eta: float = ETA

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ModelError("planet model needs n >= 1 and d >= 1")
        if self.R <= 0:
            raise ModelError("planet radius must be positive")
        if not 0 < self.r_minus < self.r_plus:
            raise ModelError(f"radius bounds need 0 < r_minus < r_plus, got "
                             f"{self.r_minus}, {self.r_plus}")
        if self.elasticity <= 0 or self.temperature <= 0:
            raise ModelError("elasticity and temperature must be positive")
        if self.container is not None and self.container <= self.R + 2 * self.r_plus:
            raise ModelError("container half-width must exceed R + 2*r_plus")

    @property
    def dimension(self) -> int:
        return self.n * (self.d + 1)

    @property
    def scale(self) -> float:
        return max(1.0, (self.R + self.r_plus) ** 2)

    def with_temperature(self, tau: float) -> "PlanetModel":
        return replace(self, temperature=float(tau))

    def obliquity(self) -> np.ndarray:
        """Diagonal matrix with n copies of (τ, …, τ, τσ̆)."""
        block = np.full(self.d + 1, self.temperature)
        block[-1] *= self.elasticity
        return np.diag(np.tile(block, self.n))

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        reach = self.container if self.container is not None else \
            self.R + 2.0 * self.r_plus * (self.n + 1) + 1.0
        low = np.tile(np.append(np.full(self.d, -reach), self.r_minus), self.n)
        high = np.tile(np.append(np.full(self.d, reach), self.r_plus), self.n)
        return low, high

    def gravity_potential(self, factor: float = 1.0) -> Potential:
        """factor · Σ G(|x_i|), with zero gradient in the radius coordinates."""
        n, d, grav = self.n, self.d, self.gravity

        def value(x):
            P = positions(self, x)
            return factor * np.sum(grav.G(np.linalg.norm(P, axis=-1)), axis=-1)

        def gradient(x):
            x = np.asarray(x, dtype=float)
            P = positions(self, x)
            rho = np.linalg.norm(P, axis=-1)
            g = np.zeros(x.shape[:-1] + (n, d + 1))
            with np.errstate(divide="ignore", invalid="ignore"):
                g[..., :d] = (factor * grav.dG(rho) / rho)[..., None] * P
            return g.reshape(x.shape)

        return Potential(value, gradient, name=f"{factor:g}*sum G")

    def gibbs_spec(self) -> GibbsSpec:
        """μ_τ ∝ 1_D e^{−ΣG(|x_i|)/τ²}."""
        cset = build_constraints(self)
        phi = self.gravity_potential()
        tau = self.temperature
        if self.container is not None:
            low, high = self.bounding_box()
            floor = self.n * float(self.gravity.G(self.R + self.r_minus)) / tau ** 2
            envelope = BoxEnvelope(low, high, log_bound=-floor)
            tail = None
        else:
            envelope = RadialEnvelope(self)
            tail = TailInfo(estimate_ell(self.gravity, (self.R, self.R * 1e6)), self.d, self.eta)
        D = self.dimension
        pos_idx = np.array([k for k in range(D) if k % (self.d + 1) != self.d])
        rad_idx = np.arange(self.d, D, self.d + 1)
        return GibbsSpec(
            cset, phi, envelope, temperature_scale=1.0 / tau ** 2,
            blocks=[pos_idx, rad_idx],
            block_scales=[max(0.5 * self.r_minus, 0.3 * tau ** 2 * (self.R + self.r_plus)),
                          0.25 * (self.r_plus - self.r_minus)],
            tail=tail, box=self.bounding_box(), name=f"planet-tau{tau:g}")


def positions(model: PlanetModel, x) -> np.ndarray:
    """(..., n, d) view of the particle positions."""
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape[:-1] + (model.n, model.d + 1))[..., :model.d]


def radii(model: PlanetModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(x.shape[:-1] + (model.n, model.d + 1))[..., model.d]


def pack(pos, rad) -> np.ndarray:
    """Configuration vector from (n, d) positions and n radii."""
    pos = np.atleast_2d(np.asarray(pos, dtype=float))
    rad = np.asarray(rad, dtype=float).reshape(-1, 1)
    return np.hstack([pos, rad]).ravel()


def spread_configuration(model: PlanetModel) -> np.ndarray:
    """Strictly feasible configuration: particles evenly spaced on a wide circle."""
    n, d = model.n, model.d
    mid = 0.5 * (model.r_minus + model.r_plus)
    ring = model.R + model.r_plus + 2.0 * model.r_plus * n / math.pi + model.r_plus
    pos = np.zeros((n, d))
    for i in range(n):
        angle = 2.0 * math.pi * i / n
        if d == 1:
            pos[i, 0] = (ring + 4.0 * model.r_plus * (i // 2)) * (1 if i % 2 == 0 else -1)
        else:
            pos[i, 0], pos[i, 1] = ring * math.cos(angle), ring * math.sin(angle)
    return pack(pos, np.full(n, mid))


def _planet_constraint(model: PlanetModel, i: int) -> Constraint:
    d, D, R = model.d, model.dimension, model.R
    p = slice(i * (d + 1), i * (d + 1) + d)
    r = i * (d + 1) + d

    def value(x):
        x = np.asarray(x, dtype=float)
        q = x[..., p]
        return np.einsum("...i,...i->...", q, q) - (R + x[..., r]) ** 2

    def gradient(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (D,))
        g[..., p] = 2.0 * x[..., p]
        g[..., r] = -2.0 * (R + x[..., r])
        return g

    return Constraint(f"f_R[{i}]", value, gradient, hessian_bound=2.0,
                      grad_floor=2.0 * math.sqrt(2.0) * (R + model.r_minus))


def _radius_constraint(model: PlanetModel, i: int, upper: bool) -> Constraint:
    d, D = model.d, model.dimension
    r = i * (d + 1) + d
    sign = -1.0 if upper else 1.0
    offset = model.r_plus if upper else -model.r_minus

    def value(x):
        return offset + sign * np.asarray(x, dtype=float)[..., r]

    def gradient(x):
        g = np.zeros(np.shape(x)[:-1] + (D,))
        g[..., r] = sign
        return g

    return Constraint(f"f_plus[{i}]" if upper else f"f_minus[{i}]", value, gradient,
                      hessian_bound=0.0, grad_floor=1.0)


def _pair_constraint(model: PlanetModel, i: int, j: int) -> Constraint:
    d, D = model.d, model.dimension
    pi, pj = slice(i * (d + 1), i * (d + 1) + d), slice(j * (d + 1), j * (d + 1) + d)
    ri, rj = i * (d + 1) + d, j * (d + 1) + d

    def value(x):
        x = np.asarray(x, dtype=float)
        delta = x[..., pi] - x[..., pj]
        return np.einsum("...i,...i->...", delta, delta) - (x[..., ri] + x[..., rj]) ** 2

    def gradient(x):
        x = np.asarray(x, dtype=float)
        delta = x[..., pi] - x[..., pj]
        s = x[..., ri] + x[..., rj]
        g = np.zeros(x.shape[:-1] + (D,))
        g[..., pi] = 2.0 * delta
        g[..., pj] = -2.0 * delta
        g[..., ri] = -2.0 * s
        g[..., rj] = -2.0 * s
        return g

    return Constraint(f"f_pair[{i},{j}]", value, gradient, hessian_bound=4.0,
                      grad_floor=8.0 * model.r_minus)


def _wall_constraint(model: PlanetModel, i: int, k: int, upper: bool) -> Constraint:
    d, D, L = model.d, model.dimension, model.container
    c = i * (d + 1) + k
    sign = -1.0 if upper else 1.0

    def value(x):
        return L + sign * np.asarray(x, dtype=float)[..., c]

    def gradient(x):
        g = np.zeros(np.shape(x)[:-1] + (D,))
        g[..., c] = sign
        return g

    return Constraint(f"wall[{i},{k},{'hi' if upper else 'lo'}]", value, gradient,
                      hessian_bound=0.0, grad_floor=1.0)


class NeighbourGrid:
    """Exact pruning of pair constraints by a uniform grid of cell size ≥ 2r₊.

    A pair is dropped only when its constraint value exceeds ``reach`` on
    every row, so pruned and dense evaluation agree wherever it matters.
    """

    def __init__(self, model: PlanetModel, pair_index: Dict[Tuple[int, int], int],
                 always: np.ndarray):
        self.model = model
        self.pair_index = pair_index
        self.always = always
        self.offsets = np.array(list(product((-1, 0, 1), repeat=model.d)))

    def pairs(self, P: np.ndarray, rad: np.ndarray, reach: float) -> set:
        s_max = 2.0 * float(np.max(rad))
        cutoff_sq = s_max ** 2 + max(reach, 0.0)
        cell = max(2.0 * self.model.r_plus, math.sqrt(cutoff_sq))
        found = set()
        for row in range(P.shape[0]):
            keys = np.floor(P[row] / cell).astype(np.int64)
            buckets = defaultdict(list)
            for i, key in enumerate(map(tuple, keys)):
                buckets[key].append(i)
            for key, members in buckets.items():
                for off in self.offsets:
                    for j in buckets.get(tuple(np.add(key, off)), ()):
                        for i in members:
                            if i < j and (i, j) not in found:
                                delta = P[row, i] - P[row, j]
                                if delta @ delta <= cutoff_sq:
                                    found.add((i, j))
        return found

    def __call__(self, X: np.ndarray, reach: float) -> np.ndarray:
        X = np.atleast_2d(X)
        found = self.pairs(positions(self.model, X), radii(self.model, X), reach)
        picked = [self.pair_index[p] for p in found]
        return np.union1d(self.always, np.asarray(picked, dtype=int))


def build_constraints(model: PlanetModel, grid: Optional[bool] = None) -> ConstraintSet:
    """f_R[i], f_plus[i], f_minus[i] per particle, then f_pair[i,j] for i < j.

    Walls follow when the model has a container. ``grid`` forces the
    neighbour grid on or off; by default it is used above 64 particles.
    """
    n = model.n
    cons: List[Constraint] = []
    for i in range(n):
        cons.append(_planet_constraint(model, i))
        cons.append(_radius_constraint(model, i, upper=True))
        cons.append(_radius_constraint(model, i, upper=False))
    pair_index = {}
    for i in range(n):
        for j in range(i + 1, n):
            pair_index[(i, j)] = len(cons)
            cons.append(_pair_constraint(model, i, j))
    if model.container is not None:
        for i in range(n):
            for k in range(model.d):
                cons.append(_wall_constraint(model, i, k, upper=False))
                cons.append(_wall_constraint(model, i, k, upper=True))
    use_grid = n > GRID_THRESHOLD if grid is None else grid
    screen = None
    if use_grid and n > 1:
        always = np.array([k for k, c in enumerate(cons) if not c.id.startswith("f_pair")])
        screen = NeighbourGrid(model, pair_index, always)
    return ConstraintSet(cons, model.dimension, obliquity=model.obliquity(), scale=model.scale,
                         screen=screen, box=model.bounding_box(),
                         name=f"planet-n{n}-d{model.d}")


def build_dynamics(model: PlanetModel, **kwargs) -> DynamicsSpec:
    """σ = Θ, position drift −G′(|x_i|)x_i/|x_i| and no radius drift.

    The drift is −½Θ·ᵗΘ∇Ψ with Ψ = 2ΣG/τ², which is the potential recorded
    on the DynamicsSpec and the one whose Gibbs law the dynamics leaves reversible.
    """
    cset = build_constraints(model)
    potential = model.gravity_potential(2.0 / model.temperature ** 2)
    kwargs.setdefault("name", f"planet-n{model.n}-d{model.d}-tau{model.temperature:g}")
    kwargs.setdefault("lipschitz_note", "drift Lipschitz away from the planet centre")
    return gradient_dynamics(cset, potential, **kwargs)


def rescale_local_times(path: PathRecord, model: PlanetModel) -> Dict[str, np.ndarray]:
    """Physical local times from the multipliers of a planet path.

    L_pair[i,j] = 2τ² Σ (X̆_i + X̆_j) dL_f_pair[i,j], L_R[i] = 2τ² Σ (R + X̆_i) dL_f_R[i]
    and L_plus/L_minus[i] = τ²σ̆² Σ dL_f_plus/minus[i], radii taken at the end of
    each step.
    """
    expected = build_constraints(model, grid=False).ids
    if path.ids != expected:
        raise ValueError(f"path constraints do not match the planet model "
                         f"(n={model.n}, d={model.d})")
    tau2 = model.temperature ** 2
    rad = radii(model, path.states)[1:]
    dL = path.increments()
    out: Dict[str, np.ndarray] = {}
    for k, cid in enumerate(path.ids):
        kind, _, rest = cid.partition("[")
        idx = [int(t) for t in rest.rstrip("]").split(",")] if kind != "wall" else []
        if kind == "f_R":
            weight = 2.0 * tau2 * (model.R + rad[:, idx[0]])
        elif kind in ("f_plus", "f_minus"):
            weight = np.full(dL.shape[0], tau2 * model.elasticity ** 2)
        elif kind == "f_pair":
            weight = 2.0 * tau2 * (rad[:, idx[0]] + rad[:, idx[1]])
        else:
            continue
        name = "L_" + kind[2:] + "[" + rest
        out[name] = np.concatenate([[0.0], np.cumsum(weight * dL[:, k])])
    return out


@dataclass
class ContactGraph:
    edges: List[Tuple[int, int]]
    planet_contacts: List[int]
    clusters: List[List[int]]

    def cluster_of(self, i: int) -> List[int]:
        return next(c for c in self.clusters if i in c)

    def touches_planet(self, i: int) -> bool:
        return any(j in self.planet_contacts for j in self.cluster_of(i))


def contact_graph(model: PlanetModel, x, act_tol: float = 1e-8) -> ContactGraph:
    """Contacts within ``act_tol`` (in distance) and their connected clusters."""
    x = config_vector(x, model.dimension)
    P, rad = positions(model, x), radii(model, x)
    n = model.n
    dist = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
    touching = dist <= rad[:, None] + rad[None, :] + act_tol
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if touching[i, j]]
    uf = UnionFind(range(n))
    for i, j in edges:
        uf.union(i, j)
    planet = [i for i in range(n) if np.linalg.norm(P[i]) <= model.R + rad[i] + act_tol]
    return ContactGraph(edges, planet, uf.groups())


def cone_norm_bound(model: PlanetModel) -> float:
    """Upper bound on |v|² for the separating vector of any boundary configuration."""
    n, R, rp, rm = model.n, model.R, model.r_plus, model.r_minus
    return 2 * n * (R + rp) ** 2 + (4.0 / 3.0) * rp ** 2 * (n - 1) * n * (2 * n - 1) \
        + n * rm ** 2 / 4.0


@dataclass
class ConeBounds:
    """Normalised inner products v·∇f/|∇f| over active constraints, and their floors."""
    ratios: Dict[str, float]
    norm_sq: float
    norm_sq_bound: float
    planet_floor: float
    radius_value: float
    pair_floor: float

    def holds(self, rtol: float = 1e-9) -> bool:
        for cid, value in self.ratios.items():
            if cid.startswith("f_R") and value < self.planet_floor * (1 - rtol):
                return False
            if cid.startswith(("f_plus", "f_minus")) and \
                    abs(value - self.radius_value) > rtol * max(1.0, self.radius_value):
                return False
            if cid.startswith("f_pair") and value < self.pair_floor * (1 - rtol):
                return False
        return self.norm_sq <= self.norm_sq_bound * (1 + rtol)

    def to_dict(self) -> dict:
        return {"ratios": dict(self.ratios), "norm_sq": self.norm_sq,
                "norm_sq_bound": self.norm_sq_bound, "planet_floor": self.planet_floor,
                "radius_value": self.radius_value, "pair_floor": self.pair_floor}


def cone_vector(model: PlanetModel, x,
                act_tol: Optional[float] = None) -> Tuple[np.ndarray, ConeBounds]:
    """Direction that moves colliding particles apart and away from the planet.

    Inside a cluster touching the planet each particle moves straight out
    (v_i = x_i); inside a free cluster it moves away from the cluster's mean
    position. Radii at a bound move inwards by r₋/2.
    """
    x = config_vector(x, model.dimension)
    cset = build_constraints(model, grid=False)
    if act_tol is None:
        act_tol = cset.tolerance(ACT_TOL)
    active = active_set(cset, x, act_tol)
    if not active:
        raise ValueError("cone_vector needs a boundary configuration")
    gap_tol = act_tol * max(1.0 / (4.0 * model.r_minus), 1.0 / (2.0 * model.R)) + act_tol
    graph = contact_graph(model, x, gap_tol)
    P, rad = positions(model, x), radii(model, x)
    n, d = model.n, model.d
    v = np.zeros((n, d + 1))
    for cluster in graph.clusters:
        if any(i in graph.planet_contacts for i in cluster):
            v[cluster, :d] = P[cluster]
        else:
            v[cluster, :d] = P[cluster] - P[cluster].mean(axis=0)
    active_set_ids = set(active)
    for i in range(n):
        if f"f_minus[{i}]" in active_set_ids:
            v[i, d] = 0.5 * model.r_minus
        elif f"f_plus[{i}]" in active_set_ids:
            v[i, d] = -0.5 * model.r_minus
    v = v.ravel()
    if not np.any(v):
        raise ValueError("cone vector vanished; configuration is degenerate")
    ratios = {}
    for cid in active:
        g = cset[cid].gradient(x)
        ratios[cid] = float(v @ g / np.linalg.norm(g))
    bounds = ConeBounds(ratios, float(v @ v), cone_norm_bound(model),
                        model.R / math.sqrt(2.0), 0.5 * model.r_minus, 0.25 * model.r_minus)
    return v, bounds


class JammedSampler:
    """Boundary configurations built contact by contact.

    Particles are placed one at a time on the planet, against an earlier
    particle, against two bodies at once or in free space, with radii often
    pinned at a bound, so the samples cover chains, planet contacts and
    corners where several constraints are active.
    """

    def __init__(self, model: PlanetModel, seed: int, act_tol: Optional[float] = None):
        if model.container is not None:
            raise ModelError("jammed sampling is defined for models without a container")
        self.model = model
        self.seed = seed
        self.act_tol = ACT_TOL * model.scale if act_tol is None else act_tol

    @property
    def interior(self) -> np.ndarray:
        return spread_configuration(self.model)

    def _fits(self, P, rad, placed, p, r) -> bool:
        m = self.model
        if np.linalg.norm(p) < m.R + r - CONTACT_TOL:
            return False
        for j in placed:
            if np.linalg.norm(p - P[j]) < r + rad[j] - CONTACT_TOL:
                return False
        return True

    @staticmethod
    def _unit(gen, d) -> np.ndarray:
        u = gen.standard_normal(d)
        return u / np.linalg.norm(u)

    def _two_contacts(self, gen, c1, s1, c2, s2) -> Optional[np.ndarray]:
        """A point at distance s1 from c1 and s2 from c2."""
        axis = c2 - c1
        dist = np.linalg.norm(axis)
        if dist == 0.0:
            return None
        e = axis / dist
        a = (s1 ** 2 - s2 ** 2 + dist ** 2) / (2.0 * dist)
        h2 = s1 ** 2 - a ** 2
        if h2 < 0.0:
            return None
        w = gen.standard_normal(e.shape[0])
        w -= (w @ e) * e
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return None
        return c1 + a * e + math.sqrt(h2) * w / norm

    def sample(self, index: int) -> np.ndarray:
        m = self.model
        n, d = m.n, m.d
        gen = keyed_generator(self.seed, index, 0, SAMPLER)
        rad = gen.uniform(m.r_minus, m.r_plus, n)
        pin = gen.random(n)
        rad[pin < 0.2] = m.r_minus
        rad[pin > 0.8] = m.r_plus
        P = np.zeros((n, d))
        placed: List[int] = []
        origin = np.zeros(d)
        for i in range(n):
            for _ in range(100):
                mode = gen.random()
                if not placed or mode < 0.3:
                    p = (m.R + rad[i]) * self._unit(gen, d)
                elif mode < 0.65:
                    j = placed[int(gen.integers(len(placed)))]
                    p = P[j] + (rad[i] + rad[j]) * self._unit(gen, d)
                elif mode < 0.9 and d > 1:
                    j = placed[int(gen.integers(len(placed)))]
                    if gen.random() < 0.5 or len(placed) < 2:
                        p = self._two_contacts(gen, P[j], rad[i] + rad[j], origin, m.R + rad[i])
                    else:
                        k = placed[int(gen.integers(len(placed)))]
                        p = None if k == j else self._two_contacts(
                            gen, P[j], rad[i] + rad[j], P[k], rad[i] + rad[k])
                    if p is None:
                        continue
                else:
                    p = (m.R + rad[i] + gen.uniform(0.5, 3.0) * m.r_plus * (n + 1)) \
                        * self._unit(gen, d)
                if self._fits(P, rad, placed, p, rad[i]):
                    break
            else:
                p = (m.R + (4 * i + 4) * m.r_plus * (n + 1)) * self._unit(gen, d)
            P[i] = p
            placed.append(i)
        if np.min(build_constraints(m, grid=False).values(pack(P, rad))) > self.act_tol:
            # shrinking a radius onto its bound keeps every gap open
            rad[0] = m.r_minus
        return pack(P, rad)


class RadialEnvelope:
    """Independent particles from the one-particle law, rejected on overlap.

    Each radius is drawn from its marginal p(x̆) ∝ ∫_{R+x̆} ρ^{d−1}e^{−G/τ²}dρ,
    then |x_i| from the radial law truncated below at R + x̆ and a uniform
    direction. The target is a product over particles apart from the pair
    constraints, so accepting exactly the non-overlapping draws is exact up
    to the cut at ρ_max = 1000·R and the tabulation of the inverse CDFs.
    """

    def __init__(self, model: PlanetModel, points: int = 8193):
        self.model = model
        tau2 = model.temperature ** 2
        d, grav = model.d, model.gravity
        lo = math.log(model.R + model.r_minus)
        hi = math.log(model.R * RHO_MAX_FACTOR)

        def log_weight(u):
            return d * u - grav.G(np.exp(u)) / tau2

        coarse = np.linspace(lo, hi, 20001)
        lw = log_weight(coarse)
        keep = np.nonzero(lw - lw.max() > -60.0)[0]
        a = coarse[max(keep[0] - 1, 0)]
        b = coarse[min(keep[-1] + 1, coarse.size - 1)]
        self.u = np.linspace(a, b, points)
        lw = log_weight(self.u)
        w = np.exp(lw - lw.max())
        self.mass = cumulative_trapezoid(w, self.u, initial=0.0)
        self.total = self.mass[-1]
        grid = np.linspace(model.r_minus, model.r_plus, 1025)
        tail = self.total - np.interp(np.log(model.R + grid), self.u, self.mass,
                                      left=0.0, right=self.total)
        self.radius_grid = grid
        self.radius_cdf = cumulative_trapezoid(tail, grid, initial=0.0)
        if self.radius_cdf[-1] <= 0.0:
            raise ValueError("radial law has no mass above the planet")
        self.radius_cdf /= self.radius_cdf[-1]

    def draw(self, gen: np.random.Generator, size: int) -> np.ndarray:
        m = self.model
        n, d = m.n, m.d
        rad = np.interp(gen.random((size, n)), self.radius_cdf, self.radius_grid)
        floor = np.interp(np.log(m.R + rad), self.u, self.mass, left=0.0, right=self.total)
        target = floor + gen.random((size, n)) * (self.total - floor)
        rho = np.maximum(np.exp(np.interp(target, self.mass, self.u)), m.R + rad)
        dirs = gen.standard_normal((size, n, d))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        out = np.empty((size, n, d + 1))
        out[..., :d] = rho[..., None] * dirs
        out[..., d] = rad
        return out.reshape(size, m.dimension)

    def propose(self, spec, gen, size):
        return self.draw(gen, size), np.zeros(size)


def _blocked(model: PlanetModel, x, k: int, Y: np.ndarray) -> np.ndarray:
    """True for the rows of Y where particle k would overlap another body."""
    P, rad = positions(model, x), radii(model, x)
    others = [j for j in range(model.n) if j != k]
    bad = np.linalg.norm(Y, axis=-1) < model.R + rad[k] - CONTACT_TOL
    if others:
        dist = np.linalg.norm(Y[:, None, :] - P[others][None, :, :], axis=-1)
        bad |= np.any(dist < rad[k] + rad[others] - CONTACT_TOL, axis=1)
    if model.container is not None:
        bad |= np.any(np.abs(Y) > model.container + CONTACT_TOL, axis=1)
    return bad


def _ray_minimum(model: PlanetModel, x, k: int) -> float:
    """Smallest feasible |y| for particle k slid along its own radial ray."""
    P, rad = positions(model, x), radii(model, x)
    top = float(np.linalg.norm(P[k]))
    u = P[k] / top
    floor = model.R + rad[k]
    intervals = []
    for j in range(model.n):
        if j == k:
            continue
        b = float(u @ P[j])
        disc = b * b - float(P[j] @ P[j]) + (rad[k] + rad[j]) ** 2
        if disc > 0.0:
            root = math.sqrt(disc)
            intervals.append((b - root, b + root))
    candidates = sorted({floor, top} | {hi for _, hi in intervals if floor <= hi <= top})
    for t in candidates:
        if all(not (lo + CONTACT_TOL < t < hi - CONTACT_TOL) for lo, hi in intervals):
            return t
    return top


def _shell_free(model: PlanetModel, x, k: int, gen, count: int = 256) -> bool:
    """Whether particle k fits somewhere in contact with the planet."""
    d = model.d
    shell = model.R + radii(model, x)[k]
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif d == 2:
        angles = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False) + gen.uniform(0, 0.01)
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        dirs = gen.standard_normal((2 * count, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return bool(np.any(~_blocked(model, x, k, (shell + 1e-12) * dirs)))


def _descend(model: PlanetModel, x, k: int, starts: Sequence[np.ndarray]) -> float:
    P, rad = positions(model, x), radii(model, x)
    others = [j for j in range(model.n) if j != k]
    centers = np.vstack([np.zeros((1, model.d)), P[others]]) if others else np.zeros((1, model.d))
    reach = np.concatenate([[model.R + rad[k]], rad[k] + rad[others]])

    def fun(y):
        delta = y - centers
        return np.einsum("ij,ij->i", delta, delta) - reach ** 2

    def jac(y):
        return 2.0 * (y - centers)

    cons = [{"type": "ineq", "fun": fun, "jac": jac}]
    if model.container is not None:
        L = model.container
        eye = np.eye(model.d)
        cons.append({"type": "ineq", "fun": lambda y: np.concatenate([L - y, L + y]),
                     "jac": lambda y: np.vstack([-eye, eye])})
    best = float(np.linalg.norm(P[k]))
    for y0 in starts:
        res = minimize(lambda y: (y @ y, 2.0 * y), y0, jac=True, method="SLSQP",
                       constraints=cons, options={"maxiter": 200, "ftol": 1e-12})
        y = res.x
        if np.all(np.isfinite(y)) and not _blocked(model, x, k, y[None, :])[0] \
                and np.all(fun(y) >= -1e-9):
            best = min(best, float(np.linalg.norm(y)))
    return best


def min_radial_norm(model: PlanetModel, x, k: int, seed: int = 0, sample: int = 0,
                    starts: Optional[int] = None) -> float:
    """Upper estimate of the smallest |y_k| reachable by moving particle k alone.

    The radius of particle k stays fixed. Tries the contact shell, then the
    radial ray, then multi-start SLSQP from the ray point, tangential
    perturbations of x_k and random points near the shell; only feasible
    results count, so the estimate never exceeds |x_k|.
    """
    x = config_vector(x, model.dimension)
    P, rad = positions(model, x), radii(model, x)
    top = float(np.linalg.norm(P[k]))
    floor = model.R + rad[k]
    if top <= floor + 1e-9:
        return top
    gen = keyed_generator(seed, sample, k, SEARCH)
    if _shell_free(model, x, k, gen):
        return floor
    best = _ray_minimum(model, x, k)
    if best <= floor + 1e-12:
        return best
    m = starts if starts is not None else 8 + 2 * model.d
    u = P[k] / top
    points = [best * u]
    for s in range(m):
        if s % 2 == 0:
            w = gen.standard_normal(model.d)
            w -= (w @ u) * u
            points.append(P[k] + rad[k] * gen.uniform(0.5, 2.0) * w)
        else:
            w = gen.standard_normal(model.d)
            points.append((floor + gen.uniform(0.0, 2.0) * rad[k]) * w / np.linalg.norm(w))
    return min(best, _descend(model, x, k, points), top)


def in_A_eps(model: PlanetModel, x, eps: float, seed: int = 0, sample: int = 0) -> bool:
    """Whether some particle can move more than ``eps`` closer to the origin.

    One-sided: a True answer is certified by a feasible placement; False may
    miss placements the local search does not find.
    """
    x = config_vector(x, model.dimension)
    P, rad = positions(model, x), radii(model, x)
    for k in range(model.n):
        top = float(np.linalg.norm(P[k]))
        if top - (model.R + rad[k]) <= eps:
            continue
        if top - min_radial_norm(model, x, k, seed, sample) > eps:
            return True
    return False


def integrability(model: PlanetModel) -> Integrability:
    if model.container is not None:
        return Integrability("finite", model.temperature, reason="bounded container")
    return check_integrability(model.gibbs_spec(), model.temperature)


@dataclass
class CurvePoint:
    tau: float
    estimate: float
    ci_low: float
    ci_high: float
    n_samples: int
    hits: int
    integrability: str = "finite"


def clopper_pearson(hits: int, n: int, confidence: float = 0.95) -> Tuple[float, float]:
    alpha = 1.0 - confidence
    low = 0.0 if hits == 0 else float(stats.beta.ppf(alpha / 2, hits, n - hits + 1))
    high = 1.0 if hits == n else float(stats.beta.ppf(1 - alpha / 2, hits + 1, n - hits))
    return low, high


def temperature_stream(tau: float) -> int:
    """Stream index of a temperature: the bits of its float64 value."""
    return int(np.float64(tau).view(np.uint64)) & MASK64


def clustering_curve(model: PlanetModel, temperatures: Sequence[float], eps: float,
                     n_samples: int, seed: int, workers: int = 1,
                     override_integrability: bool = False,
                     confidence: float = 0.95) -> List[CurvePoint]:
    """Equilibrium frequency of A_ε at each temperature with Clopper–Pearson intervals.

    Samples for τ come from the exact rejection sampler on stream (seed, τ);
    the membership search for sample s uses the streams of (seed, s).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    curve = []
    for tau in temperatures:
        tmodel = model.with_temperature(tau)
        verdict = integrability(tmodel)
        if not verdict.finite and not override_integrability:
            raise IntegrabilityError(
                f"integrability at tau={tau:g} is {verdict.verdict} ({verdict.reason}); "
                "use --override-integrability to sample anyway")
        spec = tmodel.gibbs_spec()
        stream = temperature_stream(tau)
        samples = sample_rejection(spec, n_samples, seed, stream=stream)

        def count(rows):
            return sum(in_A_eps(tmodel, samples[s], eps, seed, s) for s in rows)

        chunks = [range(s, min(s + 64, n_samples)) for s in range(0, n_samples, 64)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                hits = sum(pool.map(count, chunks))
        else:
            hits = sum(count(c) for c in chunks)
        low, high = clopper_pearson(hits, n_samples, confidence)
        curve.append(CurvePoint(float(tau), hits / n_samples, low, high, n_samples, hits,
                                verdict.verdict))
        logger.info("tau=%g: %d of %d samples in A_eps", tau, hits, n_samples)
    return curve


def particle_table(model: PlanetModel, x) -> List[list]:
    """Rows [particle, coordinates..., radius] for plotting."""
    x = config_vector(x, model.dimension)
    P, rad = positions(model, x), radii(model, x)
    return [[i] + [float(c) for c in P[i]] + [float(rad[i])] for i in range(model.n)]


@dataclass
class ModelCheck:
    gravity: GravityCheck
    gradient_error: float
    compat: Optional[CompatReport]
    integrability: Integrability

    @property
    def ok(self) -> bool:
        return (self.gravity.ok and self.gradient_error <= 1e-6
                and (self.compat is None or self.compat.certified)
                and self.integrability.finite)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "gravity_ok": self.gravity.ok,
            "gravity_problems": list(self.gravity.problems),
            "ell": self.gravity.ell,
            "gradient_error": self.gradient_error,
            "compat": None if self.compat is None else self.compat.to_dict(),
            "integrability": self.integrability.verdict,
            "integrability_reason": self.integrability.reason,
        }


def check_model(model: PlanetModel, n_samples: int = 1000, seed: int = 0,
                workers: int = 1) -> ModelCheck:
    """Gravity hypotheses, gradient checks, compatibility and integrability together."""
    grav = check_gravity(model.gravity, (model.R, model.R * 1e6))
    cset = build_constraints(model)
    compat = None
    if model.container is None:
        sampler = JammedSampler(model, seed)
        points = [sampler.sample(i) for i in range(min(16, n_samples))]
        compat = check_compatibility(cset, sampler, n_samples, workers=workers, seed=seed)
    else:
        points = [spread_configuration(model)]
    err = check_gradients(cset, points)
    return ModelCheck(grav, err, compat, integrability(model))


__all__ = [
    "ConeBounds", "ContactGraph", "CurvePoint", "Gravity", "GravityCheck", "JammedSampler",
    "ModelCheck", "NeighbourGrid", "PlanetModel", "RadialEnvelope", "build_constraints",
    "build_dynamics", "check_gravity", "check_model", "clopper_pearson", "clustering_curve",
    "cone_norm_bound", "cone_vector", "contact_graph", "in_A_eps", "integrability",
    "log_gravity", "min_radial_norm", "pack", "particle_table", "positions", "radii",
    "rescale_local_times", "spread_configuration", "zero_gravity",
]
