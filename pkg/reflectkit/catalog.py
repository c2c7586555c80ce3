"""Named scenarios: from a ``[model]`` section to constraints, potential and dynamics."""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from . import shapes
from .compat import find_feasible_point
from .errors import ModelError
from .gibbs import (BoxEnvelope, GibbsSpec, Potential, linear_potential, quadratic_potential,
                    zero_potential)
from .geometry import ConstraintSet, config_vector
from .planet import PlanetModel, build_dynamics, log_gravity, spread_configuration, zero_gravity
from .reflect import DynamicsSpec, gradient_dynamics

logger = logging.getLogger(__name__)


@dataclass
class Scenario:
    kind: str
    cset: ConstraintSet
    potential: Potential
    dynamics: DynamicsSpec
    gibbs: GibbsSpec
    x0: np.ndarray
    planet: Optional[PlanetModel] = None


def _obliquity(values, dim: int) -> Optional[np.ndarray]:
    if values is None:
        return None
    arr = np.asarray(values, dtype=float)
    if arr.size == dim:
        return np.diag(arr)
    if arr.size == dim * dim:
        return arr.reshape(dim, dim)
    raise ModelError(f"obliquity needs {dim} diagonal entries or {dim * dim} matrix entries, "
                     f"got {arr.size}")


def _potential(model: Dict[str, Any], dim: int, default: str) -> Potential:
    kind = model.get("potential", default)
    if kind == "zero":
        return zero_potential(dim)
    if kind == "linear":
        c = model.get("c", 2.0)
        return linear_potential(np.full(dim, c))
    return quadratic_potential(model.get("weight", 1.0), np.zeros(dim))


def rotational_drift(base, omega: float):
    """Adds ω(−x₁, x₀) in the first two coordinates; not a gradient, so not reversible."""
    def drift(x):
        x = np.asarray(x, dtype=float)
        out = np.array(base(x), dtype=float)
        out[..., 0] -= omega * x[..., 1]
        out[..., 1] += omega * x[..., 0]
        return out
    return drift


def planet_model(model: Dict[str, Any]) -> PlanetModel:
    gravity = zero_gravity() if model.get("gravity", "log") == "zero" \
        else log_gravity(model.get("gravity_c", 1.0))
    return PlanetModel(
        n=model["n"], d=model["d"], R=model["R"],
        r_minus=model["r_minus"], r_plus=model["r_plus"],
        elasticity=model.get("elasticity", 1.0),
        temperature=model.get("temperature", 1.0),
        gravity=gravity,
        container=model.get("container"),
        eta=model.get("eta", 0.1),
    )


def _constraints(model: Dict[str, Any]) -> ConstraintSet:
    kind = model["kind"]
    if kind == "halfline":
        return shapes.orthant(1, _obliquity(model.get("obliquity"), 1), name="halfline")
    if kind == "quadrant":
        return shapes.orthant(2, _obliquity(model.get("obliquity"), 2), name="quadrant")
    if kind == "box":
        dim = model.get("dim", len(model.get("low", [0.0, 0.0])))
        low = model.get("low", [0.0] * dim)
        high = model.get("high", [1.0] * dim)
        return shapes.box(low, high, _obliquity(model.get("obliquity"), len(low)))
    if kind == "wedge":
        dim = model.get("dim", 2)
        return shapes.wedge(model.get("angle", 90.0), dim,
                            _obliquity(model.get("obliquity"), dim))
    if kind == "slab":
        dim = model.get("dim", 2)
        low, high = model.get("low", [0.0]), model.get("high", [1.0])
        return shapes.slab(dim, model.get("axis", 0), low[0], high[0],
                           _obliquity(model.get("obliquity"), dim))
    if kind == "annulus":
        dim = model.get("dim", 2)
        return shapes.annulus(model.get("inner", 1.0), model.get("outer", 2.0), dim,
                              _obliquity(model.get("obliquity"), dim))
    raise ModelError(f"unknown model kind '{kind}'")


DEFAULT_POTENTIAL = {"halfline": "linear", "quadrant": "quadratic", "box": "zero",
                     "wedge": "quadratic", "slab": "quadratic", "annulus": "zero"}


def build_scenario(model: Dict[str, Any], numerics: Optional[Dict[str, Any]] = None,
                   seed: int = 0) -> Scenario:
    """Scenario for a parsed ``[model]`` section."""
    numerics = numerics or {}
    tol = {k: numerics[k] for k in ("feas_tol", "act_tol", "max_sweeps") if k in numerics}
    kind = model["kind"]
    if kind == "planet":
        pm = planet_model(model)
        obliquity = model.get("obliquity")
        if obliquity is not None:
            logger.warning("planet obliquity is fixed by temperature and elasticity; "
                           "[model] obliquity is ignored")
        dynamics = build_dynamics(pm, **tol)
        gibbs = pm.gibbs_spec()
        x0 = config_vector(model["x0"], pm.dimension) if "x0" in model \
            else spread_configuration(pm)
        return Scenario(kind, dynamics.cset, gibbs.phi, dynamics, gibbs, x0, pm)

    cset = _constraints(model)
    potential = _potential(model, cset.dimension, DEFAULT_POTENTIAL[kind])
    dynamics = gradient_dynamics(cset, potential, **tol)
    if model.get("rotation"):
        if cset.dimension < 2:
            raise ModelError("rotational drift needs at least two dimensions")
        dynamics.drift = rotational_drift(dynamics.drift, model["rotation"])
        dynamics.potential = None
        dynamics.name = f"{dynamics.name}-rotating"
    envelope = BoxEnvelope(*cset.box)
    gibbs = GibbsSpec(cset, potential, envelope, box=cset.box, name=f"gibbs-{kind}")
    if "x0" in model:
        x0 = config_vector(model["x0"], cset.dimension)
    else:
        x0 = find_feasible_point(cset, seed, cset.box)
    return Scenario(kind, cset, potential, dynamics, gibbs, x0)
