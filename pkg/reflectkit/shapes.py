"""Shipped constraint families with analytic gradients."""

from typing import List, Optional, Sequence

import numpy as np

from .errors import ModelError
from .geometry import Constraint, ConstraintSet


def half_space(normal, offset: float = 0.0, id: str = "half") -> Constraint:
    """f(x) = n·x − offset."""
    n = np.asarray(normal, dtype=float)
    norm = float(np.linalg.norm(n))
    if norm == 0.0:
        raise ValueError("half-space normal must be nonzero")
    return Constraint(
        id=id,
        value=lambda x: np.asarray(x, dtype=float) @ n - offset,
        gradient=lambda x: np.broadcast_to(n, np.shape(x)).copy(),
        hessian_bound=0.0,
        grad_floor=norm,
    )


def _axis(dim: int, k: int, sign: float = 1.0) -> np.ndarray:
    e = np.zeros(dim)
    e[k] = sign
    return e


def orthant(dim: int, obliquity=None, name: str = "orthant") -> ConstraintSet:
    """{x_k > 0 for every k}; the quadrant for dim = 2, the half-line for dim = 1."""
    cons = [half_space(_axis(dim, k), 0.0, id=f"x{k}>0") for k in range(dim)]
    return ConstraintSet(cons, dim, obliquity=obliquity, name=name,
                         box=(np.zeros(dim), np.full(dim, 10.0)))


def slab(dim: int, axis: int = 0, low: float = 0.0, high: float = 1.0,
         obliquity=None) -> ConstraintSet:
    """{low < x_axis < high}."""
    cons = [
        half_space(_axis(dim, axis), low, id=f"x{axis}>{low:g}"),
        half_space(_axis(dim, axis, -1.0), -high, id=f"x{axis}<{high:g}"),
    ]
    lo = np.full(dim, -1.0)
    hi = np.full(dim, 1.0)
    lo[axis], hi[axis] = low, high
    return ConstraintSet(cons, dim, obliquity=obliquity, name="slab", box=(lo, hi))


def box(low, high, obliquity=None) -> ConstraintSet:
    """Axis-aligned open box."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    if np.any(high <= low):
        raise ModelError("box needs high > low in every coordinate")
    dim = low.shape[0]
    cons: List[Constraint] = []
    for k in range(dim):
        cons.append(half_space(_axis(dim, k), low[k], id=f"x{k}>lo"))
        cons.append(half_space(_axis(dim, k, -1.0), -high[k], id=f"x{k}<hi"))
    return ConstraintSet(cons, dim, obliquity=obliquity, name="box", box=(low, high))


def wedge(angle_deg: float, dim: int = 2, obliquity=None) -> ConstraintSet:
    """{x₀ > 0, x₀ cos φ + x₁ sin φ > 0}; the inward normals meet at angle φ."""
    phi = np.deg2rad(angle_deg)
    n2 = np.zeros(dim)
    n2[0], n2[1] = np.cos(phi), np.sin(phi)
    cons = [half_space(_axis(dim, 0), 0.0, id="face0"),
            half_space(n2, 0.0, id="face1")]
    return ConstraintSet(cons, dim, obliquity=obliquity, name=f"wedge{angle_deg:g}",
                         box=(np.full(dim, -5.0), np.full(dim, 5.0)))


def ball_interior(center, radius: float, id: str = "ball",
                  coords: Optional[Sequence[int]] = None, dim: Optional[int] = None) -> Constraint:
    """f(x) = r² − |x_c − c|² on the selected coordinates (all by default).

    Selecting a subset of coordinates gives a cylinder in the full space.
    """
    c = np.asarray(center, dtype=float)
    if coords is None:
        coords = list(range(c.shape[0]))
    coords = list(coords)
    full = dim if dim is not None else c.shape[0]

    def value(x):
        d = np.asarray(x, dtype=float)[..., coords] - c
        return radius ** 2 - np.einsum("...i,...i->...", d, d)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(x.shape[:-1] + (full,))
        g[..., coords] = -2.0 * (x[..., coords] - c)
        return g

    return Constraint(id, value, gradient, hessian_bound=2.0, grad_floor=2.0 * radius)


def ball_exterior(center, radius: float, id: str = "hole") -> Constraint:
    """f(x) = |x − c|² − r²."""
    c = np.asarray(center, dtype=float)

    def value(x):
        d = np.asarray(x, dtype=float) - c
        return np.einsum("...i,...i->...", d, d) - radius ** 2

    def gradient(x):
        return 2.0 * (np.asarray(x, dtype=float) - c)

    return Constraint(id, value, gradient, hessian_bound=2.0, grad_floor=2.0 * radius)


def cylinder(dim: int, radius: float = 1.0, coords: Sequence[int] = (0, 1)) -> ConstraintSet:
    """Disc in the ``coords`` plane, invariant along every other coordinate."""
    con = ball_interior(np.zeros(len(coords)), radius, id="cylinder",
                        coords=coords, dim=dim)
    return ConstraintSet([con], dim, name="cylinder",
                         box=(np.full(dim, -radius), np.full(dim, radius)))


def annulus(inner: float = 1.0, outer: float = 2.0, dim: int = 2,
            obliquity=None) -> ConstraintSet:
    """{inner < |x| < outer}."""
    if not 0 < inner < outer:
        raise ModelError("annulus needs 0 < inner < outer")
    zero = np.zeros(dim)
    cons = [ball_exterior(zero, inner, id="inner"),
            ball_interior(zero, outer, id="outer")]
    return ConstraintSet(cons, dim, obliquity=obliquity, name="annulus",
                         box=(np.full(dim, -outer), np.full(dim, outer)))


def never_active(dim: int, id: str = "always") -> Constraint:
    """f(x) = 1 + |x|², positive everywhere."""
    return Constraint(
        id=id,
        value=lambda x: 1.0 + np.einsum("...i,...i->...", np.asarray(x, dtype=float),
                                        np.asarray(x, dtype=float)),
        gradient=lambda x: 2.0 * np.asarray(x, dtype=float),
        hessian_bound=2.0,
        grad_floor=1.0,
    )


def with_constraint(cset: ConstraintSet, extra: Constraint) -> ConstraintSet:
    """Copy of ``cset`` with one more constraint appended."""
    return ConstraintSet(list(cset.constraints) + [extra], cset.dimension,
                         obliquity=cset.obliquity, scale=cset.scale, box=cset.box,
                         name=cset.name)
