"""
Unit tests for compatibility certification and constraint-set transforms
"""

import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from reflectkit import shapes
from reflectkit.compat import (CERTIFIED, DEGENERATE, REFUTED, RaySampler, beta0_bound,
                               check_compatibility, find_feasible_point, hull_distance_at,
                               project_set, transform_set)
from reflectkit.errors import (DimensionError, InvarianceError, SamplingError,
                               SingularObliquityError)
from reflectkit.geometry import ConstraintSet
from reflectkit.planet import JammedSampler, PlanetModel, build_constraints, log_gravity
from reflectkit.reflect import DynamicsSpec


class FixedSampler:
    """Boundary sampler cycling through given points."""

    def __init__(self, points, act_tol=1e-8):
        self.points = [np.asarray(p, dtype=float) for p in points]
        self.act_tol = act_tol

    def sample(self, index):
        return self.points[index % len(self.points)]


class NoSampler:
    act_tol = 1e-8

    def sample(self, index):
        return None


class MappedSampler:
    """Samples of another sampler pushed through y = θ⁻¹x."""

    def __init__(self, inner, theta):
        self.inner = inner
        self.inverse = np.linalg.inv(theta)
        self.act_tol = inner.act_tol

    def sample(self, index):
        return self.inverse @ self.inner.sample(index)


def tangent_discs():
    """Disc of radius 2 with a unit hole touching its rim at (2, 0)."""
    outer = shapes.ball_interior([0.0, 0.0], 2.0, id="outer")
    hole = shapes.ball_exterior([1.0, 0.0], 1.0, id="hole")
    return ConstraintSet([outer, hole], 2, box=([-2.0, -2.0], [2.0, 2.0]), name="tangent")


def small_planet():
    return PlanetModel(n=3, d=2, R=1.0, r_minus=0.1, r_plus=0.2, elasticity=1.0,
                       temperature=0.5, gravity=log_gravity(3.0))


class TestCheckCompatibility(unittest.TestCase):
    """Test the sampled certification of compatibility"""

    def test_single_half_space(self):
        """Test that one unit normal gives beta0 = 1"""
        cset = ConstraintSet([shapes.half_space([1.0, 0.0, 0.0], id="x0>0")], 3,
                             box=(np.full(3, -1.0), np.full(3, 1.0)))
        report = check_compatibility(cset, RaySampler(cset, seed=1), 50)
        self.assertEqual(report.verdict, CERTIFIED)
        self.assertAlmostEqual(report.beta0_estimate, 1.0, places=12)
        self.assertEqual(report.samples_checked, 50)
        self.assertEqual(report.worst_active, ["x0>0"])

    def test_slab_faces_never_coactive(self):
        cset = shapes.slab(2, 0, 0.0, 1.0)
        report = check_compatibility(cset, RaySampler(cset, seed=2), 100)
        self.assertTrue(report.certified)
        self.assertAlmostEqual(report.beta0_estimate, 1.0, places=12)

    def test_narrow_wedge(self):
        """Test that the 170° wedge is certified with beta0 = cos 85°"""
        cset = shapes.wedge(170.0)
        report = check_compatibility(cset, RaySampler(cset, seed=3), 200)
        self.assertEqual(report.verdict, CERTIFIED)
        self.assertAlmostEqual(report.beta0_estimate, np.cos(np.deg2rad(85.0)), places=6)
        self.assertEqual(sorted(report.worst_active), ["face0", "face1"])
        self.assertLess(np.linalg.norm(report.worst_point), 1e-6)

    def test_refuted_at_tangency(self):
        """Test that opposing normals at a tangency point refute compatibility"""
        cset = tangent_discs()
        sampler = FixedSampler([[0.0, 2.0], [2.0, 0.0], [-2.0, 0.0]])
        report = check_compatibility(cset, sampler, 6, hessian_samples=0)
        self.assertEqual(report.verdict, REFUTED)
        np.testing.assert_allclose(report.worst_point, [2.0, 0.0])
        self.assertEqual(sorted(report.worst_active), ["hole", "outer"])
        self.assertLess(report.beta0_estimate, 1e-6)

    def test_sampler_failure_is_degenerate(self):
        report = check_compatibility(shapes.orthant(2), NoSampler(), 10)
        self.assertEqual(report.verdict, DEGENERATE)
        self.assertEqual(report.failed_samples, 10)
        self.assertEqual(report.samples_checked, 0)

    def test_interior_sample_counts_as_failure(self):
        report = check_compatibility(shapes.orthant(2), FixedSampler([[1.0, 1.0]]), 3)
        self.assertEqual(report.verdict, DEGENERATE)

    def test_worker_count_does_not_change_report(self):
        cset = shapes.box([0.0, 0.0, 0.0], [1.0, 2.0, 3.0])
        one = check_compatibility(cset, RaySampler(cset, seed=4), 150, workers=1)
        many = check_compatibility(cset, RaySampler(cset, seed=4), 150, workers=4)
        self.assertEqual(one.to_dict(), many.to_dict())

    def test_hessian_spot_check(self):
        """Test that the observed Hessian norm and its box are reported"""
        cset = shapes.annulus(1.0, 2.0)
        report = check_compatibility(cset, RaySampler(cset, seed=5), 20, hessian_samples=4)
        self.assertAlmostEqual(report.hessian_bound_observed, 2.0, places=4)
        self.assertEqual(report.hessian_bound_declared, 2.0)
        self.assertEqual(report.hessian_box, ([-2.0, -2.0], [2.0, 2.0]))

    def test_planet_set_certified(self):
        """Test that jammed planet configurations keep a positive beta0"""
        model = small_planet()
        cset = build_constraints(model)
        report = check_compatibility(cset, JammedSampler(model, seed=6), 300)
        self.assertEqual(report.verdict, CERTIFIED)
        self.assertGreater(report.beta0_estimate, 0.0)

    def test_refutation_survives_failed_samples(self):
        """Test that one unusable sample does not hide a refuting point"""
        class GappySampler(FixedSampler):
            def sample(self, index):
                return None if index == 0 else super().sample(index)

        report = check_compatibility(tangent_discs(), GappySampler([[2.0, 0.0]]), 4,
                                     hessian_samples=0)
        self.assertEqual(report.verdict, REFUTED)
        self.assertEqual(report.failed_samples, 1)
        self.assertEqual(report.samples_checked, 3)
        self.assertLess(report.beta0_estimate, 1e-6)

    def test_never_active_constraint_changes_nothing(self):
        """Test that a constraint positive everywhere leaves beta0 unchanged"""
        cases = [
            ("orthant", shapes.orthant(2), [[0.0, 0.0], [0.0, 1.5], [2.0, 0.0]]),
            ("box", shapes.box([0.0, 0.0], [1.0, 2.0]),
             [[0.0, 0.0], [1.0, 2.0], [0.5, 0.0], [1.0, 1.0]]),
            ("annulus", shapes.annulus(1.0, 2.0), [[1.0, 0.0], [0.0, -2.0]]),
        ]
        for name, cset, points in cases:
            with self.subTest(shape=name):
                wider = shapes.with_constraint(cset, shapes.never_active(cset.dimension))
                base = check_compatibility(cset, FixedSampler(points), 8, hessian_samples=0)
                more = check_compatibility(wider, FixedSampler(points), 8, hessian_samples=0)
                self.assertEqual(more.verdict, base.verdict)
                self.assertEqual(more.beta0_estimate, base.beta0_estimate)
                self.assertEqual(more.worst_active, base.worst_active)
                self.assertNotIn("always", more.worst_active)

    def test_rejects_nonpositive_sample_count(self):
        with self.assertRaises(ValueError):
            check_compatibility(shapes.orthant(2), NoSampler(), 0)


class TestHelpers(unittest.TestCase):
    """Test feasibility search and hull distances at single points"""

    def test_hull_distance_inside(self):
        distance, ids, grad_min = hull_distance_at(shapes.orthant(2), [1.0, 1.0])
        self.assertEqual(distance, float("inf"))
        self.assertEqual(ids, [])

    def test_hull_distance_corner(self):
        distance, ids, grad_min = hull_distance_at(shapes.orthant(2), [0.0, 0.0])
        self.assertAlmostEqual(distance, np.sqrt(0.5), places=12)
        self.assertEqual(grad_min, 1.0)

    def test_active_tolerance_follows_scale(self):
        """Test that the default near-active tolerance grows with the set scale"""
        unit = ConstraintSet([shapes.half_space([1.0, 0.0], id="h")], 2)
        wide = ConstraintSet([shapes.half_space([1.0, 0.0], id="h")], 2, scale=10.0)
        x = [5e-8, 0.0]
        self.assertEqual(hull_distance_at(unit, x)[1], [])
        distance, ids, _ = hull_distance_at(wide, x)
        self.assertEqual(ids, ["h"])
        self.assertAlmostEqual(distance, 1.0, places=12)
        self.assertEqual(hull_distance_at(wide, x, act_tol=1e-8)[1], [])
        self.assertAlmostEqual(RaySampler(wide, seed=0).act_tol, 1e-7, places=20)
        self.assertEqual(RaySampler(wide, seed=0, act_tol=1e-6).act_tol, 1e-6)

    def test_scaled_tolerance_in_samplers_and_dynamics(self):
        model = small_planet()
        self.assertAlmostEqual(JammedSampler(model, seed=0).act_tol, 1e-8 * 1.44, places=20)
        spec = DynamicsSpec(ConstraintSet([shapes.half_space([1.0], id="h")], 1, scale=4.0),
                            np.eye(1), lambda x: np.zeros_like(x))
        self.assertAlmostEqual(spec.act_tol, 4e-8, places=20)
        self.assertAlmostEqual(spec.feas_tol, 4e-9, places=20)

    def test_find_feasible_point(self):
        for name, cset in [("wedge", shapes.wedge(170.0)), ("annulus", shapes.annulus(1.0, 1.1)),
                           ("box", shapes.box([3.0, 3.0], [3.5, 4.0]))]:
            with self.subTest(shape=name):
                x = find_feasible_point(cset, seed=7)
                self.assertTrue(np.all(cset.values(x) > 0.0))

    def test_empty_domain(self):
        cons = [shapes.half_space([1.0, 0.0], 1.0, id="a"),
                shapes.half_space([-1.0, 0.0], 0.0, id="b")]
        cset = ConstraintSet(cons, 2, box=([-2.0, -2.0], [2.0, 2.0]))
        with self.assertRaises(SamplingError):
            find_feasible_point(cset, seed=0, restarts=4)


class TestTransforms(unittest.TestCase):
    """Test linear changes of variables and coordinate projection"""

    def test_identity_transform(self):
        cset = shapes.annulus(1.0, 2.0)
        same = transform_set(cset, np.eye(2))
        points = np.random.default_rng(8).uniform(-2.0, 2.0, size=(20, 2))
        np.testing.assert_array_equal(same.values(points), cset.values(points))
        np.testing.assert_array_equal(same.gradients(points), cset.gradients(points))

    def test_scaled_half_space(self):
        """Test g(y) = f(2y) for f(x) = x₀"""
        cset = ConstraintSet([shapes.half_space([1.0, 0.0, 0.0], id="h")], 3)
        scaled = transform_set(cset, 2.0 * np.eye(3))
        y = np.array([0.3, -1.0, 4.0])
        self.assertAlmostEqual(float(scaled["h"].value(y)), 0.6)
        np.testing.assert_allclose(scaled["h"].gradient(y), [2.0, 0.0, 0.0])
        self.assertAlmostEqual(scaled["h"].grad_floor, 2.0)
        np.testing.assert_allclose(scaled.obliquity, 0.5 * np.eye(3))

    def test_transform_by_obliquity_is_normal(self):
        theta = np.diag([2.0, 0.5])
        cset = shapes.orthant(2, obliquity=theta)
        np.testing.assert_allclose(transform_set(cset, theta).obliquity, np.eye(2))

    def test_singular_transform(self):
        with self.assertRaises(SingularObliquityError):
            transform_set(shapes.orthant(2), np.array([[1.0, 2.0], [2.0, 4.0]]))
        with self.assertRaises(DimensionError):
            transform_set(shapes.orthant(2), np.eye(3))

    def test_beta0_bound(self):
        self.assertAlmostEqual(beta0_bound(1.0, 2.0 * np.eye(2)), 1.0)
        self.assertAlmostEqual(beta0_bound(0.5, np.diag([1.0, 4.0])), 0.125)

    def test_planet_transform_recertified(self):
        """Test the planet set after the diagonal change of variables"""
        model = small_planet()
        cset = build_constraints(model)
        theta = model.obliquity()
        sampler = JammedSampler(model, seed=9)
        base = check_compatibility(cset, sampler, 100)
        moved = check_compatibility(transform_set(cset, theta), MappedSampler(sampler, theta), 100)
        self.assertEqual(moved.verdict, CERTIFIED)
        self.assertGreaterEqual(moved.beta0_estimate,
                                beta0_bound(base.beta0_estimate, theta) * (1 - 1e-9))

    def test_inverse_transform_restores_set(self):
        """Test that transforming by θ then θ⁻¹ gives back values, gradients and Θ"""
        model = small_planet()
        rng = np.random.default_rng(10)
        cases = [
            ("orthant", shapes.orthant(2), np.array([[1.0, 0.3], [0.0, 1.5]])),
            ("annulus", shapes.annulus(1.0, 2.0), np.array([[0.8, -0.4], [0.2, 1.1]])),
            ("planet", build_constraints(model),
             model.obliquity() + 0.1 * np.triu(rng.uniform(-1.0, 1.0, (9, 9)), 1)),
        ]
        for name, cset, theta in cases:
            with self.subTest(shape=name):
                back = transform_set(transform_set(cset, theta), np.linalg.inv(theta))
                points = rng.uniform(-1.5, 1.5, size=(12, cset.dimension))
                np.testing.assert_allclose(back.values(points), cset.values(points),
                                           rtol=0, atol=1e-9)
                np.testing.assert_allclose(back.gradients(points), cset.gradients(points),
                                           rtol=0, atol=1e-9)
                np.testing.assert_allclose(back.obliquity, cset.obliquity, rtol=0, atol=1e-12)
                self.assertEqual(back.ids, cset.ids)

    def test_project_invariant_coordinate(self):
        cset = shapes.cylinder(3, 2.0)
        flat = project_set(cset, 2)
        self.assertEqual(flat.dimension, 2)
        z = np.array([0.5, -1.0])
        self.assertAlmostEqual(float(flat["cylinder"].value(z)),
                               float(cset["cylinder"].value([0.5, -1.0, 7.0])))
        np.testing.assert_allclose(flat["cylinder"].gradient(z), [-1.0, 2.0])

    def test_project_dependent_coordinate(self):
        with self.assertRaises(InvarianceError) as ctx:
            project_set(shapes.cylinder(3, 2.0), 0)
        self.assertEqual(ctx.exception.constraint_id, "cylinder")

    def test_project_mixing_obliquity(self):
        cset = ConstraintSet(shapes.cylinder(3).constraints, 3,
                             obliquity=[[1.0, 0.0, 0.5], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with self.assertRaises(InvarianceError):
            project_set(cset, 2)


if __name__ == '__main__':
    unittest.main()
