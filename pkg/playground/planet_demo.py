#!/usr/bin/env python3
"""
Walk through a small planet model: checks, one path, contacts and a short curve
"""

import os
import sys
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np

from reflectkit.planet import (PlanetModel, build_dynamics, check_model, clustering_curve,
                               contact_graph, log_gravity, particle_table, rescale_local_times,
                               spread_configuration)
from reflectkit.reflect import simulate


def demonstrate_planet():
    model = PlanetModel(n=3, d=2, R=1.0, r_minus=0.1, r_plus=0.15, temperature=0.5,
                        elasticity=1.0, gravity=log_gravity(3.0))

    print("=== Model check ===\n")
    report = check_model(model, n_samples=200, seed=1)
    for key, value in report.to_dict().items():
        if key != "compat":
            print(f"  {key}: {value}")
    print(f"  beta0: {report.compat.beta0_estimate:.4f}\n")

    print("=== One path, T = 2 ===\n")
    path = simulate(build_dynamics(model), spread_configuration(model), 2.0, 1e-3, seed=2)
    print(f"  steps: {len(path) - 1}, retried: {len(path.retried_steps)}")
    print(f"  support violations: {path.check_support()}")
    final = path.states[-1]
    for row in particle_table(model, final):
        print(f"  particle {row[0]}: position ({row[1]:+.3f}, {row[2]:+.3f}) radius {row[3]:.3f}")
    graph = contact_graph(model, final, act_tol=1e-6)
    print(f"  clusters: {graph.clusters}")
    for name, series in rescale_local_times(path, model).items():
        if series[-1] > 0.0:
            print(f"  {name}: {series[-1]:.4f}")
    print()

    print("=== Clustering curve ===\n")
    curve = clustering_curve(model, [1.0, 0.5, 0.25, 0.1], eps=0.2, n_samples=200, seed=3)
    for point in curve:
        bar = "#" * int(np.round(40 * point.estimate))
        print(f"  tau {point.tau:5.2f}  {point.estimate:.3f} "
              f"[{point.ci_low:.3f}, {point.ci_high:.3f}]  {bar}")


if __name__ == "__main__":
    demonstrate_planet()
