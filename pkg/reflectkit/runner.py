"""
Running a parsed configuration.

``run`` dispatches on the command, writes every artifact with its manifest
and maps failures to exit codes.
"""

import logging
import sys
import time
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np

from .artifacts import write_json, write_manifest, write_table
from .catalog import Scenario, build_scenario
from .compat import RaySampler, check_compatibility
from .config import RunConfig
from .errors import (ConfigError, ConstraintValidityError, DimensionError, HullInputError,
                     IntegrabilityError, InvarianceError, ModelError, SamplingError,
                     SimulationError, SingularObliquityError, StepFailure)
from .gibbs import run_chains, sample_rejection
from .planet import (JammedSampler, check_model, clustering_curve, integrability,
                     particle_table, rescale_local_times)
from .reflect import reversibility_test, simulate, simulate_ensemble

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_PARSE = 2
EXIT_MODEL = 3
EXIT_NUMERICAL = 4
EXIT_STATISTICAL = 5

MODEL_ERRORS = (DimensionError, HullInputError, SingularObliquityError, InvarianceError,
                ConstraintValidityError, IntegrabilityError, ModelError)
NUMERICAL_ERRORS = (StepFailure, SimulationError, SamplingError)


class _Run:
    """Artifact bookkeeping for one invocation."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.out)
        self.started = time.perf_counter()
        self.written: List[Path] = []

    def table(self, name: str, header, rows, extra=None) -> Path:
        path = self.out / f"{name}.{self.config.format}"
        return self._finish(write_table(path, header, rows, self.config.format), extra)

    def report(self, name: str, obj, extra=None) -> Path:
        return self._finish(write_json(self.out / f"{name}.json", obj), extra)

    def _finish(self, path: Path, extra) -> Path:
        write_manifest(path, self.config.to_dict(), self.config.seed,
                       time.perf_counter() - self.started, extra)
        self.written.append(path)
        logger.info("wrote %s", path)
        return path


def _path_rows(record, ids) -> List[list]:
    return [[t] + list(state) + [lt[cid] for cid in ids] for t, state, lt in record.rows()]


def _coordinate_names(dim: int) -> List[str]:
    return [f"x{k}" for k in range(dim)]


def _check_compat(run: _Run, sc: Scenario) -> int:
    cfg = run.config
    num = cfg.numerics
    if sc.planet is not None:
        sampler = JammedSampler(sc.planet, cfg.seed, num.get("act_tol"))
    else:
        sampler = RaySampler(sc.cset, cfg.seed, act_tol=num.get("act_tol"))
    report = check_compatibility(sc.cset, sampler, num["n_samples"], refute_tol=num["refute_tol"],
                                 workers=cfg.workers, seed=cfg.seed)
    run.report("compat", report.to_dict())
    if not report.certified:
        print(f"compatibility {report.verdict}: beta0 {report.beta0_estimate:.6g} "
              f"at {report.worst_active}", file=sys.stderr)
        return EXIT_MODEL
    return EXIT_OK


def _simulate(run: _Run, sc: Scenario) -> int:
    cfg = run.config
    num = cfg.numerics
    D = sc.cset.dimension
    ids = sc.cset.ids
    if num["n_paths"] == 1:
        record = simulate(sc.dynamics, sc.x0, num["T"], num["dt"], cfg.seed)
        header = ["time"] + _coordinate_names(D) + [f"L[{cid}]" for cid in ids]
        run.table("path", header, _path_rows(record, ids),
                  {"support_violations": record.check_support(sc.dynamics.act_tol),
                   "retried_steps": record.retried_steps})
        if sc.planet is not None:
            physical = rescale_local_times(record, sc.planet)
            names = list(physical)
            rows = [[t] + [physical[nm][k] for nm in names]
                    for k, t in enumerate(record.times)]
            run.table("physical_local_times", ["time"] + names, rows)
            run.table("particles", ["particle"] + [f"x{k}" for k in range(sc.planet.d)]
                      + ["radius"], particle_table(sc.planet, record.states[-1]))
        return EXIT_OK
    x0s = np.tile(sc.x0, (num["n_paths"], 1))
    ens = simulate_ensemble(sc.dynamics, x0s, num["T"], num["dt"], cfg.seed,
                            workers=cfg.workers, record_every=num.get("record_every"))
    header = ["path"] + _coordinate_names(D) + [f"L[{cid}]" for cid in ids]
    rows = [[i] + list(ens.final[i]) + list(ens.local_times[i]) for i in range(ens.n_paths)]
    run.table("ensemble", header, rows, {"support_violations": ens.support_violations,
                                         "min_feasibility": ens.min_feasibility,
                                         "retried": ens.retried})
    if ens.snapshots is not None:
        rows = [[int(k), float(k * ens.dt), i] + list(ens.snapshots[s, i])
                for s, k in enumerate(ens.snapshot_steps) for i in range(ens.n_paths)]
        run.table("snapshots", ["step", "time", "path"] + _coordinate_names(D), rows)
    return EXIT_OK


def _refuse_unknown(cfg: RunConfig, sc: Scenario) -> None:
    if sc.planet is None:
        return
    verdict = integrability(sc.planet)
    if not verdict.finite:
        if cfg.override_integrability:
            logger.warning("integrability %s (%s); sampling anyway", verdict.verdict,
                           verdict.reason)
            return
        raise IntegrabilityError(f"integrability is {verdict.verdict} ({verdict.reason}); "
                                 "use --override-integrability to sample anyway")


def _sample_gibbs(run: _Run, sc: Scenario) -> int:
    cfg = run.config
    num = cfg.numerics
    _refuse_unknown(cfg, sc)
    if num["sampler"] == "rejection":
        samples = sample_rejection(sc.gibbs, num["n_samples"], cfg.seed)
        extra = {"sampler": "rejection"}
    else:
        seeds = [(cfg.seed + k) for k in range(num["chains"])]
        per_chain = -(-num["n_samples"] // num["chains"])
        result = run_chains(sc.gibbs, per_chain, seeds, workers=cfg.workers,
                            burn_in=num.get("burn_in"), proposal_scale=num.get("proposal_scale"),
                            thin=num["thin"], x0=sc.x0)
        samples = result.samples[: num["n_samples"]]
        extra = {"sampler": "mcmc", "acceptance_rate": result.acceptance_rate,
                 "burn_in": result.burn_in, "autocorr_time": result.autocorr_time}
    run.table("samples", _coordinate_names(sc.cset.dimension), [list(s) for s in samples], extra)
    return EXIT_OK


def _reversibility(run: _Run, sc: Scenario) -> int:
    cfg = run.config
    num = cfg.numerics
    paths = num["n_paths"] if num["n_paths"] > 1 else num["n_samples"]
    report = reversibility_test(sc.dynamics, paths, num["T"], num["dt"], cfg.seed,
                                alpha=num["alpha"], gibbs=sc.gibbs, workers=cfg.workers)
    run.report("reversibility", report.to_dict())
    if report.verdict != "pass":
        print(f"reversibility {report.verdict}: {report.reason}", file=sys.stderr)
        return EXIT_STATISTICAL
    return EXIT_OK


def _planet(run: _Run, sc: Scenario) -> int:
    cfg = run.config
    num = cfg.numerics
    if cfg.mode == "simulate":
        return _simulate(run, sc)
    if cfg.mode == "check-model":
        result = check_model(sc.planet, num["n_samples"], cfg.seed, cfg.workers)
        run.report("model_check", result.to_dict())
        return EXIT_OK if result.ok else EXIT_MODEL
    curve = clustering_curve(sc.planet, num["temperatures"], num["eps"], num["n_samples"],
                             cfg.seed, workers=cfg.workers,
                             override_integrability=cfg.override_integrability)
    rows = [[p.tau, p.estimate, p.ci_low, p.ci_high, p.n_samples] for p in curve]
    run.table("curve", ["tau", "estimate", "ci_low", "ci_high", "n_samples"], rows,
              {"integrability": {str(p.tau): p.integrability for p in curve}})
    return EXIT_OK


HANDLERS: Dict[str, Callable[[_Run, Scenario], int]] = {
    "check-compat": _check_compat,
    "simulate": _simulate,
    "sample-gibbs": _sample_gibbs,
    "reversibility": _reversibility,
    "planet": _planet,
}


def run(config: RunConfig, verbose: bool = False) -> int:
    """Execute ``config``; returns the process exit status."""
    try:
        scenario = build_scenario(config.model, config.numerics, config.seed)
        return HANDLERS[config.command](_Run(config), scenario)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except NUMERICAL_ERRORS as e:
        print(f"Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MODEL_ERRORS as e:
        print(f"Invalid model: {e}", file=sys.stderr)
        return EXIT_MODEL
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        if verbose:
            import traceback
            traceback.print_exc()
        return EXIT_UNEXPECTED
