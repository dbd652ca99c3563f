"""Property suites behind ``manage.py verify``.

Each suite returns ``CheckResults``; a check passes when the library agrees
with an independent oracle or a known closed-form answer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from network.rates import NominalRates, nominal_rates
from network.serializers import load_bundled_spec
from planner.plan import capacity_boundary, solve_static_plan
from policies import updates
from policies.registry import build_policy
from policies.schedule import StepSizeSchedule
from projection.polyhedron import PolyhedronMode, PolyhedronSpec, membership, project
from sim.arrivals import ArrivalMode, ArrivalProcess
from sim.engine import run
from sim.exceptions import MemoryGuardExceeded, SimulationError
from sim.harness import frozen_estimator_harness
from .checks import CheckResult, CheckResults
from .instances import random_factorized_spec, random_generic_spec, random_polyhedron
from .oracles import factorized_vertices, lifted_grid_rho_star, project_onto_hull, random_point_in_c, subset_rho_star

logger = logging.getLogger(__name__)

PROJECTION_TOLERANCE = 2e-3
PROPERTY_TOLERANCE = 1e-7
LP_TOLERANCE = 1e-9
BOUNDARY_TOLERANCE = 1e-5
GRID_RESOLUTION = 0.04
Z_LIMIT = 4.0
ROBUST_TOLERANCE = 0.1


@dataclass(frozen=True)
class SuiteOptions:
    seed: int = 0
    samples: int = 100_000
    instances: int = 100
    horizon: int = 20_000
    steps: int = 5000


def _check(title: str, key: str, passed: bool, feedback: str) -> CheckResult:
    return CheckResult(title=title, key=key, passed=bool(passed), feedback=feedback)


def projection_suite(options: SuiteOptions) -> CheckResults:
    rng = np.random.default_rng(options.seed)
    worst_gap = worst_idempotence = worst_expansion = 0.0
    outside = 0
    for _ in range(options.instances):
        poly = random_polyhedron(rng)
        x, y = rng.uniform(0.0, 2.0, size=(2, poly.num_tasks))
        px, py = project(poly, x).point, project(poly, y).point
        expected = project_onto_hull(factorized_vertices(poly.alpha, poly.mask), x)
        worst_gap = max(worst_gap, float(np.linalg.norm(px - expected)))
        worst_idempotence = max(worst_idempotence, float(np.max(np.abs(project(poly, px).point - px))))
        worst_expansion = max(worst_expansion, float(np.linalg.norm(px - py) - np.linalg.norm(x - y)))
        outside += not membership(poly, px)

    fqn = load_bundled_spec("fqn3")
    c_eps = PolyhedronSpec.for_network(fqn, PolyhedronMode.C_EPS)
    lowest = min(float(project(c_eps, rng.uniform(-0.5, 1.5, size=3)).point.min()) for _ in range(10))

    n = options.instances
    return CheckResults(
        [
            _check(
                "Projection matches the vertex-enumeration oracle",
                "projection.oracle",
                worst_gap <= PROJECTION_TOLERANCE and outside == 0,
                f"max distance {worst_gap:.3g} over {n} instances, {outside} results outside C",
            ),
            _check(
                "Projection is idempotent",
                "projection.idempotent",
                worst_idempotence <= PROPERTY_TOLERANCE,
                f"max |P(P(x)) - P(x)| = {worst_idempotence:.3g}",
            ),
            _check(
                "Projection is non-expansive",
                "projection.non_expansive",
                worst_expansion <= PROPERTY_TOLERANCE,
                f"max |P(x) - P(y)| - |x - y| = {worst_expansion:.3g}",
            ),
            _check(
                "Projection onto C_eps0 keeps every coordinate above eps0",
                "projection.c_eps",
                lowest >= c_eps.epsilon0 - 1e-8,
                f"lowest coordinate {lowest:.6g}, eps0 {c_eps.epsilon0:.6g}",
            ),
        ]
    )


def lp_suite(options: SuiteOptions) -> CheckResults:
    rng = np.random.default_rng(options.seed + 1)
    worst_subset = worst_homogeneity = 0.0
    count = max(options.instances // 2, 1)
    for _ in range(count):
        spec = random_factorized_spec(rng, K=int(rng.integers(1, 4)), J=int(rng.integers(1, 4)))
        nu = nominal_rates(spec)
        rho_star = solve_static_plan(spec, nu).rho_star
        expected = subset_rho_star(spec.task_rate_vector(), spec.speeds(), spec.capability_mask() > 0, nu.nu)
        worst_subset = max(worst_subset, abs(rho_star - expected))
        for factor in (0.5, 3.0):
            scaled = solve_static_plan(spec, nu.scaled(factor)).rho_star
            worst_homogeneity = max(worst_homogeneity, abs(scaled - factor * rho_star))

    grid_ok = True
    for _ in range(5):
        spec, rates, nu = random_generic_spec(rng)
        rho_star = solve_static_plan(spec, NominalRates(nu)).rho_star
        grid = lifted_grid_rho_star(rates, np.ones((2, 2)), nu, resolution=GRID_RESOLUTION)
        grid_ok &= rho_star <= grid + LP_TOLERANCE and grid - rho_star <= 2 * GRID_RESOLUTION + LP_TOLERANCE

    results = CheckResults(
        [
            _check(
                "Simplex rho* matches the subset bound",
                "lp.subset_oracle",
                worst_subset <= LP_TOLERANCE,
                f"max gap {worst_subset:.3g} over {count} factorized instances",
            ),
            _check(
                "rho* is homogeneous in the arrival rates",
                "lp.homogeneity",
                worst_homogeneity <= LP_TOLERANCE,
                f"max |rho*(c nu) - c rho*(nu)| = {worst_homogeneity:.3g}",
            ),
            _check(
                "Simplex rho* agrees with the lifted grid for raw rates",
                "lp.lifted_grid",
                grid_ok,
                f"5 two-by-two instances at resolution {GRID_RESOLUTION}",
            ),
        ]
    )
    for name, direction, expected in (("dag5", [1.0], 6 / 23), ("dag5_mode2", [1.0], 3 / 14), ("xmodel", [1.0, 1.0], 3 / 8)):
        boundary = capacity_boundary(load_bundled_spec(name), direction)
        results.append(
            _check(
                f"Capacity boundary of {name}",
                f"lp.boundary.{name}",
                abs(boundary - expected) <= BOUNDARY_TOLERANCE,
                f"{boundary:.7f}, expected {expected:.7f}",
            )
        )
    return results


def estimator_suite(options: SuiteOptions) -> CheckResults:
    rng = np.random.default_rng(options.seed + 2)
    results = CheckResults()
    for name in ("dag5", "fqn3"):
        spec = load_bundled_spec(name)
        for i in range(3):
            p = random_point_in_c(spec.speeds(), spec.capability_mask(), rng)
            estimate = frozen_estimator_harness(spec, p, samples=options.samples, seed=options.seed + 10 * i)
            worst = float(np.max(estimate.z_scores()))
            results.append(
                _check(
                    f"Estimator of {name} is unbiased at random p #{i + 1}",
                    f"estimator.{name}.{i + 1}",
                    estimate.within(Z_LIMIT),
                    f"max |mean - expected| = {worst:.2f} standard errors over {options.samples} slots",
                )
            )
    return results


def _conservation_scenarios():
    dag5 = load_bundled_spec("dag5")
    mode2 = load_bundled_spec("dag5_mode2")
    bursty = ArrivalProcess.mode_switch(
        1000, [ArrivalMode((0.2,)), ArrivalMode((1 / 6,), mode2.task_rates)], batch_size=5
    )
    return [
        ("diamond", "robust", {}, None),
        ("dag5", "robust-delta", {"delta": 0.02}, None),
        ("dag5", "robust-delta", {"delta": 0.02}, bursty),
        ("xmodel", "generic-lifted", {"p0": 0.1}, None),
        ("fqn3", "robust-eps", {}, None),
    ]


def conservation_suite(options: SuiteOptions) -> CheckResults:
    results = CheckResults()
    for name, policy_name, kwargs, arrivals in _conservation_scenarios():
        spec = load_bundled_spec(name)
        policy = build_policy(policy_name, spec=spec, **kwargs)
        label = f"{name} / {policy_name}" + (f" / {arrivals.kind}" if arrivals else "")
        try:
            run(spec, policy, arrivals, horizon=options.horizon, seed=options.seed, conservation_every=1)
        except MemoryGuardExceeded as e:
            passed, feedback = None, f"stopped early: {e}"
        except SimulationError as e:
            passed, feedback = False, f"{type(e).__name__}: {e}"
        else:
            passed, feedback = True, f"{options.horizon} slots checked after every slot"
        results.append(CheckResult(f"Queue dynamics hold for {label}", f"conservation.{name}", passed, feedback))
    return results


def _noiseless_gap(name: str, steps: int) -> float:
    spec = load_bundled_spec(name)
    target = nominal_rates(spec).nu / spec.task_rate_vector()
    policy = build_policy("oracle-gradient", spec=spec, schedule=StepSizeSchedule(0.6))
    for _ in range(steps):
        policy.observe(None)
    return float(np.max(np.abs(policy.allocation - target)))


def _robust_tail_gap(options: SuiteOptions) -> tuple[float, float]:
    """Distance of the second-half mean allocation of robust-eps on dag5 from nu / mu."""
    spec = load_bundled_spec("dag5")
    target = nominal_rates(spec).nu / spec.task_rate_vector()
    policy = build_policy("robust-eps", spec=spec, schedule=StepSizeSchedule(0.6))
    metrics = run(spec, policy, horizon=options.horizon, seed=options.seed, sample_every=max(options.horizon // 200, 1))
    tail = [p for slot, p in zip(metrics.slots, metrics.allocation) if slot > options.horizon // 2]
    return float(np.max(np.abs(np.mean(tail, axis=0) - target))), metrics.max_q_over_n()


def convergence_suite(options: SuiteOptions) -> CheckResults:
    results = CheckResults()
    for name in ("dag5", "fqn3"):
        gap = _noiseless_gap(name, options.steps)
        results.append(
            _check(
                f"Noiseless update on {name} reaches nu / mu",
                f"convergence.{name}",
                gap <= 1e-4,
                f"max |p - p*| = {gap:.3g} after {options.steps} steps",
            )
        )

    gap, q_over_n = _robust_tail_gap(options)
    results.append(
        _check(
            "Robust update on dag5 tracks nu / mu",
            "convergence.robust",
            gap <= ROBUST_TOLERANCE,
            f"max |mean p - p*| = {gap:.3g} over the second half of {options.horizon} slots, max Q/N {q_over_n:.3g}",
        )
    )

    spec = load_bundled_spec("dag5")
    nu, mu = nominal_rates(spec).nu, spec.task_rate_vector()
    policy = build_policy("oracle-gradient", spec=spec, premultiply=True, schedule=StepSizeSchedule.explicit([0.05]))
    values = []
    for _ in range(200):
        values.append(updates.allocation_objective(nu, mu, policy.allocation))
        policy.observe(None)
    increases = sum(b > a + 1e-12 for a, b in zip(values, values[1:]))
    results.append(
        _check(
            "Gradient form never increases the objective",
            "convergence.objective",
            increases == 0 and values[-1] < values[0],
            f"objective {values[0]:.3g} -> {values[-1]:.3g}, {increases} increases",
        )
    )
    return results


SUITES: dict[str, Callable[[SuiteOptions], CheckResults]] = {
    "projection": projection_suite,
    "lp": lp_suite,
    "estimator": estimator_suite,
    "conservation": conservation_suite,
    "convergence": convergence_suite,
}


def run_suites(names, options: SuiteOptions) -> CheckResults:
    results = CheckResults()
    for name in names:
        logger.info("Running %s suite", name)
        results.extend(SUITES[name](options))
    return results
