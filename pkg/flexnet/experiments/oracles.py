"""Independent reference computations used by the verify suites and tests.

None of these share code with the solvers they check. They are exact or
brute force and only meant for small instances.
"""

from __future__ import annotations

import itertools

import numpy as np


def fixed_point_rates(routing: np.ndarray, arrivals: np.ndarray, iterations: int = 10_000) -> np.ndarray:
    """Iterate nu <- lambda + R^T nu from nu = lambda."""
    routing = np.asarray(routing, dtype=float)
    arrivals = np.asarray(arrivals, dtype=float)
    nu = arrivals.copy()
    for _ in range(iterations):
        nu = arrivals + routing.T @ nu
    return nu


def subset_rho_star(rates: np.ndarray, speeds: np.ndarray, mask: np.ndarray, nu: np.ndarray) -> float:
    """Exact rho* for factorized rates by enumerating task subsets.

    With mu_kj = mu_k alpha_j the plan is a bipartite flow: server j ships at
    most alpha_j * rho of effort, task k needs nu_k / mu_k. By max-flow
    min-cut, rho* = max over task sets U of demand(U) / speed(N(U)).
    """
    K = mask.shape[0]
    demand = np.asarray(nu, dtype=float) / np.asarray(rates, dtype=float)
    best = 0.0
    for size in range(1, K + 1):
        for subset in itertools.combinations(range(K), size):
            neighbours = mask[list(subset)].any(axis=0)
            capacity = float(speeds[neighbours].sum())
            best = max(best, float(demand[list(subset)].sum()) / capacity)
    return best


def lifted_grid_rho_star(rates: np.ndarray, mask: np.ndarray, nu: np.ndarray, resolution: float = 0.01) -> float:
    """Brute-force rho* over a lifted grid p_kj in {0, res, ..., 1}.

    Only usable when the number of capable pairs is tiny (at most four).
    Returns inf if no grid point serves every nu_k.
    """
    pairs = list(zip(*np.nonzero(mask > 0)))
    levels = np.round(np.arange(0.0, 1.0 + resolution / 2, resolution), 12)
    grids = np.meshgrid(*([levels] * len(pairs)), indexing="ij")
    K, J = mask.shape
    served = np.zeros((K,) + grids[0].shape)
    load = np.zeros((J,) + grids[0].shape)
    for grid, (k, j) in zip(grids, pairs):
        served[k] += rates[k, j] * grid
        load[j] += grid
    demand = np.asarray(nu, dtype=float).reshape((K,) + (1,) * len(pairs))
    ok = np.all(served >= demand - 1e-12, axis=0)
    if not ok.any():
        return np.inf
    return float(load.max(axis=0)[ok].min())


def factorized_vertices(speeds: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Vertices of C: each server either idles or works fully on one task."""
    K, J = mask.shape
    options = [[None] + [k for k in range(K) if mask[k, j] > 0] for j in range(J)]
    points = set()
    for choice in itertools.product(*options):
        point = np.zeros(K)
        for j, k in enumerate(choice):
            if k is not None:
                point[k] += speeds[j]
        points.add(tuple(np.round(point, 15)))
    return np.array(sorted(points))


def project_onto_hull(vertices: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto conv(vertices) by support enumeration.

    The optimum lies on a face spanned by at most dim + 1 affinely
    independent vertices, so the best nonnegative affine least-squares fit
    over all such supports is the projection.
    """
    x = np.asarray(x, dtype=float)
    dim = vertices.shape[1]
    best_point, best_distance = None, np.inf
    for size in range(1, min(dim + 1, len(vertices)) + 1):
        for support in itertools.combinations(range(len(vertices)), size):
            points = vertices[list(support)]
            base = points[0]
            if size == 1:
                weights = np.array([1.0])
            else:
                directions = (points[1:] - base).T
                coefficients, *_ = np.linalg.lstsq(directions, x - base, rcond=None)
                weights = np.concatenate([[1.0 - coefficients.sum()], coefficients])
            if np.any(weights < -1e-12):
                continue
            candidate = weights @ points
            distance = float(np.sum((x - candidate) ** 2))
            if distance < best_distance:
                best_point, best_distance = candidate, distance
    return best_point


def random_point_in_c(speeds: np.ndarray, mask: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """A random convex combination of the vertices of C."""
    vertices = factorized_vertices(speeds, mask)
    weights = rng.dirichlet(np.ones(len(vertices)))
    return weights @ vertices
