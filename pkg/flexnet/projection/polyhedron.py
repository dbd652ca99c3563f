"""Feasible-allocation polyhedra and Euclidean projections onto them.

Three families are supported:

``c``       C = {p : p_k = sum_j alpha_j P_kj, P_kj >= 0, sum_{k in T_j} P_kj <= 1}
``c-eps``   C intersected with {p_k >= eps0}
``lifted``  the per-server capped simplices themselves, in K x J space

Factorized projections solve the lifted least-squares problem with an
accelerated projected gradient (see ``kernels``). The lower bounds of
``c-eps`` are handled by Dykstra alternation between C and the box.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from network.rates import NominalRates, nominal_rates
from network.specs import NetworkSpec
from planner.simplex import solve_lp
from .exceptions import DimensionMismatch, EmptyPolyhedron, NoConvergence
from .kernels import fista_factorized, project_lifted_columns

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 100_000
DEFAULT_TOLERANCE = 1e-10
MEMBERSHIP_TOLERANCE = 1e-9


class PolyhedronMode(str, enum.Enum):
    C = "c"
    C_EPS = "c-eps"
    LIFTED = "lifted"


@dataclass(frozen=True, eq=False)
class PolyhedronSpec:
    mode: PolyhedronMode
    alpha: np.ndarray
    mask: np.ndarray
    epsilon0: float = 0.0
    max_iter: int = DEFAULT_MAX_ITER
    tolerance: float = DEFAULT_TOLERANCE
    task_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        mode = PolyhedronMode(self.mode)
        object.__setattr__(self, "mode", mode)
        mask = (np.asarray(self.mask, dtype=float) > 0).astype(float)
        alpha = np.asarray(self.alpha, dtype=float).ravel()
        if mask.ndim != 2 or alpha.size != mask.shape[1]:
            raise DimensionMismatch(f"alpha has {alpha.size} entries for a mask of shape {mask.shape}")
        for array in (mask, alpha):
            array.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "alpha", alpha)
        if not self.task_ids:
            object.__setattr__(self, "task_ids", tuple(range(1, mask.shape[0] + 1)))
        if self.epsilon0 < 0:
            raise ValueError(f"eps0 must be nonnegative, got {self.epsilon0}")
        if mode is PolyhedronMode.C_EPS and self.epsilon0 > 0:
            self._certify_nonempty()

    @classmethod
    def for_network(
        cls,
        spec: NetworkSpec,
        mode: PolyhedronMode | str = PolyhedronMode.C,
        epsilon0: float | None = None,
        **options,
    ) -> "PolyhedronSpec":
        """The polyhedron of one network; eps0 defaults to ``default_epsilon0``."""
        mode = PolyhedronMode(mode)
        if mode is PolyhedronMode.C_EPS and epsilon0 is None:
            epsilon0 = default_epsilon0(spec)
        alpha = np.ones(spec.num_servers) if mode is PolyhedronMode.LIFTED else spec.speeds()
        return cls(
            mode=mode,
            alpha=alpha,
            mask=spec.capability_mask(),
            epsilon0=float(epsilon0 or 0.0),
            task_ids=spec.task_ids,
            **options,
        )

    @property
    def num_tasks(self) -> int:
        return self.mask.shape[0]

    @property
    def num_servers(self) -> int:
        return self.mask.shape[1]

    @property
    def lifted(self) -> bool:
        return self.mode is PolyhedronMode.LIFTED

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mask.shape if self.lifted else (self.num_tasks,)

    def effective(self, witness: np.ndarray) -> np.ndarray:
        """p_k = sum_j alpha_j P_kj."""
        return witness @ self.alpha

    def _certify_nonempty(self) -> None:
        pairs = list(zip(*np.nonzero(self.mask)))
        A_ub = np.zeros((self.num_tasks + self.num_servers, len(pairs)))
        b_ub = np.ones(self.num_tasks + self.num_servers)
        for col, (k, j) in enumerate(pairs):
            A_ub[k, col] = -self.alpha[j]
            A_ub[self.num_tasks + j, col] = 1.0
        b_ub[: self.num_tasks] = -self.epsilon0
        result = solve_lp(np.zeros(len(pairs)), A_ub, b_ub)
        if result.status == "infeasible":
            raise EmptyPolyhedron(f"No allocation gives every task at least eps0 = {self.epsilon0}")

    def serialize(self) -> dict:
        return {"mode": self.mode.value, "epsilon0": self.epsilon0}


@dataclass
class ProjectionResult:
    point: np.ndarray
    lifted_witness: np.ndarray
    iterations: int
    residual: float


@dataclass
class MembershipResult:
    member: bool
    witness: np.ndarray | None = None

    def __bool__(self) -> bool:
        return self.member


def default_epsilon0(spec: NetworkSpec, nu: NominalRates | None = None) -> float:
    """eps0 = 0.5 * min_k nu_k / mu_k, which keeps p* inside C_eps0."""
    if nu is None:
        nu = nominal_rates(spec)
    # Raw per-pair rates fall back to the full-effort service probability.
    rates = spec.task_rate_vector() if spec.is_factorized else spec.max_service_probability()
    return float(0.5 * np.min(nu.nu / rates))


def _as_vector(poly: PolyhedronSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != poly.shape:
        raise DimensionMismatch(f"Expected shape {poly.shape}, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("Cannot project a vector with non-finite entries")
    return x


def _rescaled_witness(poly: PolyhedronSpec, x: np.ndarray, witness: np.ndarray | None) -> np.ndarray | None:
    """A lifted point mapping exactly to x built by rescaling rows of the witness, if one exists."""
    if witness is None or np.any(x < 0):
        return None
    previous = poly.effective(witness)
    supported = previous > 0
    if np.any((x > 0) & ~supported):
        return None
    scale = np.zeros_like(x)
    scale[supported] = x[supported] / previous[supported]
    candidate = witness * scale[:, None]
    if np.all(candidate.sum(axis=0) <= 1.0):
        return candidate
    return None


def _project_onto_c(poly: PolyhedronSpec, x: np.ndarray, warm: np.ndarray | None) -> ProjectionResult:
    certified = _rescaled_witness(poly, x, warm)
    if certified is not None:
        return ProjectionResult(point=x.copy(), lifted_witness=certified, iterations=0, residual=0.0)
    start = np.zeros(poly.mask.shape) if warm is None else np.asarray(warm, dtype=float)
    witness, iterations, converged, residual = fista_factorized(
        x, poly.alpha, poly.mask, start, poly.tolerance, poly.max_iter
    )
    if not converged:
        raise NoConvergence(f"Projection onto C did not settle in {poly.max_iter} iterations (residual {residual:.3g})")
    logger.debug("Projection onto C took %d iterations", iterations)
    return ProjectionResult(
        point=poly.effective(witness), lifted_witness=witness, iterations=iterations, residual=float(residual)
    )


def _project_onto_c_eps(poly: PolyhedronSpec, x: np.ndarray, warm: np.ndarray | None) -> ProjectionResult:
    lower = poly.epsilon0
    first = _project_onto_c(poly, x, warm)
    if np.all(first.point >= lower):
        return first

    # Dykstra: alternate C and the box p >= eps0 with correction terms.
    iterate = x.copy()
    c_correction = np.zeros_like(x)
    box_correction = np.zeros_like(x)
    witness = first.lifted_witness
    total = first.iterations
    for sweep in range(1, poly.max_iter + 1):
        on_c = _project_onto_c(poly, iterate + c_correction, witness)
        witness = on_c.lifted_witness
        total += on_c.iterations
        c_correction = iterate + c_correction - on_c.point
        in_box = np.maximum(on_c.point + box_correction, lower)
        box_correction = on_c.point + box_correction - in_box
        move = float(np.max(np.abs(in_box - iterate)))
        gap = float(np.max(lower - on_c.point, initial=0.0))
        iterate = in_box
        if move < poly.tolerance and gap < poly.tolerance:
            logger.debug("Projection onto C_eps0 took %d sweeps, %d inner iterations", sweep, total)
            return ProjectionResult(
                point=on_c.point, lifted_witness=witness, iterations=total, residual=max(move, gap)
            )
    raise NoConvergence(f"Dykstra sweeps for C_eps0 did not settle in {poly.max_iter} rounds")


def project(poly: PolyhedronSpec, x, warm: np.ndarray | None = None) -> ProjectionResult:
    """Euclidean projection of x onto ``poly``.

    ``warm`` is an optional lifted witness from an earlier call. It only
    changes how fast the answer is found, not the answer itself.
    """
    x = _as_vector(poly, x)
    if poly.lifted:
        point = np.empty_like(x)
        project_lifted_columns(x, poly.mask, point)
        return ProjectionResult(point=point, lifted_witness=point, iterations=1, residual=0.0)
    if poly.mode is PolyhedronMode.C_EPS and poly.epsilon0 > 0:
        return _project_onto_c_eps(poly, x, warm)
    return _project_onto_c(poly, x, warm)


def _lifted_membership(poly: PolyhedronSpec, p: np.ndarray) -> MembershipResult:
    outside = np.abs(p[poly.mask == 0])
    ok = (
        np.all(p >= -MEMBERSHIP_TOLERANCE)
        and np.all(outside <= MEMBERSHIP_TOLERANCE)
        and np.all(p.sum(axis=0) <= 1.0 + MEMBERSHIP_TOLERANCE)
    )
    return MembershipResult(bool(ok), p.copy() if ok else None)


def membership(poly: PolyhedronSpec, p) -> MembershipResult:
    """Whether p lies in ``poly``, with a lifted witness when it does.

    Factorized sets are checked by a feasibility LP over P_kj.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != poly.shape:
        raise DimensionMismatch(f"Expected shape {poly.shape}, got {p.shape}")
    if poly.lifted:
        return _lifted_membership(poly, p)
    if np.any(p < -MEMBERSHIP_TOLERANCE):
        return MembershipResult(False)
    if poly.mode is PolyhedronMode.C_EPS and np.any(p < poly.epsilon0 - MEMBERSHIP_TOLERANCE):
        return MembershipResult(False)

    pairs = list(zip(*np.nonzero(poly.mask)))
    A_eq = np.zeros((poly.num_tasks, len(pairs)))
    A_ub = np.zeros((poly.num_servers, len(pairs)))
    for col, (k, j) in enumerate(pairs):
        A_eq[k, col] = poly.alpha[j]
        A_ub[j, col] = 1.0
    b_ub = np.full(poly.num_servers, 1.0 + MEMBERSHIP_TOLERANCE)
    result = solve_lp(np.zeros(len(pairs)), A_ub, b_ub, A_eq, np.maximum(p, 0.0))
    if not result.optimal:
        return MembershipResult(False)
    witness = np.zeros(poly.mask.shape)
    for col, (k, j) in enumerate(pairs):
        witness[k, j] = max(result.x[col], 0.0)
    return MembershipResult(True, witness)
