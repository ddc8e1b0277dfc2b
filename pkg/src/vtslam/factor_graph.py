"""Pose-graph MAP estimation: prior and between factors, Levenberg-Marquardt on SE(3).

Residual conventions (tangent vectors ordered rot, trans):

* prior    ``log(target^-1 P_i)``
* between  ``log(m^-1 P_i^-1 P_j)`` with ``m`` the measured ``P_i^-1 P_j``

Poses are updated by right perturbation, ``P <- P exp(delta)``.  A prior
with an all-zero covariance pins its variable to the target exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, adjoint, compose, exp, format_pose, inverse, log_vector, se3_right_jacobian_inv


class GraphError(ValueError):
    pass


def _validate_covariance(cov, allow_zero: bool) -> np.ndarray:
    cov = np.array(cov, dtype=float)
    if cov.shape != (6, 6):
        raise GraphError(f"covariance must be 6x6, got {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise GraphError("covariance has non-finite entries")
    if not np.allclose(cov, cov.T, atol=1e-12, rtol=1e-12):
        raise GraphError("covariance is not symmetric")
    cov = 0.5 * (cov + cov.T)
    if allow_zero and not cov.any():
        return cov
    ev = np.linalg.eigvalsh(cov)
    if ev[0] < 0 and ev[0] < -1e-12 * ev[-1]:
        raise GraphError(f"covariance is not positive semi-definite (eigenvalue {ev[0]:.3g})")
    if ev[0] <= 1e-15 * max(ev[-1], 1.0):
        raise GraphError("covariance is singular; only a prior may use an all-zero covariance")
    return cov


def _whitener(cov: np.ndarray) -> np.ndarray:
    # W with W^T W = cov^-1
    ev, V = np.linalg.eigh(cov)
    return (V / np.sqrt(ev)).T


@dataclass(frozen=True, eq=False)
class PriorFactor:
    index: int
    target: Pose
    covariance: np.ndarray = field(default_factory=lambda: np.zeros((6, 6)))

    @property
    def hard(self) -> bool:
        return not np.any(self.covariance)

    @property
    def keys(self) -> tuple[int, ...]:
        return (self.index,)


@dataclass(frozen=True, eq=False)
class BetweenFactor:
    i: int
    j: int
    measurement: Pose
    covariance: np.ndarray
    label: str = ""

    @property
    def keys(self) -> tuple[int, ...]:
        return (self.i, self.j)


@dataclass
class SolveResult:
    poses: list
    final_cost: float
    initial_cost: float
    iterations: int
    converged: bool
    reason: str = ""


class FactorGraph:
    """Pose variables with their initial values plus a list of factors."""

    def __init__(self):
        self.initial: list[Pose] = []
        self.factors: list = []
        self.fixed: dict[int, Pose] = {}
        self._whiteners: list = []

    def __len__(self):
        return len(self.initial)

    def add_variable(self, initial: Pose) -> int:
        self.initial.append(initial)
        return len(self.initial) - 1

    def add_factor(self, f) -> None:
        n = len(self.initial)
        for k in f.keys:
            if not 0 <= k < n:
                raise GraphError(f"factor references variable {k}, graph has {n}")
        if isinstance(f, BetweenFactor):
            if f.i == f.j:
                raise GraphError("between factor must join two distinct variables")
            cov = _validate_covariance(f.covariance, allow_zero=False)
            f = BetweenFactor(f.i, f.j, f.measurement, cov, f.label)
        elif isinstance(f, PriorFactor):
            cov = _validate_covariance(f.covariance, allow_zero=True)
            f = PriorFactor(f.index, f.target, cov)
            if f.hard:
                held = self.fixed.get(f.index)
                if held is not None and not held.isclose(f.target, 1e-12):
                    raise GraphError(f"variable {f.index} pinned to two different poses")
                self.fixed[f.index] = f.target
        else:
            raise GraphError(f"unknown factor type {type(f).__name__}")
        self.factors.append(f)
        self._whiteners.append(None if isinstance(f, PriorFactor) and f.hard else _whitener(f.covariance))

    def check_gauge(self) -> None:
        """Reject graphs where some variable is not tied to a prior."""
        n = len(self.initial)
        if n == 0:
            raise GraphError("graph has no variables")
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        anchored = set()
        for f in self.factors:
            if isinstance(f, BetweenFactor):
                parent[find(f.i)] = find(f.j)
        for f in self.factors:
            if isinstance(f, PriorFactor):
                anchored.add(find(f.index))
        loose = [k for k in range(n) if find(k) not in anchored]
        if loose:
            raise GraphError(
                f"under-constrained graph: variables {loose} are not connected to any prior"
            )

    def dump(self) -> str:
        """One line per factor: ``PRIOR idx pose sigma...`` / ``BETWEEN i j pose sigma...``."""
        lines = []
        for f in self.factors:
            sig = " ".join(repr(float(s)) for s in np.sqrt(np.diag(f.covariance)))
            if isinstance(f, PriorFactor):
                lines.append(f"PRIOR {f.index} {format_pose(f.target)} {sig}")
            else:
                lines.append(f"BETWEEN {f.i} {f.j} {format_pose(f.measurement)} {sig}")
        return "\n".join(lines) + ("\n" if lines else "")


# --------------------------------------------------------------------------
# residuals


def prior_residual(f: PriorFactor, p: Pose) -> np.ndarray:
    return log_vector(compose(inverse(f.target), p))


def between_residual(f: BetweenFactor, pi: Pose, pj: Pose) -> np.ndarray:
    return log_vector(compose(inverse(f.measurement), compose(inverse(pi), pj)))


def between_jacobians(r: np.ndarray, pi: Pose, pj: Pose) -> tuple[np.ndarray, np.ndarray]:
    """d r / d delta_i and d r / d delta_j under right perturbation."""
    Jj = se3_right_jacobian_inv(r)
    Ji = -Jj @ adjoint(compose(inverse(pj), pi))
    return Ji, Jj


def _cost(graph: FactorGraph, poses: list) -> float:
    total = 0.0
    for f, W in zip(graph.factors, graph._whiteners):
        if W is None:
            continue
        if isinstance(f, PriorFactor):
            r = prior_residual(f, poses[f.index])
        else:
            r = between_residual(f, poses[f.i], poses[f.j])
        e = W @ r
        total += float(e @ e)
    return total


def _linearize(graph: FactorGraph, poses: list, column: dict, n_free: int):
    rows = sum(1 for W in graph._whiteners if W is not None)
    J = np.zeros((6 * rows, 6 * n_free))
    e = np.zeros(6 * rows)
    k = 0
    for f, W in zip(graph.factors, graph._whiteners):
        if W is None:
            continue
        sl = slice(6 * k, 6 * k + 6)
        if isinstance(f, PriorFactor):
            r = prior_residual(f, poses[f.index])
            c = column.get(f.index)
            if c is not None:
                J[sl, 6 * c : 6 * c + 6] = W @ se3_right_jacobian_inv(r)
        else:
            pi, pj = poses[f.i], poses[f.j]
            r = between_residual(f, pi, pj)
            Ji, Jj = between_jacobians(r, pi, pj)
            for idx, Jx in ((f.i, Ji), (f.j, Jj)):
                c = column.get(idx)
                if c is not None:
                    J[sl, 6 * c : 6 * c + 6] = W @ Jx
        e[sl] = W @ r
        k += 1
    return J, e


def solve(
    graph: FactorGraph,
    initial: list | None = None,
    max_iterations: int = 100,
    rel_tol: float = 1e-9,
    step_tol: float = 1e-9,
) -> SolveResult:
    """Minimize the sum of squared Mahalanobis residuals with Levenberg-Marquardt.

    Stops when an accepted step lowers the cost by a relative amount below
    ``rel_tol``, when the step norm drops below ``step_tol``, or after
    ``max_iterations`` iterations (then ``converged`` is False).
    """
    graph.check_gauge()
    poses = list(initial if initial is not None else graph.initial)
    if len(poses) != len(graph):
        raise GraphError(f"initial guess has {len(poses)} poses, graph has {len(graph)}")
    for idx, target in graph.fixed.items():
        poses[idx] = target
    free = [k for k in range(len(poses)) if k not in graph.fixed]
    column = {k: c for c, k in enumerate(free)}

    cost = _cost(graph, poses)
    initial_cost = cost
    if not free or cost == 0.0:
        return SolveResult(poses, cost, initial_cost, 0, True, "nothing to optimize")

    lam = 1e-4
    it = 0
    converged, reason = False, "iteration limit"
    while it < max_iterations:
        it += 1
        J, e = _linearize(graph, poses, column, len(free))
        H = J.T @ J
        g = J.T @ e
        damp = np.diag(H).copy()
        damp[damp < 1e-12] = 1e-12
        accepted = False
        while lam < 1e12:
            try:
                step = -np.linalg.solve(H + lam * np.diag(damp), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = list(poses)
            for k, c in column.items():
                trial[k] = compose(poses[k], exp(step[6 * c : 6 * c + 6]))
            new_cost = _cost(graph, trial)
            if new_cost < cost:
                accepted = True
                break
            if np.linalg.norm(step) < step_tol:
                break
            lam *= 10.0
        if not accepted:
            converged = np.linalg.norm(step) < step_tol or lam >= 1e12
            reason = "no further decrease"
            break
        decrease = (cost - new_cost) / cost
        poses, cost = trial, new_cost
        lam = max(lam / 10.0, 1e-12)
        if decrease < rel_tol:
            converged, reason = True, "relative decrease"
            break
        if np.linalg.norm(step) < step_tol:
            converged, reason = True, "step size"
            break
        if cost == 0.0:
            converged, reason = True, "zero cost"
            break
    if converged and reason == "relative decrease":
        # Gauss-Newton converges only linearly on problems with non-zero
        # residuals, so a small relative decrease can still leave ~1e-5 of
        # error; finish with undamped steps while they keep contracting.  Near
        # the minimum the cost only changes in its last digits, so a rise at
        # rounding level does not reject a step
        last = np.inf
        for _ in range(20):
            J, e = _linearize(graph, poses, column, len(free))
            try:
                step = -np.linalg.lstsq(J, e, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            size = np.linalg.norm(step)
            if size < 1e-3 * step_tol or size > 0.5 * last:
                break
            trial = list(poses)
            for k, c in column.items():
                trial[k] = compose(poses[k], exp(step[6 * c : 6 * c + 6]))
            new_cost = _cost(graph, trial)
            if new_cost > cost * (1.0 + 1e-12):
                break
            poses, cost, last = trial, new_cost, size
            it += 1
    return SolveResult(poses, cost, initial_cost, it, converged, reason)


def incremental_extend(
    graph: FactorGraph,
    previous: SolveResult,
    odometry: list,
    loop_closures: list = (),
    **solve_kw,
) -> SolveResult:
    """Add one variable with its odometry factors and any loop closures, then re-solve.

    The new variable starts at ``previous pose * measurement`` of the first
    odometry factor; existing variables start at the previous solution.
    """
    if len(previous.poses) != len(graph):
        raise GraphError("previous solution does not match the graph")
    if not odometry:
        raise GraphError("a new step needs at least one odometry factor")
    new = len(graph)
    first = odometry[0]
    if first.j != new or not 0 <= first.i < new:
        raise GraphError(f"odometry factor must lead from an existing variable to {new}")
    guess = compose(previous.poses[first.i], first.measurement)
    graph.add_variable(guess)
    for f in [*odometry, *loop_closures]:
        graph.add_factor(f)
    return solve(graph, initial=[*previous.poses, guess], **solve_kw)
