"""Finite-difference and identity checks for a decoded problem.

Backs the ``check`` command: analytic first derivatives are compared against
central differences of the values, second derivatives against differences of
the first, and the product/restriction/Lagrangian identities are verified at
the start point plus a number of seeded random points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluator import Evaluator
from .model import DecodedProblem, ProblemInternals

GRADIENT_TOL = 1e-6
HESSIAN_TOL = 1e-5
IDENTITY_TOL = 1e-12

# central differences with h balancing truncation against round-off
_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)


def fd_step(x: np.ndarray) -> np.ndarray:
    return _FD_STEP * np.maximum(1.0, np.abs(x))


def fd_gradient(func, x: np.ndarray) -> np.ndarray:
    steps = fd_step(x)
    out = np.empty(len(x))
    for j in range(len(x)):
        forward = x.copy()
        backward = x.copy()
        forward[j] += steps[j]
        backward[j] -= steps[j]
        out[j] = (func(forward) - func(backward)) / (2.0 * steps[j])
    return out


def fd_jacobian(func, x: np.ndarray) -> np.ndarray:
    steps = fd_step(x)
    columns = []
    for j in range(len(x)):
        forward = x.copy()
        backward = x.copy()
        forward[j] += steps[j]
        backward[j] -= steps[j]
        columns.append((func(forward) - func(backward)) / (2.0 * steps[j]))
    return np.column_stack(columns)


def rel_err(delta: np.ndarray, reference: np.ndarray) -> float:
    denom = max(1.0, float(np.max(np.abs(reference))) if np.size(reference) else 0.0)
    top = float(np.max(np.abs(delta))) if np.size(delta) else 0.0
    return top / denom


@dataclass
class CheckEntry:
    name: str
    max_err: float
    tol: float
    worst_point: str

    @property
    def ok(self) -> bool:
        return self.max_err <= self.tol

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return (f"{self.name:<34s} max rel err {self.max_err:.3e} "
                f"(tol {self.tol:.1e}, worst at {self.worst_point}) {status}")


@dataclass
class CheckReport:
    entries: list[CheckEntry] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def lines(self) -> list[str]:
        return [e.line() for e in self.entries]


class _Tracker:
    def __init__(self, name: str, tol: float):
        self.name = name
        self.tol = tol
        self.max_err = 0.0
        self.worst = "x0"

    def update(self, err: float, label: str) -> None:
        if err > self.max_err:
            self.max_err = err
            self.worst = label

    def entry(self) -> CheckEntry:
        return CheckEntry(self.name, self.max_err, self.tol, self.worst)


def check_points(problem: DecodedProblem, trials: int, seed: int) -> list[tuple[str, np.ndarray]]:
    """x0 plus ``trials`` random points near it, clipped into the bounds."""
    rng = np.random.default_rng(seed)
    x0 = problem.x0
    low = np.maximum(problem.xlower, x0 - 1.0)
    high = np.minimum(problem.xupper, x0 + 1.0)
    collapsed = low > high
    low = np.where(collapsed, x0, low)
    high = np.where(collapsed, x0, high)
    points = [("x0", x0.copy())]
    for t in range(trials):
        points.append((f"point {t + 1}", rng.uniform(low, high)))
    return points


def run_checks(problem: DecodedProblem, internals: ProblemInternals,
               trials: int = 10, seed: int = 0) -> CheckReport:
    evaluator = Evaluator(problem, internals)
    rng = np.random.default_rng(seed + 1)
    n, m = problem.n, problem.m

    grad = _Tracker("objective gradient vs fd", GRADIENT_TOL)
    hess = _Tracker("objective hessian vs fd", HESSIAN_TOL)
    hvp = _Tracker("objective hvp vs materialized", IDENTITY_TOL)
    trackers = [grad, hess, hvp]
    if m:
        jac = _Tracker("constraint jacobian vs fd", GRADIENT_TOL)
        chess = _Tracker("constraint hessians vs fd", HESSIAN_TOL)
        jvp = _Tracker("constraint jvp vs materialized", IDENTITY_TOL)
        lag = _Tracker("lagrangian identity", IDENTITY_TOL)
        lhvp = _Tracker("lagrangian hvp vs materialized", IDENTITY_TOL)
        restrict = _Tracker("restriction coherence", 0.0)
        trackers += [jac, chess, jvp, lag, lhvp, restrict]

    for label, x in check_points(problem, trials, seed):
        v = rng.uniform(-1.0, 1.0, size=n)
        obj = evaluator.evaluate_objective(x, order=2)
        fd_g = fd_gradient(lambda p: evaluator.evaluate_objective(p, 0).value, x)
        grad.update(rel_err(obj.gradient - fd_g, obj.gradient), label)
        fd_h = fd_jacobian(lambda p: evaluator.evaluate_objective(p, 1).gradient, x)
        dense_h = obj.hessian.toarray()
        hess.update(rel_err(dense_h - fd_h, dense_h), label)
        hv = evaluator.hessian_vector_product(x, v)
        hvp.update(rel_err(hv - dense_h @ v, dense_h @ v), label)

        if not m:
            continue
        y = rng.uniform(-1.0, 1.0, size=m)
        cons = evaluator.evaluate_constraints(x, order=2)
        dense_j = cons.gradient.toarray()
        fd_j = fd_jacobian(lambda p: evaluator.evaluate_constraints(p, 0).value, x)
        jac.update(rel_err(dense_j - fd_j, dense_j), label)
        for k in range(m):
            fd_hk = fd_jacobian(
                lambda p: evaluator.evaluate_constraints(p, 1).gradient
                .toarray()[k], x)
            dense_hk = cons.hessian[k].toarray()
            chess.update(rel_err(dense_hk - fd_hk, dense_hk), label)
        jv = evaluator.jacobian_vector_product(x, v)
        jvp.update(rel_err(jv - dense_j @ v, dense_j @ v), label)

        lag_val = evaluator.evaluate_lagrangian(x, y, order=0).value
        recomposed = obj.value + float(np.dot(y, cons.value))
        lag.update(abs(lag_val - recomposed) / max(1.0, abs(lag_val)), label)
        lhv = evaluator.hessian_vector_product(x, v, kind="lagrangian", y=y)
        lag_h = evaluator.evaluate_lagrangian(x, y, order=2).hessian.toarray()
        lhvp.update(rel_err(lhv - lag_h @ v, lag_h @ v), label)

        size = rng.integers(1, m + 1)
        subset = rng.permutation(m)[:size]
        sub = evaluator.evaluate_constraints(x, order=1, subset=subset)
        exact = 0.0
        if np.any(sub.value != cons.value[subset]):
            exact = 1.0
        if (sub.gradient.toarray() != dense_j[subset]).any():
            exact = 1.0
        sub_lag = evaluator.evaluate_lagrangian(x, y[subset], order=0, subset=subset)
        direct = obj.value + float(np.dot(y[subset], cons.value[subset]))
        if abs(sub_lag.value - direct) > IDENTITY_TOL * max(1.0, abs(direct)):
            exact = 1.0
        restrict.update(exact, label)

    return CheckReport([t.entry() for t in trackers])
