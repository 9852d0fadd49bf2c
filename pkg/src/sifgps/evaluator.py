"""Evaluation engine over a decoded problem.

Implements objective, constraint and Lagrangian values with first and second
derivatives, restricted variants, and Hessian/Jacobian-vector products that
never materialize the full matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import (
    BadSubset,
    DimensionMismatch,
    DomainError,
    MultiplierLengthMismatch,
    NoConstraints,
    UnknownAction,
)
from .expressions import eval_element, eval_group_function
from .model import LINEAR_TERM_SIGN, DecodedProblem, ProblemInternals, build_csr


@dataclass
class EvalRequest:
    """One evaluation task: what to compute, at which point, to which order."""

    kind: str                     # "objective" | "constraints" | "lagrangian"
    x: np.ndarray
    order: int = 0
    y: np.ndarray | None = None
    subset: np.ndarray | None = None
    v: np.ndarray | None = None   # present for Hessian/Jacobian-vector products


@dataclass
class EvalResult:
    value: float | np.ndarray | None = None
    gradient: np.ndarray | sparse.csr_matrix | None = None
    hessian: sparse.csr_matrix | list[sparse.csr_matrix] | None = None
    product: np.ndarray | None = None


# Action names accepted by the command line, mapped onto requests.
ACTIONS: dict[str, tuple[str, int | None, frozenset[str]]] = {
    "fx": ("objective", 0, frozenset()),
    "fgx": ("objective", 1, frozenset()),
    "fgHx": ("objective", 2, frozenset()),
    "fHxv": ("objective", None, frozenset({"v"})),
    "cx": ("constraints", 0, frozenset()),
    "cJx": ("constraints", 1, frozenset()),
    "cJHx": ("constraints", 2, frozenset()),
    "cJxv": ("constraints", None, frozenset({"v"})),
    "cIx": ("constraints", 0, frozenset({"I"})),
    "cIJx": ("constraints", 1, frozenset({"I"})),
    "cIJHx": ("constraints", 2, frozenset({"I"})),
    "cIJxv": ("constraints", None, frozenset({"v", "I"})),
    "Lxy": ("lagrangian", 0, frozenset({"y"})),
    "Lgxy": ("lagrangian", 1, frozenset({"y"})),
    "LgHxy": ("lagrangian", 2, frozenset({"y"})),
    "LHxyv": ("lagrangian", None, frozenset({"y", "v"})),
    "LIxy": ("lagrangian", 0, frozenset({"y", "I"})),
    "LIgxy": ("lagrangian", 1, frozenset({"y", "I"})),
    "LIgHxy": ("lagrangian", 2, frozenset({"y", "I"})),
    "LIHxyv": ("lagrangian", None, frozenset({"y", "v", "I"})),
}

# Alternative spellings of the Lagrangian product actions.
ACTION_ALIASES = {"HLxyv": "LHxyv", "HLIxyv": "LIHxyv"}


def resolve_action(name: str) -> tuple[str, tuple[str, int | None, frozenset[str]]]:
    canonical = ACTION_ALIASES.get(name, name)
    if canonical not in ACTIONS:
        raise UnknownAction(f"unknown action {name!r}")
    return canonical, ACTIONS[canonical]


class _GroupData:
    """Precomputed sparsity and function bindings for one group."""

    __slots__ = ("index", "a_cols", "a_vals", "beta", "scale", "descriptor",
                 "params", "elements", "support", "a_pos", "el_pos")

    def __init__(self, gi: int, internals: ProblemInternals,
                 element_cache: list[tuple]):
        self.index = gi
        row = internals.A.getrow(gi).tocoo()
        self.a_cols = row.col.astype(np.int64)
        self.a_vals = row.data.copy()
        self.beta = float(internals.gconst[gi])
        self.scale = float(internals.gscale[gi])
        descriptor = internals.group_types.get(internals.grftype[gi])
        if descriptor is None:
            from .expressions import trivial_group
            descriptor = trivial_group()
        self.descriptor = descriptor
        self.params = dict(zip(descriptor.parameters, internals.grpar[gi]))
        self.elements = [(int(e), float(w), element_cache[int(e)])
                         for e, w in zip(internals.grelt[gi], internals.grelw[gi])]
        pieces = [self.a_cols] + [element_cache[int(e)][2]
                                  for e in internals.grelt[gi]]
        self.support = np.unique(np.concatenate(pieces))
        self.a_pos = np.searchsorted(self.support, self.a_cols)
        self.el_pos = [np.searchsorted(self.support, element_cache[int(e)][2])
                       for e in internals.grelt[gi]]


class Evaluator:
    """Read-only evaluation over an immutable (problem, internals) pair."""

    def __init__(self, problem: DecodedProblem, internals: ProblemInternals):
        self.problem = problem
        self.internals = internals
        self.n = problem.n
        self.m = problem.m
        self._ef_env = dict(zip(internals.efpar_names, internals.efpar))
        self._gf_env = dict(zip(internals.gfpar_names, internals.gfpar))
        # per element: (descriptor, parameter dict, variable indices)
        self._elements = []
        for e in range(len(internals.elftype)):
            descriptor = internals.element_types[internals.elftype[e]]
            params = dict(zip(descriptor.parameters, internals.elpar[e]))
            self._elements.append((descriptor, params, internals.elvar[e]))
        self._groups = [_GroupData(gi, internals, self._elements)
                        for gi in range(internals.n_groups)]

    # -- argument checking --

    def _vector(self, data, length: int, label: str) -> np.ndarray:
        arr = np.asarray(data, dtype=float)
        if arr.shape != (length,):
            raise DimensionMismatch(f"{label} must have length {length}, "
                                    f"got shape {arr.shape}")
        return arr

    def _subset(self, subset) -> np.ndarray:
        if subset is None:
            return np.arange(self.m, dtype=np.int64)
        arr = np.asarray(subset, dtype=np.int64)
        if arr.ndim != 1:
            raise BadSubset("constraint subset must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= self.m):
            raise BadSubset(f"subset entries must lie in [0, {self.m})")
        if len(np.unique(arr)) != arr.size:
            raise BadSubset("subset entries must be distinct")
        return arr

    def _need_constraints(self) -> None:
        if self.m == 0:
            raise NoConstraints("the problem has no general constraints")

    # -- group pieces --

    def group_argument(self, gi: int, x: np.ndarray) -> float:
        """The scalar argument a_i(x) fed to group gi's function."""
        x = self._vector(x, self.n, "x")
        return self._pieces(self._groups[gi], x, 0)[0]

    def _pieces(self, group: _GroupData, x: np.ndarray, order: int):
        """Value, gradient over the support, and element Hessian blocks of a_i."""
        a = LINEAR_TERM_SIGN * float(np.dot(group.a_vals, x[group.a_cols])) - group.beta
        grad = None
        if order >= 1:
            grad = np.zeros(len(group.support))
            np.add.at(grad, group.a_pos, LINEAR_TERM_SIGN * group.a_vals)
        blocks = []
        for (e, w, (desc, params, cols)), pos in zip(group.elements, group.el_pos):
            try:
                value, g_e, h_e = eval_element(desc, x[cols], params,
                                               self._ef_env, order)
            except DomainError as err:
                if err.element_index is None and err.group_index is None:
                    raise DomainError(err.message, element_index=e) from err
                raise
            a += w * value
            if order >= 1:
                np.add.at(grad, pos, w * g_e)
            if order >= 2:
                blocks.append((pos, w * h_e))
        return a, grad, blocks

    def _group_function(self, group: _GroupData, a: float, order: int):
        try:
            value, d1, d2 = eval_group_function(
                group.descriptor, a, group.params, self._gf_env, order,
                strict_derivatives=True)
        except DomainError as err:
            if err.element_index is None and err.group_index is None:
                raise DomainError(err.message, group_index=group.index) from err
            raise
        inv = 1.0 / group.scale
        return (value * inv,
                d1 * inv if order >= 1 else None,
                d2 * inv if order >= 2 else None)

    @staticmethod
    def _block_matrix(group: _GroupData, grad: np.ndarray, blocks,
                      c2: float, c1: float) -> np.ndarray:
        """Dense support-by-support second-derivative block of one group term."""
        block = c2 * np.outer(grad, grad)
        for pos, wh in blocks:
            np.add.at(block, (pos[:, None], pos[None, :]), c1 * wh)
        # mirror the lower triangle so the assembled matrix is exactly symmetric
        lower = np.tril(block)
        return lower + np.tril(block, -1).T

    # -- objective --

    def evaluate_objective(self, x, order: int = 0) -> EvalResult:
        x = self._vector(x, self.n, "x")
        internals = self.internals
        hx = internals.H @ x
        value = 0.5 * float(np.dot(x, hx))
        gradient = hx.copy() if order >= 1 else None
        triplet_rows: list[np.ndarray] = []
        triplet_cols: list[np.ndarray] = []
        triplet_vals: list[np.ndarray] = []
        for gi in internals.objgrps:
            group = self._groups[int(gi)]
            a, grad, blocks = self._pieces(group, x, order)
            fval, d1, d2 = self._group_function(group, a, order)
            value += fval
            if order >= 1:
                gradient[group.support] += d1 * grad
            if order >= 2:
                block = self._block_matrix(group, grad, blocks, d2, d1)
                triplet_rows.append(np.repeat(group.support, len(group.support)))
                triplet_cols.append(np.tile(group.support, len(group.support)))
                triplet_vals.append(block.ravel())
        hessian = None
        if order >= 2:
            hcoo = internals.H.tocoo()
            triplet_rows.append(hcoo.row.astype(np.int64))
            triplet_cols.append(hcoo.col.astype(np.int64))
            triplet_vals.append(hcoo.data)
            hessian = build_csr(np.concatenate(triplet_rows),
                                np.concatenate(triplet_cols),
                                np.concatenate(triplet_vals), (self.n, self.n))
        return EvalResult(value=value, gradient=gradient, hessian=hessian)

    # -- constraints --

    def evaluate_constraints(self, x, order: int = 0, subset=None) -> EvalResult:
        self._need_constraints()
        x = self._vector(x, self.n, "x")
        selected = self._subset(subset)
        values = np.empty(len(selected))
        jac_rows: list[np.ndarray] = []
        jac_cols: list[np.ndarray] = []
        jac_vals: list[np.ndarray] = []
        hessians: list[sparse.csr_matrix] = []
        for k, ci in enumerate(selected):
            group = self._groups[int(self.internals.congrps[ci])]
            a, grad, blocks = self._pieces(group, x, order)
            cval, d1, d2 = self._group_function(group, a, order)
            values[k] = cval
            if order >= 1:
                jac_rows.append(np.full(len(group.support), k, dtype=np.int64))
                jac_cols.append(group.support)
                jac_vals.append(d1 * grad)
            if order >= 2:
                block = self._block_matrix(group, grad, blocks, d2, d1)
                hessians.append(build_csr(
                    np.repeat(group.support, len(group.support)),
                    np.tile(group.support, len(group.support)),
                    block.ravel(), (self.n, self.n)))
        jacobian = None
        if order >= 1:
            jacobian = build_csr(
                np.concatenate(jac_rows) if jac_rows else [],
                np.concatenate(jac_cols) if jac_cols else [],
                np.concatenate(jac_vals) if jac_vals else [],
                (len(selected), self.n))
        return EvalResult(value=values, gradient=jacobian,
                          hessian=hessians if order >= 2 else None)

    # -- Lagrangian --

    def _multipliers(self, y, count: int) -> np.ndarray:
        if y is None:
            raise MultiplierLengthMismatch("the Lagrangian needs multipliers y")
        y = np.asarray(y, dtype=float)
        if y.shape != (count,):
            raise MultiplierLengthMismatch(
                f"y must have length {count}, got shape {y.shape}")
        return y

    def evaluate_lagrangian(self, x, y, order: int = 0, subset=None) -> EvalResult:
        self._need_constraints()
        x = self._vector(x, self.n, "x")
        selected = self._subset(subset)
        y = self._multipliers(y, len(selected))
        obj = self.evaluate_objective(x, order)
        cons = self.evaluate_constraints(x, order, selected)
        value = obj.value + float(np.dot(y, cons.value))
        gradient = None
        hessian = None
        if order >= 1:
            gradient = obj.gradient + cons.gradient.T @ y
        if order >= 2:
            rows = [obj.hessian.tocoo()]
            for yk, hk in zip(y, cons.hessian):
                scaled = hk.tocoo()
                scaled.data = scaled.data * yk
                rows.append(scaled)
            hessian = build_csr(
                np.concatenate([h.row.astype(np.int64) for h in rows]),
                np.concatenate([h.col.astype(np.int64) for h in rows]),
                np.concatenate([h.data for h in rows]), (self.n, self.n))
        return EvalResult(value=value, gradient=gradient, hessian=hessian)

    # -- products --

    def _group_hvp(self, group: _GroupData, x, v, multiplier: float,
                   out: np.ndarray) -> None:
        a, grad, blocks = self._pieces(group, x, 2)
        _, d1, d2 = self._group_function(group, a, 2)
        v_sup = v[group.support]
        rank_one = (multiplier * d2 * float(np.dot(grad, v_sup))) * grad
        element_part = np.zeros(len(group.support))
        for pos, wh in blocks:
            np.add.at(element_part, pos, wh @ v_sup[pos])
        out[group.support] += rank_one + (multiplier * d1) * element_part

    def hessian_vector_product(self, x, v, kind: str = "objective",
                               y=None, subset=None) -> np.ndarray:
        x = self._vector(x, self.n, "x")
        v = self._vector(v, self.n, "v")
        out = np.asarray(self.internals.H @ v)
        for gi in self.internals.objgrps:
            self._group_hvp(self._groups[int(gi)], x, v, 1.0, out)
        if kind == "lagrangian":
            self._need_constraints()
            selected = self._subset(subset)
            y = self._multipliers(y, len(selected))
            for yk, ci in zip(y, selected):
                group = self._groups[int(self.internals.congrps[ci])]
                self._group_hvp(group, x, v, float(yk), out)
        return out

    def jacobian_vector_product(self, x, v, subset=None) -> np.ndarray:
        self._need_constraints()
        x = self._vector(x, self.n, "x")
        v = self._vector(v, self.n, "v")
        selected = self._subset(subset)
        out = np.empty(len(selected))
        for k, ci in enumerate(selected):
            group = self._groups[int(self.internals.congrps[ci])]
            a, grad, _ = self._pieces(group, x, 1)
            _, d1, _ = self._group_function(group, a, 1)
            out[k] = d1 * float(np.dot(grad, v[group.support]))
        return out

    # -- request dispatch --

    def run(self, request: EvalRequest) -> EvalResult:
        if request.v is not None:
            if request.kind == "objective":
                return EvalResult(product=self.hessian_vector_product(
                    request.x, request.v))
            if request.kind == "lagrangian":
                return EvalResult(product=self.hessian_vector_product(
                    request.x, request.v, kind="lagrangian", y=request.y,
                    subset=request.subset))
            return EvalResult(product=self.jacobian_vector_product(
                request.x, request.v, subset=request.subset))
        if request.kind == "objective":
            return self.evaluate_objective(request.x, request.order)
        if request.kind == "constraints":
            return self.evaluate_constraints(request.x, request.order,
                                             request.subset)
        if request.kind == "lagrangian":
            return self.evaluate_lagrangian(request.x, request.y, request.order,
                                            request.subset)
        raise UnknownAction(f"unknown evaluation kind {request.kind!r}")
