"""Acceptance suite: one test per release criterion, tolerances pinned.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  The finite-difference oracle used here is local to this module
and independent of the package's own checker.
"""

from __future__ import annotations

import json
import random
import time

import numpy as np
import pytest

from sifgps import DecodeOptions, Evaluator, decode, dump_text, load_text
from sifgps.errors import ErrorLog
from sifgps.expander import rename_problem
from sifgps.model import classify_and_order, convert_constraint_format

from conftest import GOOD_CORPUS, corpus_text, decode_corpus

DECODE_BUDGET_SECONDS = 5.0
COHERENCE_BUDGET_SECONDS = 30.0
ROSENBR_F_TOL = 1e-12
ROSENBR_G_TOL = 1e-10
GRADIENT_FD_TOL = 1e-6
HESSIAN_FD_TOL = 1e-5
IDENTITY_TOL = 1e-12
SCALING_TOL = 1e-14
RANDOM_POINTS = 10


# --- independent finite-difference oracle ------------------------------------------

def central_diff_vector(func, x):
    h = np.finfo(float).eps ** (1.0 / 3.0) * np.maximum(1.0, np.abs(x))
    out = []
    for j in range(len(x)):
        up, down = x.copy(), x.copy()
        up[j] += h[j]
        down[j] -= h[j]
        out.append((func(up) - func(down)) / (2.0 * h[j]))
    return np.array(out)


def central_diff_matrix(vector_func, x):
    h = np.finfo(float).eps ** (1.0 / 3.0) * np.maximum(1.0, np.abs(x))
    cols = []
    for j in range(len(x)):
        up, down = x.copy(), x.copy()
        up[j] += h[j]
        down[j] -= h[j]
        cols.append((vector_func(up) - vector_func(down)) / (2.0 * h[j]))
    return np.column_stack(cols)


def points_near_start(problem, count, seed):
    rng = np.random.default_rng(seed)
    low = np.maximum(problem.xlower, problem.x0 - 1.0)
    high = np.minimum(problem.xupper, problem.x0 + 1.0)
    points = [problem.x0.copy()]
    points += [rng.uniform(low, high) for _ in range(count)]
    return points


def rel_inf(delta, reference):
    scale = max(1.0, float(np.max(np.abs(reference))) if np.size(reference) else 0.0)
    return float(np.max(np.abs(delta))) / scale if np.size(delta) else 0.0


# --- criterion 1: the desk corpus decodes -------------------------------------------

def test_criterion_1_corpus_decodes(tmp_path, capsys):
    from sifgps.cli import main
    from conftest import CORPUS

    started = time.perf_counter()
    for name in GOOD_CORPUS:
        code = main(["decode", str(CORPUS / f"{name}.SIF"),
                     "--out", str(tmp_path / f"{name}.json")])
        assert code == 0, name
    code = main(["decode", str(CORPUS / "BADDATA.SIF"),
                 "--out", str(tmp_path / "BADDATA.json")])
    assert code == 3  # one exit unit per seeded error
    reported = [line for line in capsys.readouterr().err.splitlines() if line]
    assert len(reported) == 3
    assert "UnknownSectionHeader" in reported[0]
    assert "MalformedRecord" in reported[1]
    assert "MissingEndata" in reported[2]
    log = ErrorLog()
    assert decode(corpus_text("BADDATA"), errors=log) == (None, None)
    assert [type(e).__name__ for e in log] == [
        "UnknownSectionHeader", "MalformedRecord", "MissingEndata"]
    elapsed = time.perf_counter() - started
    assert elapsed < DECODE_BUDGET_SECONDS
    print(f"\ncriterion 1 PASS: {len(GOOD_CORPUS)} problems decoded with exit 0, "
          f"seeded errors reported exactly (exit 3), {elapsed:.2f}s")


# --- criterion 2: ROSENBR numerics ---------------------------------------------------

def test_criterion_2_rosenbrock_numerics(rosenbrock):
    _, _, evaluator = rosenbrock
    start = evaluator.evaluate_objective(np.array([-1.2, 1.0]), 1)
    assert abs(start.value - 24.2) <= ROSENBR_F_TOL
    assert np.max(np.abs(start.gradient - [-215.6, -88.0])) <= ROSENBR_G_TOL
    minimum = evaluator.evaluate_objective(np.array([1.0, 1.0]), 1)
    assert minimum.value == 0.0
    assert np.linalg.norm(minimum.gradient) == 0.0
    print("\ncriterion 2 PASS: f(-1.2,1)=24.2 and g=(-215.6,-88) within "
          "tolerance; exact zeros at (1,1)")


# --- criterion 3: derivative coherence ------------------------------------------------

def test_criterion_3_fd_coherence():
    started = time.perf_counter()
    worst_g, worst_h = 0.0, 0.0
    for name in GOOD_CORPUS:
        problem, internals = decode_corpus(name)
        evaluator = Evaluator(problem, internals)
        for x in points_near_start(problem, RANDOM_POINTS, seed=17):
            result = evaluator.evaluate_objective(x, 2)
            fd_g = central_diff_vector(
                lambda p: evaluator.evaluate_objective(p, 0).value, x)
            err_g = rel_inf(result.gradient - fd_g, result.gradient)
            assert err_g <= GRADIENT_FD_TOL, (name, x, err_g)
            fd_h = central_diff_matrix(
                lambda p: evaluator.evaluate_objective(p, 1).gradient, x)
            dense = result.hessian.toarray()
            err_h = rel_inf(dense - fd_h, dense)
            assert err_h <= HESSIAN_FD_TOL, (name, x, err_h)
            worst_g, worst_h = max(worst_g, err_g), max(worst_h, err_h)
            if problem.m:
                cons = evaluator.evaluate_constraints(x, 2)
                fd_j = central_diff_matrix(
                    lambda p: evaluator.evaluate_constraints(p, 0).value, x)
                err_j = rel_inf(cons.gradient.toarray() - fd_j,
                                cons.gradient.toarray())
                assert err_j <= GRADIENT_FD_TOL, (name, x, err_j)
                worst_g = max(worst_g, err_j)
                for k in range(problem.m):
                    fd_hk = central_diff_matrix(
                        lambda p, row=k: evaluator.evaluate_constraints(
                            p, 1).gradient.toarray()[row], x)
                    dense_k = cons.hessian[k].toarray()
                    err_hk = rel_inf(dense_k - fd_hk, dense_k)
                    assert err_hk <= HESSIAN_FD_TOL, (name, k, err_hk)
                    worst_h = max(worst_h, err_hk)
    elapsed = time.perf_counter() - started
    assert elapsed < COHERENCE_BUDGET_SECONDS
    print(f"\ncriterion 3 PASS: gradient fd err <= {worst_g:.2e}, hessian fd "
          f"err <= {worst_h:.2e} over {len(GOOD_CORPUS)} problems, {elapsed:.1f}s")


# --- criterion 4: definitional identities ----------------------------------------------

def test_criterion_4_identities():
    rng = np.random.default_rng(23)
    checked = 0
    for name in GOOD_CORPUS:
        problem, internals = decode_corpus(name)
        evaluator = Evaluator(problem, internals)
        for x in points_near_start(problem, 3, seed=29):
            v = rng.uniform(-1.0, 1.0, problem.n)
            dense_h = evaluator.evaluate_objective(x, 2).hessian.toarray()
            hv = evaluator.hessian_vector_product(x, v)
            assert rel_inf(hv - dense_h @ v, dense_h @ v) <= IDENTITY_TOL
            checked += 1
            if problem.m == 0:
                continue
            y = rng.uniform(-1.0, 1.0, problem.m)
            f = evaluator.evaluate_objective(x, 0).value
            c = evaluator.evaluate_constraints(x, 0).value
            lag = evaluator.evaluate_lagrangian(x, y, 0).value
            assert abs(lag - (f + y @ c)) <= IDENTITY_TOL * max(1.0, abs(lag))
            dense_j = evaluator.evaluate_constraints(x, 1).gradient.toarray()
            jv = evaluator.jacobian_vector_product(x, v)
            assert rel_inf(jv - dense_j @ v, dense_j @ v) <= IDENTITY_TOL
            lag_h = evaluator.evaluate_lagrangian(x, y, 2).hessian.toarray()
            lhv = evaluator.hessian_vector_product(x, v, kind="lagrangian", y=y)
            assert rel_inf(lhv - lag_h @ v, lag_h @ v) <= IDENTITY_TOL
            size = int(rng.integers(1, problem.m + 1))
            subset = rng.permutation(problem.m)[:size]
            full = evaluator.evaluate_constraints(x, 1)
            part = evaluator.evaluate_constraints(x, 1, subset=subset)
            assert (part.value == full.value[subset]).all()
            assert (part.gradient.toarray() ==
                    full.gradient.toarray()[subset]).all()
    print(f"\ncriterion 4 PASS: product, Lagrangian and restriction identities "
          f"hold at 1e-12 over {checked} evaluations")


# --- criterion 5: ordering and format invariants -----------------------------------------

def test_criterion_5_ordering_and_format():
    rng = random.Random(31)
    symbols = ["<=", "==", ">="]
    for _ in range(1000):
        rels = [rng.choice(symbols) for _ in range(rng.randint(1, 15))]
        perm = classify_and_order(rels, DecodeOptions())
        ordered = [rels[k] for k in perm]
        assert ordered == sorted(ordered, key=symbols.index)
        for symbol in symbols:
            kept = [k for k in perm if rels[k] == symbol]
            assert kept == sorted(kept)

    assert convert_constraint_format("<=", None) == (-np.inf, 0.0)
    assert convert_constraint_format("==", None) == (0.0, 0.0)
    assert convert_constraint_format(">=", None) == (0.0, np.inf)
    assert convert_constraint_format("<=", -3.0) == (-3.0, 0.0)
    assert convert_constraint_format(">=", 5.0) == (0.0, 5.0)

    seen_patterns = set()
    for name in ("RNGLP3", "VSCALE", "MPSROWS", "CONSELM"):
        default_problem, _ = decode_corpus(name)
        kept_problem, _ = decode_corpus(name, keepcformat=True)
        lower, upper = [], []
        for relation, r in zip(kept_problem.ctypes, kept_problem.cranges):
            seen_patterns.add((relation, r is not None))
            lo, up = convert_constraint_format(relation, r)
            lower.append(lo)
            upper.append(up)
        np.testing.assert_array_equal(np.array(lower), default_problem.clower)
        np.testing.assert_array_equal(np.array(upper), default_problem.cupper)
    assert {("<=", False), ("<=", True), ("==", False), (">=", False),
            (">=", True)} <= seen_patterns
    print("\ncriterion 5 PASS: 1000 orderings stable in-class; keepcformat "
          "reproduces all five bound patterns exactly")


# --- criterion 6: renaming ----------------------------------------------------------------

def test_criterion_6_renaming():
    assert rename_problem("C-RELOAD") == "CmRELOAD"
    assert rename_problem("10FOLDTR") == "n10FOLDTR"
    table = {"+": "p", "-": "m", "*": "t", "/": "d"}
    rng = random.Random(37)
    alphabet = "ABCWxyz0123456789+-*/"
    for _ in range(100):
        name = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 14)))
        renamed = rename_problem(name)
        expected = "".join(table.get(c, c) for c in name)
        if expected[0].isdigit():
            expected = "n" + expected
        assert renamed == expected
    print("\ncriterion 6 PASS: footnote renames and 100 randomized "
          "substitutions round-trip")


# --- criterion 7: scaling semantics ----------------------------------------------------------

def test_criterion_7_scaling_semantics():
    folded_problem, folded_internals = decode_corpus("VSCALE")
    exposed_problem, exposed_internals = decode_corpus("VSCALE",
                                                       expose_xscale=True)
    np.testing.assert_array_equal(exposed_problem.xscale, [2.0, 0.5])
    assert folded_problem.xscale is None

    # apply the exposed scalings by hand: divide the linear columns
    manual = exposed_internals.A.tocoo()
    manual.data = manual.data / exposed_problem.xscale[manual.col]
    object.__setattr__(exposed_internals, "A", manual.tocsr())

    ev_folded = Evaluator(folded_problem, folded_internals)
    ev_manual = Evaluator(exposed_problem, exposed_internals)
    for x in points_near_start(folded_problem, 5, seed=41):
        for order in (0, 1, 2):
            a = ev_folded.evaluate_objective(x, order)
            b = ev_manual.evaluate_objective(x, order)
            assert abs(a.value - b.value) <= SCALING_TOL * max(1.0, abs(a.value))
            if order >= 1:
                assert rel_inf(a.gradient - b.gradient, a.gradient) <= SCALING_TOL
        ca = ev_folded.evaluate_constraints(x, 1)
        cb = ev_manual.evaluate_constraints(x, 1)
        assert rel_inf(ca.value - cb.value, ca.value) <= SCALING_TOL
        assert rel_inf((ca.gradient - cb.gradient).toarray(),
                       ca.gradient.toarray()) <= SCALING_TOL
    print("\ncriterion 7 PASS: folded scaling equals manually applied exposed "
          "scaling to 1e-14")


# --- criterion 8: JSON round trip --------------------------------------------------------------

@pytest.mark.parametrize("name", GOOD_CORPUS)
def test_criterion_8_json_round_trip(name):
    problem, internals = decode_corpus(name)
    provenance = {"source": f"{name}.SIF",
                  "options": DecodeOptions().as_dict(), "user_params": []}
    first = dump_text(problem, internals, provenance)
    second = dump_text(*load_text(first))
    assert first == second
    json.loads(first)  # stays well-formed JSON
    print(f"\ncriterion 8 PASS [{name}]: dump -> load -> dump byte-identical")
