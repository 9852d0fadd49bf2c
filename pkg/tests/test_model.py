from __future__ import annotations

import numpy as np
import pytest

from sifgps import DecodeOptions
from sifgps.errors import RangeSignViolation, ZeroScaleFactor
from sifgps.model import (
    build_csr,
    classify_and_order,
    convert_constraint_format,
    fold_variable_scaling,
)

from conftest import decode_corpus


def options(**kw):
    return DecodeOptions(**kw)


# --- ordering -------------------------------------------------------------------


def test_classify_and_order_example():
    perm = classify_and_order(["==", "<=", ">=", "<="], options())
    assert perm.tolist() == [1, 3, 0, 2]


def test_single_class_is_identity():
    assert classify_and_order(["==", "=="], options()).tolist() == [0, 1]


def test_keepcorder_bypass():
    perm = classify_and_order([">=", "<="], options(keepcorder=True))
    assert perm.tolist() == [0, 1]


def test_ordering_is_stable_within_classes():
    rng = np.random.default_rng(3)
    symbols = np.array(["<=", "==", ">="])
    for _ in range(200):
        rels = list(symbols[rng.integers(0, 3, size=rng.integers(1, 12))])
        perm = classify_and_order(rels, options())
        for symbol in symbols:
            positions = [k for k in perm if rels[k] == symbol]
            assert positions == sorted(positions)


def test_reordering_then_keepcorder_is_noop():
    rels = ["==", "<=", ">=", "<="]
    perm = classify_and_order(rels, options())
    permuted = [rels[k] for k in perm]
    again = classify_and_order(permuted, options(keepcorder=True))
    assert again.tolist() == list(range(len(rels)))


# --- constraint format ------------------------------------------------------------


def test_conversion_patterns():
    assert convert_constraint_format("<=", -3.0) == (-3.0, 0.0)
    assert convert_constraint_format("<=", None) == (-np.inf, 0.0)
    assert convert_constraint_format("==", None) == (0.0, 0.0)
    assert convert_constraint_format(">=", None) == (0.0, np.inf)
    assert convert_constraint_format(">=", 5.0) == (0.0, 5.0)


def test_range_sign_violations():
    with pytest.raises(RangeSignViolation):
        convert_constraint_format("<=", 1.0)
    with pytest.raises(RangeSignViolation):
        convert_constraint_format(">=", -1.0)


def test_keepcformat_is_information_equivalent():
    for name in ("RNGLP3", "VSCALE", "MPSROWS"):
        default_problem, _ = decode_corpus(name)
        kept_problem, _ = decode_corpus(name, keepcformat=True)
        pairs = [convert_constraint_format(t, r)
                 for t, r in zip(kept_problem.ctypes, kept_problem.cranges)]
        lower = np.array([p[0] for p in pairs])
        upper = np.array([p[1] for p in pairs])
        np.testing.assert_array_equal(lower, default_problem.clower)
        np.testing.assert_array_equal(upper, default_problem.cupper)


# --- variable scaling ---------------------------------------------------------------


def csr(rows):
    dense = np.array(rows, dtype=float)
    r, c = np.nonzero(dense)
    return build_csr(r, c, dense[r, c], dense.shape)


def test_fold_divides_columns():
    folded, exposed = fold_variable_scaling(csr([[2.0, 4.0]]), np.array([1.0, 2.0]),
                                            options())
    assert folded.toarray().tolist() == [[2.0, 2.0]]
    assert exposed is None


def test_identity_scaling_is_noop():
    matrix = csr([[2.0, 4.0]])
    folded, _ = fold_variable_scaling(matrix, np.ones(2), options())
    assert (folded != matrix).nnz == 0


def test_expose_returns_scalings():
    matrix = csr([[2.0, 4.0]])
    folded, exposed = fold_variable_scaling(matrix, np.array([1.0, 2.0]),
                                            options(expose_xscale=True))
    assert (folded != matrix).nnz == 0
    assert exposed.tolist() == [1.0, 2.0]


def test_zero_scale_factor_rejected():
    with pytest.raises(ZeroScaleFactor):
        fold_variable_scaling(csr([[1.0]]), np.array([0.0]), options())


# --- deterministic sparse assembly ----------------------------------------------------


def test_build_csr_sums_duplicates_row_major():
    matrix = build_csr([0, 1, 0, 0], [1, 0, 1, 0], [1.0, 2.0, 3.0, 4.0], (2, 2))
    assert matrix.toarray().tolist() == [[4.0, 4.0], [2.0, 0.0]]
    coo = matrix.tocoo()
    assert list(zip(coo.row.tolist(), coo.col.tolist())) == [(0, 0), (0, 1), (1, 0)]


def test_build_csr_prunes_exact_zero_sums():
    matrix = build_csr([0, 0], [0, 0], [1.5, -1.5], (1, 1))
    assert matrix.nnz == 0
