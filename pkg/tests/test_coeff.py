from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rumourstream.coeff import (
    CoefficientMatrix,
    CoefficientModel,
    DriftMonitor,
    PositionOutOfRange,
    build_cco,
    drift_check,
    invert_cco,
    mean_relative_error,
    record_outcome,
    scale_position,
)
from rumourstream.oracles import cco_oracle, invert_oracle


def matrix_from_coeffs(coeffs) -> CoefficientMatrix:
    coeffs = np.asarray(coeffs, dtype=float)
    cm = CoefficientMatrix(*coeffs.shape)
    cm.counts[:] = coeffs
    cm._coeffs = coeffs.astype(np.int64)  # bypass normalisation: these are already coefficients
    return cm


def test_single_contribution_normalises_to_100():
    cm = CoefficientMatrix(3, 4)
    record_outcome(cm, [(1, 2)])
    expected = np.zeros((3, 4), dtype=int)
    expected[1, 1] = 100
    assert (cm.coeffs == expected).all()


def test_max_normalisation():
    cm = CoefficientMatrix(2, 2)
    record_outcome(cm, [(0, 1), (0, 1), (1, 2)])
    assert cm.coeffs[0, 0] == 100 and cm.coeffs[1, 1] == 50
    assert cm.coeffs[0, 1] == 0


def test_no_contributions_all_zero():
    cm = CoefficientMatrix(2, 5)
    assert not cm.coeffs.any()
    assert cm.empty


@pytest.mark.parametrize("pos", [0, 6])
def test_position_out_of_range(pos):
    with pytest.raises(PositionOutOfRange):
        CoefficientMatrix(1, 5).record(0, pos)


@settings(max_examples=50, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 30)), elements=st.floats(0, 1e6)))
def test_coefficients_bounded_integers(counts):
    cm = CoefficientMatrix(*counts.shape)
    cm.counts[:] = counts
    c = cm.coeffs
    assert c.dtype.kind == "i"
    assert c.min() >= 0 and c.max() <= 100
    assert ((counts == 0) <= (c == 0)).all()
    if counts.max() > 0:
        assert c.max() == 100
    # monotone in the raw count
    flat_n, flat_c = counts.ravel(), c.ravel()
    order = np.argsort(flat_n, kind="stable")
    assert (np.diff(flat_c[order]) >= 0).all()


# -- CCO --------------------------------------------------------------------------


def test_cco_worked_example():
    cco = build_cco(matrix_from_coeffs([[3, 3], [3, 7]]))
    oracle = cco_oracle([[3, 3], [3, 7]], 2)
    assert cco.occurrences[3] == pytest.approx(1.5) and cco.occurrences[7] == pytest.approx(0.5)
    for pi, expected in [(2, 0.0), (3, 1.5), (6, 1.5), (7, 2.0), (100, 2.0)]:
        assert cco.omega[pi] == pytest.approx(expected)
        assert oracle[pi] == pytest.approx(expected)


def test_cco_all_zero():
    cco = build_cco(CoefficientMatrix(4, 7))
    assert (cco.omega == 7).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(1, 200), st.integers(0, 2**32 - 1))
def test_cco_equals_nested_loops(n_pairs, w_bar, seed):
    coeffs = np.random.default_rng(seed).integers(0, 101, size=(n_pairs, w_bar))
    cco = build_cco(matrix_from_coeffs(coeffs))
    assert np.max(np.abs(cco.omega - np.asarray(cco_oracle(coeffs, n_pairs)))) <= 1e-9
    assert cco.omega[100] == pytest.approx(w_bar, abs=1e-9)
    assert (np.diff(cco.omega) >= 0).all()


def test_invert_examples():
    omega = np.array([2.0, 5.0, 9.0] + [9.0] * 98)
    assert invert_cco(omega, 5) == (1, False) == invert_oracle(list(omega), 5)
    assert invert_cco(omega, 0).pi_min == 0
    cco = build_cco(matrix_from_coeffs([[3, 3], [3, 7]]))
    assert invert_cco(cco, 2).pi_min == 7


def test_invert_saturates():
    omega = np.linspace(0, 3, 101)
    assert invert_cco(omega, 3.5) == (100, True)
    with pytest.raises(ValueError):
        invert_cco(omega, -1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 60))
def test_inversion_consistency(seed, k):
    coeffs = np.random.default_rng(seed).integers(0, 101, size=(3, 50))
    cco = build_cco(matrix_from_coeffs(coeffs))
    for pi in range(101):
        assert invert_cco(cco, cco.omega[pi]).pi_min <= pi
    assert tuple(invert_cco(cco, k)) == invert_oracle(list(cco.omega), k)


def test_threshold_covers_k_in_expectation():
    rng = np.random.default_rng(7)
    n_pairs, w_bar, k = 4, 100, 30
    counts = rng.gamma(2.0, 1.0, size=(n_pairs, w_bar))
    cm = CoefficientMatrix(n_pairs, w_bar)
    cm.counts[:] = counts
    cco = build_cco(cm)
    pi_min = invert_cco(cco, k).pi_min
    dropped = []
    for _ in range(100):
        # one element per position, pair drawn uniformly: the mix the CCO assumes
        pairs = rng.integers(n_pairs, size=w_bar)
        dropped.append(int((cm.coeffs[pairs, np.arange(w_bar)] <= pi_min).sum()))
    assert np.mean(dropped) >= 0.9 * k


# -- drift ------------------------------------------------------------------------


def test_mre_examples():
    snap = np.random.default_rng(0).uniform(1, 10, size=(3, 8))
    assert mean_relative_error(snap, snap) == 0.0
    assert mean_relative_error(snap * 1.2, snap) == pytest.approx(0.2)
    big = np.zeros((20, 20)) + 5.0
    moved = big.copy()
    moved[3, 4] *= 1.01
    assert mean_relative_error(moved, big) == pytest.approx(0.01 / 400)


def test_drift_check_flags():
    cm = CoefficientMatrix(2, 2)
    cm.counts[:] = [[1, 2], [3, 4]]
    dm = DriftMonitor(0.10)
    with pytest.raises(ValueError):
        drift_check(dm, cm)
    dm.rebase(cm)
    assert drift_check(dm, cm) is False
    cm.counts *= 1.2
    assert drift_check(dm, cm) is True
    assert dm.mre == pytest.approx(0.2)


def test_model_builds_first_cco_then_waits_for_drift():
    model = CoefficientModel(2, 4, drift_threshold=0.10)
    assert model.refresh() is False and model.cco is None
    model.matrix.record(0, 1)
    assert model.refresh() is True and model.retrains == 1
    assert model.coefficient(0, 1) == 100
    model.matrix.record(0, 1, 0.05)
    assert model.refresh() is False
    # mass in a cell that was empty at the snapshot is not part of the error
    model.matrix.record(1, 3, 5.0)
    assert model.refresh() is False
    model.matrix.record(0, 1, 0.5)
    assert model.refresh() is True and model.retrains == 2
    assert model.coefficient(1, 3) == 100


def test_decay_forgets():
    cm = CoefficientMatrix(1, 2, decay=0.5)
    cm.record(0, 1, 8.0)
    cm.age()
    cm.age()
    assert cm.counts[0, 0] == 2.0
    with pytest.raises(ValueError):
        CoefficientMatrix(1, 2, decay=0.0)


@pytest.mark.parametrize(
    "pos, size, w_bar, expected",
    [(1, 50, 100, 2), (50, 50, 100, 100), (25, 50, 100, 50), (1, 200, 100, 1), (200, 200, 100, 100), (7, 100, 100, 7)],
)
def test_scale_position(pos, size, w_bar, expected):
    assert scale_position(pos, size, w_bar) == expected
