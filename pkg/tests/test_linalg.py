import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from isogauge import linalg
from isogauge.errors import (DegenerateInput, InvalidInput, NotPSD, ParseError, ZeroVector)


def brute_gram(X):
    n = X.shape[1]
    return np.array([[sum(X[k, i] * X[k, j] for k in range(X.shape[0])) for j in range(n)]
                     for i in range(n)])


# ---------------------------------------------------------------- Gram builders

def test_gram_identity_and_orthogonal_columns():
    assert np.array_equal(linalg.gram_from_columns(np.eye(2)), np.eye(2))
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    assert np.array_equal(linalg.gram_from_columns(X), np.diag([1.0, 4.0]))


def test_gram_matches_brute_force():
    X = np.random.default_rng(0).standard_normal((5, 3))
    assert np.max(np.abs(linalg.gram_from_columns(X) - brute_gram(X))) <= 1e-12


def test_row_gram():
    assert np.array_equal(linalg.gram_from_rows(np.eye(3)), np.eye(3))
    assert linalg.gram_from_rows(np.array([[3.0, 4.0]]))[0, 0] == 25.0
    X = np.random.default_rng(1).standard_normal((4, 6))
    assert np.allclose(linalg.gram_from_rows(X), linalg.gram_from_columns(X.T), atol=1e-12)


def test_gram_rejects_non_finite():
    with pytest.raises(InvalidInput):
        linalg.gram_from_columns(np.array([[1.0, np.nan], [0.0, 1.0]]))


# --------------------------------------------------------------- log det / Iso

def test_log_det_examples():
    assert linalg.log_det_psd(np.eye(5)) == 0.0
    assert linalg.log_det_psd(np.diag([2.0, 8.0])) == pytest.approx(math.log(16), abs=1e-14)
    # equicorrelation(0.2) eigenvalues are 0.8, 0.8, 1.4
    assert linalg.log_det_psd(linalg.equicorrelation(3, 0.2)) == pytest.approx(
        math.log(0.896), abs=1e-14)


def test_log_det_degenerate_and_not_psd():
    dup = np.ones((2, 2))
    assert linalg.log_det_psd(dup) == -math.inf
    with pytest.raises(NotPSD):
        linalg.log_det_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_log_det_duplicated_sample_after_rounding():
    x = np.random.default_rng(3).standard_normal(50)
    X = np.column_stack([x, x * (1 + 1e-17), np.random.default_rng(4).standard_normal(50)])
    assert linalg.iso_gap(linalg.gram_from_columns(X)) == math.inf


def test_spectral_summary_examples():
    s = linalg.spectral_summary(np.eye(4))
    assert s.iso == 1.0 and s.iso_gap == 0.0
    assert linalg.iso(np.array([[1.0, 0.6], [0.6, 1.0]])) == pytest.approx(0.8, abs=1e-14)
    assert linalg.iso(linalg.equicorrelation(3, 0.2)) == pytest.approx(0.896 ** (1 / 3),
                                                                        abs=1e-14)


def test_spectral_summary_zero_trace():
    with pytest.raises(DegenerateInput):
        linalg.spectral_summary(np.zeros((3, 3)))


def test_asymmetric_rejected():
    with pytest.raises(InvalidInput):
        linalg.log_det_psd(np.array([[1.0, 0.1], [0.2, 1.0]]))


def test_iso_gap_survives_deep_underflow():
    # det = 1e-600 underflows as a product but not in log space
    G = np.diag(np.full(200, 1e-3))
    G[0, 0] = 1.0
    assert np.prod(np.diag(G)) == 0.0
    mean = (1.0 + 199e-3) / 200
    expected = math.log(mean) + 199 * 3 * math.log(10) / 200
    assert linalg.iso_gap(G) == pytest.approx(expected, rel=1e-12)


# ----------------------------------------------------------------- det bounds

def test_det_bounds_examples():
    b = linalg.det_bounds(np.eye(4))
    assert (b.lower, b.upper, b.lower_valid) == (1.0, 1.0, True)
    b = linalg.det_bounds(linalg.equicorrelation(3, 0.2))
    assert b.lower == pytest.approx(0.216) and b.upper == pytest.approx(0.96)
    assert b.lower <= 0.896 <= b.upper
    b = linalg.det_bounds(np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert b.lower == pytest.approx(0.25) and b.upper == pytest.approx(0.75)


def test_det_bounds_vacuous_lower_flag():
    b = linalg.det_bounds(linalg.equicorrelation(5, 0.5))
    assert not b.lower_valid and b.lower == 0.0


def test_det_bounds_requires_unit_diagonal():
    with pytest.raises(InvalidInput):
        linalg.det_bounds(np.diag([1.0, 2.0]))


# ----------------------------------------------------------------- normalize

def test_normalize_rows_examples():
    Y, s = linalg.normalize_rows(np.array([[1.0, 0.0], [0.0, 2.0]]))
    assert np.array_equal(Y, np.eye(2))
    assert s.mean == 1.5 and s.variance == 0.25
    X = np.eye(3)
    Y, s = linalg.normalize_rows(X)
    assert np.array_equal(Y, X) and s.variance == 0.0


def test_normalize_zero_row_reports_index():
    with pytest.raises(ZeroVector) as err:
        linalg.normalize_rows(np.array([[1.0, 1.0], [0.0, 0.0]]))
    assert err.value.index == 1


def test_center_columns():
    assert np.array_equal(linalg.center_columns(np.array([[1.0], [3.0]])),
                          np.array([[-1.0], [1.0]]))
    X = np.random.default_rng(2).standard_normal((7, 4)) + 5
    C = linalg.center_columns(X)
    assert np.all(np.abs(C.mean(axis=0)) <= 1e-12 * np.abs(X).max(axis=0))


def test_isometry_ratio_examples():
    assert linalg.isometry_ratio_identity(linalg.NormStats.from_norms([2.0, 2.0])) == 1.0
    assert linalg.isometry_ratio_identity(
        linalg.NormStats.from_norms([1.0, 2.0])) == pytest.approx(10 / 9, abs=1e-15)


def test_normalization_ratio_two_orthogonal_columns():
    # Iso before 0.8, after 1.0: the gain is 1.25, strictly above 1 + var/mean^2 = 10/9
    X = np.array([[1.0, 0.0], [0.0, 2.0]])
    before = linalg.iso(linalg.gram_from_columns(X))
    Y, stats = linalg.normalize_columns(X)
    after = linalg.iso(linalg.gram_from_columns(Y))
    assert before == pytest.approx(0.8, abs=1e-15) and after == 1.0
    assert after / before == pytest.approx(1.25, abs=1e-14)
    assert after / before >= linalg.isometry_ratio_identity(stats)
    assert linalg.exact_isometry_ratio(stats) == pytest.approx(1.25, abs=1e-14)


# ----------------------------------------------------------------- CSV files

def test_matrix_csv_round_trip(tmp_path):
    G = linalg.gram_from_columns(np.random.default_rng(5).standard_normal((6, 4)))
    p = tmp_path / "g.csv"
    linalg.save_matrix_csv(p, G)
    assert np.array_equal(linalg.load_matrix_csv(p, symmetric=True), G)


def test_matrix_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,0\n0,x\n")
    with pytest.raises(ParseError, match="line 2"):
        linalg.load_matrix_csv(p)
    p.write_text("1,0.5\n0.4,1\n")
    with pytest.raises(ParseError):
        linalg.load_matrix_csv(p, symmetric=True)
    p.write_text("1,0\n0\n")
    with pytest.raises(ParseError, match="line 2"):
        linalg.load_matrix_csv(p)


# ----------------------------------------------------------------- properties

def sample_matrices(full_rank=False):
    return st.integers(2, 8).flatmap(lambda n: st.integers(n if full_rank else 1, 3 * n).flatmap(
        lambda d: arrays(np.float64, (d, n),
                         elements=st.floats(-10, 10, allow_nan=False, width=64))))


@settings(max_examples=200, deadline=None)
@given(sample_matrices(), st.floats(1e-3, 1e3))
def test_iso_in_unit_range(X, c):
    G = linalg.gram_from_columns(X)
    if np.trace(G) == 0:
        return
    assert 0.0 <= linalg.iso(G) <= 1.0
    assert 0.0 <= linalg.iso(c * G) <= 1.0


@settings(max_examples=200, deadline=None)
@given(sample_matrices(full_rank=True), st.floats(1e-3, 1e3))
def test_iso_scale_invariant(X, c):
    G = linalg.gram_from_columns(X)
    if np.trace(G) == 0 or np.linalg.cond(G) > 1e8:
        return  # rank-deficient draws: Iso is rounding noise around 0
    assert abs(linalg.iso(c * G) - linalg.iso(G)) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(sample_matrices())
def test_sample_gram_is_psd(X):
    G = linalg.gram_from_columns(X)
    if np.trace(G) == 0:
        return
    assert linalg.log_det_psd(G) <= math.log(np.trace(G) / G.shape[0]) * G.shape[0] + 1e-9


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2 ** 32 - 1))
def test_normalization_gain_lower_bound_and_exact_ratio(n, seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(n, 3 * n + 1))
    X = rng.standard_normal((d, n)) * np.exp(rng.standard_normal(n))
    Y, stats = linalg.normalize_columns(X)
    ratio = math.exp(linalg.iso_gap(linalg.gram_from_columns(X))
                     - linalg.iso_gap(linalg.gram_from_columns(Y)))
    assert ratio >= linalg.isometry_ratio_identity(stats) * (1 - 1e-10)
    assert ratio == pytest.approx(linalg.exact_isometry_ratio(stats), rel=1e-8)
    assert np.allclose(np.linalg.norm(Y, axis=0), 1.0, rtol=1e-12, atol=0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.floats(0.01, 50.0))
def test_iso_one_only_for_multiples_of_identity(n, c):
    assert linalg.iso(c * np.eye(n)) == pytest.approx(1.0, abs=1e-14)
    D = c * np.eye(n)
    D[0, 0] *= 1.5
    assert linalg.iso(D) < 1.0


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1), st.floats(0.0, 1.0))
def test_det_bounds_sandwich(n, seed, t):
    rng = np.random.default_rng(seed)
    Y, _ = linalg.normalize_columns(rng.standard_normal((n + 2, n)))
    G = (1 - t) * np.eye(n) + t * linalg.gram_from_columns(Y)
    np.fill_diagonal(G, 1.0)
    b = linalg.det_bounds(G)
    det = math.exp(linalg.log_det_psd(G))
    assert det <= b.upper + 1e-12
    if b.lower_valid:
        assert b.lower <= det + 1e-12
