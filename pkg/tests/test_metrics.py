"""Standardization, IC / RankIC, aggregates, top-bucket portfolio and curve smoothing."""

import math

import numpy as np
import pytest

from horizon_lab.errors import DegenerateError, DomainError, ShapeError
from horizon_lab.metrics import (
    ICSeries,
    aggregate_ic,
    compute_report,
    gaussian_smooth,
    pearson_ic,
    portfolio_stats,
    rowwise_ic,
    rowwise_rank_ic,
    smoothing_matrix,
    spearman_rank_ic,
    standardize_cross_section,
    top_bucket_returns,
)

# --------------------------------------------------------------------------- standardization


def test_standardize_hand_value():
    out = standardize_cross_section([1, 2, 3])
    np.testing.assert_allclose(out, [-math.sqrt(1.5), 0, math.sqrt(1.5)], atol=1e-15)
    np.testing.assert_allclose(np.round(out, 5), [-1.22474, 0, 1.22474])


def test_standardize_idempotent(rng):
    z = standardize_cross_section(rng.standard_normal(37))
    np.testing.assert_allclose(standardize_cross_section(z), z, atol=1e-12, rtol=0)


def test_standardize_constant_rejected():
    with pytest.raises(DegenerateError):
        standardize_cross_section([2.0, 2.0, 2.0])


def test_standardize_axis(rng):
    x = rng.standard_normal((4, 9))
    z = standardize_cross_section(x, axis=1)
    np.testing.assert_allclose(z.mean(axis=1), 0, atol=1e-15)
    np.testing.assert_allclose(z.var(axis=1), 1, atol=1e-12)


# --------------------------------------------------------------------------- IC


def test_pearson_examples(rng):
    x = rng.standard_normal(10)
    assert pearson_ic(x, x) == pytest.approx(1.0, abs=1e-15)
    assert pearson_ic(x, -x) == pytest.approx(-1.0, abs=1e-15)
    assert pearson_ic([1, 2, 3], [1, 2, 4]) == pytest.approx(9 / math.sqrt(84), abs=1e-14)
    assert round(pearson_ic([1, 2, 3], [1, 2, 4]), 5) == 0.98198


def test_pearson_errors():
    with pytest.raises(DegenerateError):
        pearson_ic([1, 1, 1], [1, 2, 3])
    with pytest.raises(ShapeError):
        pearson_ic([1, 2], [1, 2, 3])


def test_spearman_examples():
    up = np.arange(8.0)
    assert spearman_rank_ic(up, up**3) == pytest.approx(1.0)
    assert spearman_rank_ic(up, -np.exp(up)) == pytest.approx(-1.0)
    assert spearman_rank_ic([1, 2, 2, 3], [1, 3, 2, 4]) == pytest.approx(4.5 / math.sqrt(22.5), abs=1e-14)
    assert round(spearman_rank_ic([1, 2, 2, 3], [1, 3, 2, 4]), 5) == 0.94868


def test_spearman_all_tied_rejected():
    with pytest.raises(DegenerateError):
        spearman_rank_ic([5, 5, 5], [1, 2, 3])


def test_rowwise_matches_scalar(rng):
    p, y = rng.standard_normal((2, 6, 15))
    np.testing.assert_allclose(rowwise_ic(p, y), [pearson_ic(a, b) for a, b in zip(p, y)], atol=1e-14)
    np.testing.assert_allclose(rowwise_rank_ic(p, y), [spearman_rank_ic(a, b) for a, b in zip(p, y)], atol=1e-14)


# --------------------------------------------------------------------------- aggregates


def test_aggregate_zero_std_rejected():
    with pytest.raises(DegenerateError):
        aggregate_ic([0.1, 0.1, 0.1])


def test_aggregate_hand_value():
    mean, ir = aggregate_ic(ICSeries(np.array([0.2, 0.0])))
    assert mean == pytest.approx(0.1)
    assert ir == pytest.approx(1.0)


def test_aggregate_sign_equivariance(rng):
    v = rng.uniform(-0.3, 0.3, 20)
    mean, ir = aggregate_ic(v)
    assert aggregate_ic(-v) == pytest.approx((-mean, -ir))


def test_ic_series_range():
    with pytest.raises(DomainError):
        ICSeries(np.array([0.5, 1.5]))


# --------------------------------------------------------------------------- portfolio


def test_full_bucket_is_grand_mean(rng):
    p, r = rng.standard_normal((2, 5, 12))
    top, _ = portfolio_stats(p, r, 1.0)
    assert top == pytest.approx(r.mean(), abs=1e-15)


def test_perfect_foresight_bucket():
    n = 25
    r = np.stack([0.01 * np.random.default_rng(k).permutation(n) for k in range(3)])
    k = math.ceil(0.1 * n)
    expected = np.sort(r, axis=1)[:, -k:].mean(axis=1)
    np.testing.assert_allclose(top_bucket_returns(r, r, 0.1), expected)


def test_portfolio_hand_value():
    preds = np.array([[1.0, 0.0], [1.0, 0.0]])
    rets = np.array([[0.02, -1.0], [0.0, 5.0]])
    top, sharpe = portfolio_stats(preds, rets, 0.5)
    assert top == pytest.approx(0.01)
    assert sharpe == pytest.approx(math.sqrt(252))
    assert round(sharpe, 3) == 15.875


def test_bucket_ties_go_to_lower_index():
    preds = np.array([[1.0, 1.0, 1.0, 0.0]])
    rets = np.array([[0.1, 0.2, 0.3, 0.4]])
    np.testing.assert_allclose(top_bucket_returns(preds, rets, 0.5), [0.15])


def test_bucket_size_rounds_up():
    preds = np.arange(11.0)[None, :]
    rets = np.arange(11.0)[None, :]
    # ceil(0.1 * 11) = 2 assets: the two largest
    np.testing.assert_allclose(top_bucket_returns(preds, rets, 0.1), [9.5])


def test_portfolio_errors():
    with pytest.raises(DomainError):
        top_bucket_returns(np.ones((1, 3)), np.ones((1, 3)), 0.0)
    with pytest.raises(DegenerateError):
        portfolio_stats(np.ones((3, 4)), np.ones((3, 4)), 0.5)


def test_compute_report_fields(rng):
    p = rng.standard_normal((8, 30))
    r = p + rng.standard_normal((8, 30))
    rep = compute_report(p, r)
    ic = rowwise_ic(p, r)
    assert rep.ic_mean == pytest.approx(ic.mean())
    assert rep.icir == pytest.approx(ic.mean() / ic.std())
    assert rep.n_periods == 8
    assert set(rep.as_dict()) == {
        "ic_mean", "icir", "rank_ic_mean", "rank_icir", "top_return_mean", "sharpe_annualized", "n_periods",
    }


def test_compute_report_single_period_gives_nan_ratios(rng):
    p, r = rng.standard_normal((2, 1, 10))
    rep = compute_report(p, r)
    assert math.isnan(rep.icir) and math.isnan(rep.sharpe_annualized)
    assert rep.ic_mean == pytest.approx(pearson_ic(p, r))


# --------------------------------------------------------------------------- smoothing


def test_smooth_constant_unchanged():
    np.testing.assert_allclose(gaussian_smooth(np.full(20, 3.7), 5.0), 3.7, atol=1e-12, rtol=0)


def test_smooth_small_bandwidth_is_identity(rng):
    c = rng.standard_normal(12)
    np.testing.assert_array_equal(gaussian_smooth(c, 0.49), c)


def test_smooth_impulse():
    out = gaussian_smooth(np.array([0, 0, 1.0, 0, 0]), 1.0)
    np.testing.assert_allclose(out, out[::-1], atol=1e-15)
    assert abs(out.sum() - 1) < 1e-12
    assert out.argmax() == 2


def test_smooth_errors():
    with pytest.raises(DegenerateError):
        gaussian_smooth(np.array([]), 1.0)
    with pytest.raises(ValueError):
        gaussian_smooth(np.ones(3), 0.0)
    with pytest.raises(ShapeError):
        gaussian_smooth(np.ones((2, 2)), 1.0)


def test_smoothing_matrix_row_stochastic_and_symmetric():
    m = smoothing_matrix(11, 2.5)
    np.testing.assert_allclose(m.sum(axis=1), 1, atol=1e-14)
    np.testing.assert_allclose(m, m.T, atol=1e-15)


def test_smoothing_preserves_monotone_shape():
    curve = -np.log(np.arange(1, 21.0))
    assert np.all(np.diff(gaussian_smooth(curve, 1.5)) <= 0)
