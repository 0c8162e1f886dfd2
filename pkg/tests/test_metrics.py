import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rbnn.core import InvalidArgumentError
from rbnn.grid import GridSpec, predict_grid, read_field_csv, write_field_csv
from rbnn.metrics import UndefinedCorrelationError, evaluate, idw_baseline, mate, mate_db, rms_error_db, spearman
from rbnn.model import ImageSourceModel, PlaneWaveModel

positive = st.floats(1e-6, 1e6, allow_nan=False)


def test_rms_examples():
    t = np.array([0.3, 1.2, 5.0])
    assert rms_error_db(t, t) == 0.0
    assert rms_error_db(2 * t, t) == pytest.approx(6.0206, abs=1e-4)
    assert rms_error_db([10.0, 1.0], [1.0, 1.0]) == pytest.approx(math.sqrt(200.0), rel=1e-12)


def test_rms_clamps_zero_amplitudes():
    assert math.isfinite(rms_error_db([0.0], [1.0]))
    assert rms_error_db([0.0], [1.0]) == pytest.approx(600.0)


def test_metric_input_checks():
    with pytest.raises(InvalidArgumentError):
        rms_error_db([1.0], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        mate([], [])
    with pytest.raises(InvalidArgumentError):
        rms_error_db([-1.0], [1.0])


def test_mate_examples():
    t = np.array([0.3, 0.7])
    assert mate(t, t) == 0.0
    assert mate(t + 0.01, t) == pytest.approx(0.01)
    assert mate(t + [0.1, -0.3], t) == pytest.approx(0.2)
    assert mate_db([2.0], [1.0]) == pytest.approx(6.0206, abs=1e-4)


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 41]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 1, 1], [1, 2, 3])


def test_spearman_matches_scipy(rng):
    from scipy.stats import spearmanr

    a = rng.integers(0, 5, 40).astype(float)
    b = a + rng.normal(size=40)
    assert spearman(a, b) == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)


@settings(max_examples=50)
@given(st.lists(st.tuples(positive, positive), min_size=3, max_size=30))
def test_spearman_monotone_invariance(pairs):
    a, b = map(np.array, zip(*pairs))
    try:
        rho = spearman(a, b)
    except UndefinedCorrelationError:
        return
    assert -1.0 <= rho <= 1.0
    assert spearman(np.log(a), b ** 3) == pytest.approx(rho, abs=1e-12)


@given(st.lists(positive, min_size=1, max_size=30))
def test_errors_vanish_only_at_equality(values):
    t = np.array(values)
    assert rms_error_db(t, t) == 0.0 and mate(t, t) == 0.0
    p = t.copy()
    p[0] *= 1.5
    assert rms_error_db(p, t) > 0 and mate(p, t) > 0


def test_evaluate_report():
    r = evaluate([1.0, 2.0, 3.0], [1.0, 2.0, 4.0])
    assert r.counts == 3 and r.spearman_rho == 1.0
    assert evaluate([1.0, 1.0], [1.0, 2.0]).spearman_rho is None
    assert set(r.to_dict()) == {"rms_error_db", "mate_linear", "mate_db", "spearman_rho", "counts"}


def test_idw_examples(rng):
    X = rng.uniform(0, 1, (10, 3))
    y = rng.uniform(0, 1, 10)
    np.testing.assert_allclose(idw_baseline(X, y, X[3:5]), y[3:5])
    np.testing.assert_allclose(idw_baseline(X[:1], y[:1], rng.normal(size=(7, 3))), y[0])
    two = np.array([[-1.0, 0, 0], [1.0, 0, 0]])
    assert idw_baseline(two, [1.0, 3.0], [[0.0, 5.0, 0.0]])[0] == pytest.approx(2.0)
    with pytest.raises(InvalidArgumentError):
        idw_baseline(np.empty((0, 3)), [], X)
    with pytest.raises(InvalidArgumentError):
        idw_baseline(X, y, X, power=0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_idw_bounded(seed):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(15, 3)), rng.uniform(0, 5, 15)
    out = idw_baseline(X, y, rng.normal(size=(50, 3)) * 3, power=rng.uniform(0.5, 4))
    assert np.all(out >= y.min() - 1e-12) and np.all(out <= y.max() + 1e-12)


def test_grid_counts_and_order():
    g = GridSpec(((0, 10), (0, 10), (5, 5)), (1, 1, 0))
    assert g.shape == (11, 11, 1)
    pts = g.points()
    assert len(pts) == 121
    np.testing.assert_array_equal(pts[:2], [[0, 0, 5], [0, 1, 5]])


@given(st.tuples(*[st.integers(0, 6)] * 3), st.tuples(*[st.sampled_from([0.25, 0.5, 1.0])] * 3))
def test_grid_row_count_is_product(nodes, res):
    if all(n == 0 for n in nodes):
        return
    bounds = tuple((0.0, n * r) for n, r in zip(nodes, res))
    g = GridSpec(bounds, tuple(r if n else 0.0 for n, r in zip(nodes, res)))
    assert len(g.points()) == np.prod([n + 1 for n in nodes])


@pytest.mark.parametrize(
    "bounds, res",
    [(((1, 0), (0, 1), (0, 1)), (1, 1, 1)), (((0, 1), (0, 1), (0, 1)), (0, 1, 1)),
     (((0, 0), (0, 0), (0, 0)), (0, 0, 0)), (((0, 1), (0, 1)), (1, 1))],
)
def test_grid_rejects_degenerate(bounds, res):
    with pytest.raises(InvalidArgumentError):
        GridSpec(bounds, res)


def test_grid_dict_round_trip():
    g = GridSpec(((0, 1), (2, 2), (0, 3)), (0.1, 0, 0.5))
    assert GridSpec.from_dict(g.to_dict()) == g


def test_predict_grid_constant_for_single_plane_wave():
    m = PlaneWaveModel([0.7], [0.1], [0.2], [0.3], 5.0)
    _, amp = predict_grid(m, GridSpec(((0, 2), (0, 2), (0, 0)), (0.5, 0.5, 0)))
    np.testing.assert_allclose(amp, 0.7, rtol=1e-14)


def test_predict_grid_sentinel_at_image():
    m = ImageSourceModel([1.0], [0.0], [0.0], [math.pi / 2], [2.0], 1.0, (2.0, 0.0, 0.0))
    pts, amp = predict_grid(m, GridSpec(((0, 4), (0, 0), (0, 0)), (1, 0, 0)))
    assert np.isnan(amp[0]) and np.all(np.isfinite(amp[1:]))
    buf = io.StringIO()
    write_field_csv(buf, pts, amp)
    assert buf.getvalue().splitlines()[1] == "0.0,0.0,0.0,"
    buf.seek(0)
    p2, a2 = read_field_csv(buf)
    np.testing.assert_array_equal(p2, pts)
    np.testing.assert_array_equal(a2[1:], amp[1:])
    assert np.isnan(a2[0])


def test_grid_feeds_metrics():
    m = PlaneWaveModel.random(4, 3.0, 1.0, rng=0)
    g = GridSpec(((0, 3), (0, 3), (1, 1)), (0.5, 0.5, 0))
    pts, amp = predict_grid(m, g)
    assert rms_error_db(amp, m.predict(pts)) == 0.0
