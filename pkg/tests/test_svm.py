import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibrstab.asm import _kernels_py, svm
from ibrstab.asm.svm import (DegenerateLabelsError, ExtrapolationWarning, SvmError, SvmModel, fit_platt,
                             predict_probability, train_svm)
from ibrstab.netmodel import ParameterDomain

BOX = ParameterDomain(("a", "b"), (-2.0, -2.0), (2.0, 2.0))

try:
    from ibrstab.asm import _kernels as _compiled
except ImportError:  # pragma: no cover - compiled extension not built
    _compiled = None


def disk_data(n, seed, radius=1.2):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(n, 2))
    return X, (np.linalg.norm(X, axis=1) <= radius).astype(int)


@pytest.fixture(scope="module")
def disk_model():
    X, s = disk_data(300, 0)
    return train_svm(X, s, BOX), X, s


def test_separable_clusters_fit_exactly():
    rng = np.random.default_rng(1)
    A = rng.normal([-1.0, -1.0], 0.2, size=(40, 2))
    B = rng.normal([1.0, 1.0], 0.2, size=(40, 2))
    X = np.vstack([A, B])
    s = np.r_[np.zeros(40, int), np.ones(40, int)]
    m = train_svm(X, s, BOX)
    assert np.array_equal((m.decision(X) > 0).astype(int), s)
    assert predict_probability(m, [1.0, 1.0]) >= 0.95
    assert predict_probability(m, [-1.0, -1.0]) <= 0.05


def test_training_accuracy_on_disk(disk_model):
    m, X, s = disk_model
    assert np.mean((m.decision(X) > 0).astype(int) == s) >= 0.97


def test_label_flip_mirrors_probability(disk_model):
    m, X, s = disk_model
    flipped = train_svm(X, 1 - s, BOX)
    grid = np.random.default_rng(2).uniform(-2, 2, size=(500, 2))
    p, q = predict_probability(m, grid), predict_probability(flipped, grid)
    assert np.max(np.abs(p - (1 - q))) <= 0.02


def test_sample_order_does_not_matter(disk_model):
    m, X, s = disk_model
    perm = np.random.default_rng(3).permutation(len(s))
    m2 = train_svm(X[perm], s[perm], BOX)
    grid = np.random.default_rng(4).uniform(-2, 2, size=(200, 2))
    assert np.array_equal(predict_probability(m, grid), predict_probability(m2, grid))


def test_probabilities_calibrated():
    X, s = disk_data(600, 5)
    m = train_svm(X, s, BOX)
    Xt, st_ = disk_data(4000, 6)
    p = predict_probability(m, Xt)
    bins = np.clip((p * 10).astype(int), 0, 9)
    err = 0.0
    for b in range(10):
        sel = bins == b
        if sel.any():
            err += sel.mean() * abs(p[sel].mean() - st_[sel].mean())
    assert err <= 0.15
    assert np.mean((p >= 0.5) == (st_ == 1)) >= 0.95


def test_model_json_round_trip(disk_model):
    m = disk_model[0]
    back = SvmModel.from_json(m.to_json())
    grid = np.random.default_rng(7).uniform(-2, 2, size=(100, 2))
    assert np.array_equal(predict_probability(back, grid), predict_probability(m, grid))
    assert back.domain == m.domain and back.info == m.info
    with pytest.raises(SvmError):
        SvmModel.from_dict({"kind": "other"})


def test_scalar_and_batch_predictions(disk_model):
    m = disk_model[0]
    p = predict_probability(m, [0.1, 0.2])
    assert isinstance(p, float) and 0.0 <= p <= 1.0
    assert predict_probability(m, [[0.1, 0.2]]).shape == (1,)


def test_extrapolation_warning(disk_model):
    m = disk_model[0]
    with pytest.warns(ExtrapolationWarning):
        predict_probability(m, [3.0, 0.0])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        predict_probability(m, [1.9, -1.9])
        predict_probability(m, [3.0, 0.0], warn=False)


def test_input_validation():
    X, s = disk_data(50, 8)
    with pytest.raises(DegenerateLabelsError):
        train_svm(X, np.ones(50, int), BOX)
    with pytest.raises(SvmError):
        train_svm(X, s * 2, BOX)
    with pytest.raises(SvmError):
        train_svm(X[:, :1], s, BOX)
    with pytest.raises(SvmError):
        train_svm(X, s, BOX, C=0.0)
    with pytest.raises(SvmError):
        train_svm(X, s, BOX, gamma=-1.0)


def test_smo_iteration_cap_reported():
    X, s = disk_data(100, 9)
    with pytest.raises(svm.ConvergenceError):
        train_svm(X, s, BOX, max_iter=3)


def test_platt_recovers_known_sigmoid():
    rng = np.random.default_rng(10)
    f = rng.normal(0, 2, size=20000)
    y = np.where(rng.uniform(size=f.size) < 1 / (1 + np.exp(-(1.5 * f - 0.5))), 1.0, -1.0)
    a, b = fit_platt(f, y)
    assert a == pytest.approx(1.5, abs=0.08) and b == pytest.approx(-0.5, abs=0.08)


def test_platt_separable_stays_finite():
    f = np.r_[-np.linspace(1, 3, 20), np.linspace(1, 3, 20)]
    y = np.r_[-np.ones(20), np.ones(20)]
    a, b = fit_platt(f, y)
    assert np.isfinite(a) and np.isfinite(b) and a > 0


@pytest.mark.skipif(_compiled is None, reason="compiled kernels not built")
def test_compiled_kernels_match_reference():
    rng = np.random.default_rng(11)
    Z = rng.uniform(size=(120, 3))
    y = np.where(np.linalg.norm(Z - 0.5, axis=1) < 0.4, 1.0, -1.0)
    Kp = _kernels_py.rbf_matrix(Z, Z, 2.0)
    Kc = _compiled.rbf_matrix(Z, Z, 2.0)
    assert np.array_equal(Kp, Kc)
    ap, bp, itp, okp = _kernels_py.smo_solve(Kp, y, 1000.0, 1e-4, 100000)
    ac, bc, itc, okc = _compiled.smo_solve(Kp, y, 1000.0, 1e-4, 100000)
    assert okp and okc and itp == itc
    assert np.array_equal(ap, ac) and bp == bc
    coef = ap * y
    zq = rng.uniform(size=(50, 3))
    assert np.array_equal(_kernels_py.rbf_decision(zq, Z, coef, bp, 2.0),
                          _compiled.rbf_decision(zq, Z, coef, bp, 2.0))


@pytest.mark.skipif(_compiled is None, reason="compiled kernels not built")
def test_backends_give_same_model(monkeypatch):
    X, s = disk_data(150, 12)
    monkeypatch.setattr(svm, "kernels", _compiled)
    mc = train_svm(X, s, BOX)
    monkeypatch.setattr(svm, "kernels", _kernels_py)
    mp = train_svm(X, s, BOX)
    grid = np.random.default_rng(13).uniform(-2, 2, size=(300, 2))
    assert np.array_equal(predict_probability(mc, grid), predict_probability(mp, grid))


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1), st.floats(0.4, 1.6))
def test_probabilities_bounded_and_order_free(seed, radius):
    X, s = disk_data(60, seed, radius)
    if s.min() == s.max():
        return
    m = train_svm(X, s, BOX)
    perm = np.random.default_rng(seed + 1).permutation(60)
    m2 = train_svm(X[::-1][perm], s[::-1][perm], BOX)
    grid = np.random.default_rng(seed + 2).uniform(-2, 2, size=(50, 2))
    p = predict_probability(m, grid)
    assert np.all((p >= 0) & (p <= 1))
    assert np.array_equal(p, predict_probability(m2, grid))
