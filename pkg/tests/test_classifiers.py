import json

import numpy as np
import pytest

from icpclean.classifiers import fit_classifier, lda_fit, lr_fit, model_to_json
from icpclean.dataset import Dataset, LabelSpace
from icpclean.preprocess import standardize_fit_apply

AB = LabelSpace(("A", "B"))


def separable(seed, n=100, d=2, gap=6.0):
    rng = np.random.default_rng(seed)
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, d))
    X[:, 0] += gap * y
    return Dataset(X, y, AB)


def test_lda_midpoint_boundary():
    ds = Dataset([[0.0], [2.0], [4.0], [6.0]], [0, 0, 1, 1], AB)
    model = lda_fit(ds)
    assert model.predict([[2.9], [3.1]]).tolist() == [0, 1]
    assert model.predict_proba([[3.0]])[0] == pytest.approx([0.5, 0.5], abs=1e-12)


def test_lda_class_mean_predicts_class():
    ds = separable(0, d=3)
    model = lda_fit(ds)
    assert model.predict(model.class_means).tolist() == [0, 1]


def test_lda_duplicated_column_matches_dedup():
    rng = np.random.default_rng(2)
    y = np.repeat([0, 1, 2], 30)
    X = rng.normal(size=(90, 3)) + 2.5 * rng.normal(size=(3, 3))[y]
    space = LabelSpace(("a", "b", "c"))
    dup = Dataset(np.column_stack([X, X[:, 1]]), y, space)
    ref = Dataset(X, y, space)
    Q = rng.normal(scale=3, size=(200, 3))
    p_dup = lda_fit(dup).predict(np.column_stack([Q, Q[:, 1]]))
    p_ref = lda_fit(ref).predict(Q)
    assert np.array_equal(p_dup, p_ref)


def test_lda_high_dimensional_rank_deficient():
    rng = np.random.default_rng(3)
    y = np.repeat([0, 1], 10)
    X = rng.normal(size=(20, 50))
    X[:, 0] += 5 * y
    model = lda_fit(Dataset(X, y, AB))
    assert model.scalings.shape[1] <= 18
    assert np.all(np.isfinite(model.predict_proba(X)))


def test_lda_nearest_mean_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        y = np.repeat([0, 1, 2], 400)
        X = rng.normal(size=(1200, 3)) + 4 * rng.normal(size=(3, 3))[y]
        model = lda_fit(Dataset(X, y, LabelSpace(("a", "b", "c"))))
        Q = rng.normal(scale=4, size=(100, 3))
        d2 = ((Q[:, None, :] - model.class_means[None]) ** 2).sum(axis=2)
        # isotropic covariance: agreement except for points near a boundary
        agree = np.mean(model.predict(Q) == np.argmin(d2, axis=1))
        assert agree >= 0.95


def test_lda_requires_two_per_class():
    with pytest.raises(ValueError, match="two samples per class"):
        lda_fit(Dataset([[0.0], [1.0], [5.0]], [0, 0, 1], AB))


def test_lr_separable():
    ds = separable(1)
    model = lr_fit(ds)
    assert np.mean(model.predict(ds.features) == ds.labels) == 1.0
    assert np.all(np.isfinite(model.weights))
    assert model.converged


def test_lr_pure_noise_shrinks():
    gaps = []
    for seed in range(30):
        rng = np.random.default_rng(seed)
        ds = Dataset(rng.normal(size=(200, 5)), np.repeat([0, 1], 100), AB)
        p = lr_fit(ds).predict_proba(rng.normal(size=(200, 5)))[:, 1]
        gaps.append(np.mean(np.abs(p - 0.5)))
    assert np.mean(gaps) < 0.1


def test_lr_sign_of_association():
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    ds = Dataset(x.reshape(-1, 1), (x > 0).astype(int), AB)
    assert lr_fit(ds).weights[0, 0] > 0


def test_lr_multinomial_probabilities():
    rng = np.random.default_rng(6)
    y = np.repeat([0, 1, 2], 50)
    X = rng.normal(size=(150, 4)) + 3 * rng.normal(size=(3, 4))[y]
    model = lr_fit(Dataset(X, y, LabelSpace(("a", "b", "c"))))
    P = model.predict_proba(rng.normal(scale=5, size=(40, 4)))
    assert np.all((P >= 0) & (P <= 1))
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert model.weights.shape == (3, 4)


@pytest.mark.parametrize("seed", range(5))
def test_lr_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 3, size=120)
    X = rng.normal(size=(120, 6)) + rng.normal(size=(3, 6))[y]
    model = lr_fit(Dataset(X, y, LabelSpace(("a", "b", "c"))))
    h = np.array(model.objective_history)
    assert len(h) > 2
    assert np.all(np.diff(h) <= 1e-12)


def test_lr_nonconvergence_flagged():
    with pytest.warns(RuntimeWarning, match="did not converge"):
        model = lr_fit(separable(2), max_iter=1)
    assert not model.converged
    assert np.all(np.isfinite(model.weights))


@pytest.mark.parametrize("kind", ["lda", "lr"])
def test_shift_invariance_with_standardization(kind):
    train, test = separable(7, d=3), separable(8, d=3)
    (tr, te), _, _ = standardize_fit_apply(train, [train, test])
    shifted_train = train.with_features(train.features + 100.0)
    shifted_test = test.with_features(test.features + 100.0)
    (str_, ste), _, _ = standardize_fit_apply(shifted_train, [shifted_train, shifted_test])
    a = fit_classifier(kind, tr).predict(te.features)
    b = fit_classifier(kind, str_).predict(ste.features)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("kind", ["lda", "lr"])
def test_probabilities_and_json(kind):
    ds = separable(9, d=3)
    model = fit_classifier(kind, ds)
    P = model.predict_proba(ds.features)
    assert np.allclose(P.sum(axis=1), 1, atol=1e-9)
    doc = json.loads(model_to_json(model))
    assert doc["kind"] == kind


def test_unknown_classifier():
    with pytest.raises(ValueError):
        fit_classifier("svm", separable(0))
