import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kgrass import kernels as K
from kgrass.errors import InputError, ValidationError

from oracles import poly2_features

ALL = [
    K.Linear(),
    K.Gaussian(0.8),
    K.Laplacian(1.0),
    K.Polynomial(2),
    K.Polynomial(3),
    K.Mixture(((0.6, K.Gaussian(0.8)), (0.4, K.Laplacian(1.0)))),
]

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_linear_unit_vector():
    e1 = np.array([1.0, 0.0, 0.0])
    assert K.eval_kernel(K.Linear(), e1, e1) == 1.0


@given(arrays(float, 4, elements=finite))
def test_gaussian_self_similarity_is_one(x):
    assert K.eval_kernel(K.Gaussian(0.8), x, x) == 1.0


def test_mixture_value_against_closed_forms():
    x = np.array([0.3, -1.2, 2.0])
    y = x.copy()
    y[1] += 1.0
    expected = 0.6 * math.exp(-1.0 / 1.28) + 0.4 * math.exp(-1.0)
    spec = K.Mixture(((0.6, K.Gaussian(0.8)), (0.4, K.Laplacian(1.0))))
    assert K.eval_kernel(spec, x, y) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "spec",
    [
        K.Gaussian(0.0),
        K.Laplacian(-1.0),
        K.Gaussian(float("nan")),
        K.Polynomial(0),
        K.Polynomial(1.5),
        K.Mixture(((0.6, K.Gaussian(0.5)), (0.6, K.Laplacian(0.8)))),
        K.Mixture(((1.2, K.Gaussian(0.5)), (-0.2, K.Linear()))),
        K.Mixture(((1.0, K.Mixture(((1.0, K.Linear()),))),)),
        K.Mixture(()),
    ],
)
def test_invalid_specs_rejected(spec):
    with pytest.raises(ValidationError):
        K.validate(spec)


def test_sigma_message():
    with pytest.raises(ValidationError, match="σ must be positive"):
        K.validate(K.Gaussian(0.0))


def test_valid_specs():
    K.validate(K.Linear())
    K.validate(K.Mixture(((0.5, K.Gaussian(0.5)), (0.5, K.Laplacian(0.8)))))


def test_dimension_mismatch():
    with pytest.raises(InputError):
        K.eval_kernel(K.Linear(), [1.0, 2.0], [1.0, 2.0, 3.0])


@pytest.mark.parametrize("spec", ALL, ids=lambda s: type(s).__name__)
@settings(max_examples=40, deadline=None)
@given(a=arrays(float, 5, elements=finite), b=arrays(float, 5, elements=finite))
def test_symmetry(spec, a, b):
    assert K.eval_kernel(spec, a, b) == pytest.approx(K.eval_kernel(spec, b, a), rel=1e-15, abs=0)


@pytest.mark.parametrize("spec", [K.Gaussian(0.8), K.Laplacian(1.0), ALL[-1]], ids=str)
@given(a=arrays(float, 3, elements=finite), b=arrays(float, 3, elements=finite))
def test_bounded_kernels_in_unit_interval(spec, a, b):
    v = K.eval_kernel(spec, a, b)
    assert 0.0 < v <= 1.0


@pytest.mark.parametrize("spec", ALL, ids=lambda s: type(s).__name__)
@settings(max_examples=30, deadline=None)
@given(X=arrays(float, (6, 3), elements=finite))
def test_gram_psd(spec, X):
    G = K.gram(spec, X)
    assert np.allclose(G, G.T, rtol=0, atol=1e-12 * max(1.0, np.abs(G).max()))
    scale = max(1.0, np.abs(G).max())
    assert np.linalg.eigvalsh(G).min() >= -1e-9 * scale


@settings(max_examples=40)
@given(a=arrays(float, 4, elements=finite), b=arrays(float, 4, elements=finite))
def test_mixture_linearity(a, b):
    terms = ((0.2, K.Gaussian(0.5)), (0.3, K.Laplacian(2.0)), (0.5, K.Polynomial(2)))
    direct = sum(w * K.eval_kernel(k, a, b) for w, k in terms)
    assert K.eval_kernel(K.Mixture(terms), a, b) == pytest.approx(direct, abs=1e-14 * max(1, abs(direct)))


def test_polynomial2_kernel_trick():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b = rng.normal(size=2), rng.normal(size=2)
        explicit = poly2_features(a) @ poly2_features(b)
        assert abs(K.eval_kernel(K.Polynomial(2), a, b) - explicit) < 1e-12


def test_gram_matches_scalar_eval():
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
    for spec in ALL:
        G = K.gram(spec, X, Y)
        ref = np.array([[K.eval_kernel(spec, x, y) for y in Y] for x in X])
        assert np.allclose(G, ref, rtol=1e-14, atol=1e-14)


@pytest.mark.parametrize("spec", ALL, ids=lambda s: type(s).__name__)
def test_dict_round_trip(spec):
    assert K.from_dict(K.to_dict(spec)) == spec


def test_tagged_record_format():
    rec = {"kind": "mixture", "terms": [{"w": 0.6, "kind": "gaussian", "sigma": 0.8},
                                        {"w": 0.4, "kind": "laplacian", "sigma": 1.0}]}
    spec = K.from_dict(rec)
    assert spec == K.Mixture(((0.6, K.Gaussian(0.8)), (0.4, K.Laplacian(1.0))))
    assert K.to_dict(spec) == rec


@pytest.mark.parametrize(
    "rec",
    [
        {"kind": "gaussian"},
        {"kind": "gaussian", "sigma": 1.0, "sigmaa": 2.0},
        {"kind": "cosine"},
        {"sigma": 1.0},
        {"kind": "mixture", "terms": [{"kind": "linear"}]},
        {"kind": "mixture", "terms": [{"w": 1.0, "kind": "mixture", "terms": []}]},
    ],
)
def test_bad_records(rec):
    with pytest.raises(ValidationError):
        K.from_dict(rec)
