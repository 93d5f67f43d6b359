"""Reproducing kernels on real vectors and their convex mixtures.

A kernel is described by one of the small frozen dataclasses below. ``gram``
evaluates a whole kernel matrix at once and is what the feature extractor uses;
``eval_kernel`` is the scalar form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Union

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError, ValidationError

__all__ = [
    "Linear",
    "Gaussian",
    "Laplacian",
    "Polynomial",
    "Mixture",
    "KernelSpec",
    "validate",
    "eval_kernel",
    "gram",
    "to_dict",
    "from_dict",
]

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class Linear:
    """``k(a, b) = a^T b``."""


@dataclass(frozen=True)
class Gaussian:
    """``k(a, b) = exp(-||a - b||_2^2 / (2 sigma^2))``."""

    sigma: float


@dataclass(frozen=True)
class Laplacian:
    """``k(a, b) = exp(-||a - b||_1 / sigma)``."""

    sigma: float


@dataclass(frozen=True)
class Polynomial:
    """``k(a, b) = (a^T b + 1)^degree``."""

    degree: int


@dataclass(frozen=True)
class Mixture:
    """Convex combination of non-mixture kernels.

    ``terms`` is a tuple of ``(weight, kernel)`` pairs.
    """

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((float(w), k) for w, k in self.terms))


BaseKernel = Union[Linear, Gaussian, Laplacian, Polynomial]
KernelSpec = Union[BaseKernel, Mixture]


def _validate_base(spec) -> None:
    if isinstance(spec, Linear):
        return
    if isinstance(spec, (Gaussian, Laplacian)):
        s = spec.sigma
        if not (isinstance(s, (int, float, np.floating)) and math.isfinite(s) and s > 0):
            raise ValidationError("σ must be positive")
        return
    if isinstance(spec, Polynomial):
        r = spec.degree
        if isinstance(r, bool) or not isinstance(r, (int, np.integer)) or r < 1:
            raise ValidationError("polynomial degree must be a positive integer")
        return
    if isinstance(spec, Mixture):
        raise ValidationError("nested mixtures are not allowed")
    raise ValidationError(f"unknown kernel spec {spec!r}")


def validate(spec: KernelSpec) -> None:
    """Raise ``ValidationError`` describing the first violated invariant."""
    if not isinstance(spec, Mixture):
        _validate_base(spec)
        return
    if not spec.terms:
        raise ValidationError("mixture needs at least one term")
    for w, term in spec.terms:
        if not math.isfinite(w) or w < 0:
            raise ValidationError("mixture weights must be non-negative")
        _validate_base(term)
    total = math.fsum(w for w, _ in spec.terms)
    if abs(total - 1.0) > _WEIGHT_TOL:
        raise ValidationError(f"mixture weights must sum to 1 (got {total!r})")


def _base_gram(spec: BaseKernel, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    if isinstance(spec, Linear):
        return X @ Y.T
    if isinstance(spec, Gaussian):
        return np.exp(-cdist(X, Y, "sqeuclidean") / (2.0 * spec.sigma**2))
    if isinstance(spec, Laplacian):
        return np.exp(-cdist(X, Y, "cityblock") / spec.sigma)
    return (X @ Y.T + 1.0) ** spec.degree


def gram(spec: KernelSpec, X, Y=None, *, check: bool = True) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(X[i], Y[j])`` for row-stacked vectors.

    Parameters
    ----------
    spec
        Kernel description.
    X, Y
        Arrays of shape ``(n, q)`` and ``(p, q)``. ``Y`` defaults to ``X``.
    check
        Validate ``spec`` first. Hot loops that already validated pass False.
    """
    if check:
        validate(spec)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if isinstance(spec, Mixture):
        out = np.zeros((X.shape[0], Y.shape[0]))
        for w, term in spec.terms:
            out += w * _base_gram(term, X, Y)
        return out
    return _base_gram(spec, X, Y)


def eval_kernel(spec: KernelSpec, a, b) -> float:
    """Evaluate ``k(a, b)`` for two vectors of equal length."""
    validate(spec)
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(gram(spec, a[None, :], b[None, :], check=False)[0, 0])


def to_dict(spec: KernelSpec) -> dict[str, Any]:
    """Tagged-record form used in config files."""
    if isinstance(spec, Linear):
        return {"kind": "linear"}
    if isinstance(spec, Gaussian):
        return {"kind": "gaussian", "sigma": spec.sigma}
    if isinstance(spec, Laplacian):
        return {"kind": "laplacian", "sigma": spec.sigma}
    if isinstance(spec, Polynomial):
        return {"kind": "polynomial", "degree": spec.degree}
    if isinstance(spec, Mixture):
        return {"kind": "mixture", "terms": [{"w": w, **to_dict(k)} for w, k in spec.terms]}
    raise ValidationError(f"unknown kernel spec {spec!r}")


_KEYS = {
    "linear": set(),
    "gaussian": {"sigma"},
    "laplacian": {"sigma"},
    "polynomial": {"degree"},
}


def from_dict(data: dict[str, Any], *, _in_mixture: bool = False) -> KernelSpec:
    """Inverse of :func:`to_dict`; the result is validated."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ValidationError(f"kernel record needs a 'kind' field: {data!r}")
    data = dict(data)
    kind = data.pop("kind")
    if _in_mixture:
        data.pop("w", None)
    if kind == "mixture":
        if _in_mixture:
            raise ValidationError("nested mixtures are not allowed")
        extra = set(data) - {"terms"}
        if extra:
            raise ValidationError(f"unknown kernel keys: {sorted(extra)}")
        terms = []
        for rec in data.get("terms", []):
            if "w" not in rec:
                raise ValidationError("mixture term needs a weight 'w'")
            terms.append((float(rec["w"]), from_dict(rec, _in_mixture=True)))
        spec: KernelSpec = Mixture(tuple(terms))
    elif kind in _KEYS:
        extra = set(data) - _KEYS[kind]
        missing = _KEYS[kind] - set(data)
        if extra:
            raise ValidationError(f"unknown kernel keys: {sorted(extra)}")
        if missing:
            raise ValidationError(f"missing kernel keys: {sorted(missing)}")
        if kind == "linear":
            spec = Linear()
        elif kind == "gaussian":
            spec = Gaussian(float(data["sigma"]))
        elif kind == "laplacian":
            spec = Laplacian(float(data["sigma"]))
        else:
            spec = Polynomial(data["degree"])
    else:
        raise ValidationError(f"unknown kernel kind {kind!r}")
    if not _in_mixture:
        validate(spec)
    return spec
