"""Estimator-style wrappers (get_params/set_params, fit/predict).

``fit`` takes the assembled model (a StiffnessSet) in place of a data
matrix: the surrogates query the solver themselves. ``predict`` maps
parameter rows to field rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import MalformedInputError
from .greedy import rb_offline, training_set
from .interp import adaptive_interpolate, interpolate, leja_sequence, rleja_sequence
from .legendre import legendre_coeffs_quadrature
from .model import StiffnessSet
from .multiindex import box_set, build_apriori_set
from .taylor import PolydiscSurrogate, compute_taylor

__all__ = [
    "TaylorSurrogateEstimator",
    "SparseInterpolantEstimator",
    "LegendreProjectionEstimator",
    "ReducedBasisEstimator",
]


def _check_model(stiff) -> StiffnessSet:
    if not isinstance(stiff, StiffnessSet):
        raise MalformedInputError("fit expects an assembled StiffnessSet")
    return stiff


class _FieldPredictor(BaseEstimator):
    def _params(self, Y) -> np.ndarray:
        check_is_fitted(self, "model_")
        Y = check_array(Y, ensure_min_samples=1)
        if Y.shape[1] > self.model_.n_terms:
            raise MalformedInputError(f"at most {self.model_.n_terms} parameters per row")
        if np.any(np.abs(Y) > 1 + 1e-12):
            raise MalformedInputError("parameters must lie in [-1, 1]")
        return Y

    def predict(self, Y) -> np.ndarray:
        Y = self._params(Y)
        return np.asarray(self.approximant_.evaluate(Y)).T

    def error(self, Y, U=None) -> np.ndarray:
        """V-norm errors against the truth solutions (solved here when U is None)."""
        Y = self._params(Y)
        U = self.model_.solve_many(Y) if U is None else np.asarray(U).T
        return self.model_.v_norm(U - self.predict(Y).T)


class TaylorSurrogateEstimator(_FieldPredictor):
    """Taylor expansion at y = 0 on the a priori set of the n largest polydisc bounds."""

    def __init__(self, n: int = 50, t_fraction: float = 0.5, max_dim: int | None = None):
        self.n = n
        self.t_fraction = t_fraction
        self.max_dim = max_dim

    def fit(self, stiff, y=None):
        self.model_ = _check_model(stiff)
        surrogate = PolydiscSurrogate.for_model(stiff, t=stiff.r * self.t_fraction)
        self.index_set_ = build_apriori_set(surrogate, self.n, max_dim=self.max_dim)
        self.approximant_ = compute_taylor(stiff, self.index_set_)
        self.n_solves_ = len(self.index_set_)
        return self


class SparseInterpolantEstimator(_FieldPredictor):
    """Leja interpolation on an a priori set or by the alternating adaptive rule."""

    def __init__(self, n: int = 50, mode: str = "apriori", seq: str = "leja", p: str = "inf",
                 t_fraction: float = 0.5, alternate: bool = True):
        self.n = n
        self.mode = mode
        self.seq = seq
        self.p = p
        self.t_fraction = t_fraction
        self.alternate = alternate

    def fit(self, stiff, y=None):
        self.model_ = _check_model(stiff)
        seq = leja_sequence(self.n) if self.seq == "leja" else rleja_sequence(self.n)
        if self.mode == "apriori":
            lam = build_apriori_set(PolydiscSurrogate.for_model(stiff, t=stiff.r * self.t_fraction), self.n)
            self.approximant_ = interpolate(stiff, lam, seq)
        elif self.mode == "adaptive":
            run = adaptive_interpolate(stiff, self.n, seq, weight_p=self.p, alternate=self.alternate)
            self.approximant_ = run.final
        else:
            raise MalformedInputError(f"unknown mode {self.mode!r}")
        self.index_set_ = self.approximant_.index_set
        self.n_solves_ = self.approximant_.solves
        return self


class LegendreProjectionEstimator(_FieldPredictor):
    """Tensor-quadrature Legendre projection in the first ``dims`` parameters (others fixed at 0)."""

    def __init__(self, dims: int = 2, degree: int = 6, nodes: int | None = None):
        self.dims = dims
        self.degree = degree
        self.nodes = nodes

    def fit(self, stiff, y=None):
        self.model_ = _check_model(stiff)
        nodes = self.nodes or self.degree + 1
        self.index_set_ = box_set(self.dims, self.degree)
        self.approximant_ = legendre_coeffs_quadrature(stiff, self.index_set_, self.dims, nodes)
        self.n_solves_ = self.approximant_.solves
        return self


class ReducedBasisEstimator(_FieldPredictor):
    """Surrogate-driven greedy reduced basis; ``transform`` gives reduced coordinates."""

    def __init__(self, eps: float = 1e-4, train: str = "lds:1024", n_max: int | None = None,
                 covering_check: bool = True, seed: int = 0):
        self.eps = eps
        self.train = train
        self.n_max = n_max
        self.covering_check = covering_check
        self.seed = seed

    def fit(self, stiff, y=None):
        self.model_ = _check_model(stiff)
        train = training_set(self.train, stiff.n_terms, seed=self.seed)
        self.basis_ = rb_offline(stiff, train, self.eps, n_max=self.n_max, train_spec=self.train,
                                 check_covering=self.covering_check)
        self.n_solves_ = self.basis_.truth_solves
        return self

    def _full(self, Y) -> np.ndarray:
        out = np.zeros((Y.shape[0], self.model_.n_terms))
        out[:, :Y.shape[1]] = Y
        return out

    def transform(self, Y) -> np.ndarray:
        Y = self._params(Y)
        return self.basis_.coefficients(self._full(Y))

    def predict(self, Y) -> np.ndarray:
        return self.transform(Y) @ self.basis_.Q.T
