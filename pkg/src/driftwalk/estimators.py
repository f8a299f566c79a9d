"""scikit-learn style wrappers.

``LyapunovSpectrum`` and ``BenoistQuintDrift`` learn from a finitely
supported measure given as a stack of matrices (``X``) with optional
``sample_weight``.  ``DominanceCertifier`` learns an empirical increment law
and tests it against a reference law.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .bq import MatrixMeasure, QuasiNormParams, f_A_batch, lyapunov_spectrum, variation_constant
from .chain import dkw_epsilon
from .dist import FiniteDist, dominance_gap, empirical_distribution
from .validation import check_samples, check_unimodular, check_weights


def _measure(X, sample_weight):
    X = check_unimodular(X)
    w = check_weights(sample_weight, X.shape[0])
    return MatrixMeasure(X, w)


class LyapunovSpectrum(BaseEstimator):
    """Estimate ``lambda^(i)``, the top exponent on the ``i``-th exterior power, for ``i = 1..d-1``.

    Parameters
    ----------
    steps, trials, burn_in : int
        Walk length, number of independent frames and discarded steps.
    seed : int

    Attributes
    ----------
    exponents_ : ndarray, shape (d - 1,)
    ci_ : ndarray, shape (d - 1,)
        Three-sigma half-widths across trials.
    """

    def __init__(self, steps=20_000, trials=20, burn_in=50, seed=0):
        self.steps = steps
        self.trials = trials
        self.burn_in = burn_in
        self.seed = seed

    def fit(self, X, y=None, sample_weight=None):
        mu = _measure(X, sample_weight)
        spec = lyapunov_spectrum(mu, self.steps, self.trials, self.seed, self.burn_in)
        self.exponents_ = np.array([v for v, _ in spec])
        self.ci_ = np.array([c for _, c in spec])
        self.n_features_in_ = mu.d
        return self


class BenoistQuintDrift(TransformerMixin, BaseEstimator):
    """``f_A`` for the walk driven by the fitted measure.

    ``fit`` takes the measure's matrices and estimates the exponents unless
    ``exponents`` is given.  ``transform`` maps bases of shape ``(m, d, d)``
    (columns are basis vectors) to ``f_A`` values of shape ``(m, 1)``.

    Attributes
    ----------
    params_ : QuasiNormParams
    variation_constant_ : float
    """

    def __init__(self, A=1.0, exponents=None, steps=20_000, trials=20, seed=0, cap=10**6):
        self.A = A
        self.exponents = exponents
        self.steps = steps
        self.trials = trials
        self.seed = seed
        self.cap = cap

    def fit(self, X, y=None, sample_weight=None):
        mu = _measure(X, sample_weight)
        if self.exponents is None:
            spec = lyapunov_spectrum(mu, self.steps, self.trials, self.seed)
            ex = tuple(v for v, _ in spec)
        else:
            ex = tuple(float(v) for v in self.exponents)
        self.params_ = QuasiNormParams(mu.d, float(self.A), ex)
        self.variation_constant_ = variation_constant(self.params_)
        self.n_features_in_ = mu.d
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        X = check_unimodular(X)
        if X.shape[1] != self.params_.d:
            raise ValueError(f"expected bases of dimension {self.params_.d}, got {X.shape[1]}")
        return f_A_batch(X, self.params_, self.cap).reshape(-1, 1)


class DominanceCertifier(BaseEstimator):
    """Test whether ``reference`` dominates the law of the observed increments.

    Passes when the empirical tail never exceeds the reference tail by more
    than the Dvoretzky-Kiefer-Wolfowitz half-width at ``confidence``.

    Attributes
    ----------
    law_ : FiniteDist
    gap_, at_, band_ : float
    certified_ : bool
    """

    def __init__(self, reference=None, confidence=0.99):
        self.reference = reference
        self.confidence = confidence

    def fit(self, X, y=None):
        if not isinstance(self.reference, FiniteDist):
            raise ValueError("reference must be a FiniteDist")
        x = check_samples(X)
        self.law_ = empirical_distribution(x)
        self.gap_, self.at_ = dominance_gap(self.reference, self.law_)
        self.band_ = dkw_epsilon(x.size, self.confidence)
        self.certified_ = bool(self.gap_ <= self.band_)
        return self
