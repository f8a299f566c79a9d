"""Array validation for estimator inputs, built on scikit-learn's ``check_array``."""

import numpy as np
from sklearn.utils import check_array

DET_TOL = 1e-9


def check_square_stack(X, name="X"):
    """Validate a stack of square matrices; returns a float array of shape ``(k, d, d)``."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=float, input_name=name)
    if X.ndim == 2 and X.shape[0] == X.shape[1]:
        X = X[None]
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValueError(f"{name} must have shape (k, d, d), got {X.shape}")
    if X.shape[1] < 2:
        raise ValueError(f"{name} needs d >= 2")
    return X


def check_unimodular(X, name="X"):
    """Like :func:`check_square_stack`, and every matrix must have ``|det| = 1``."""
    X = check_square_stack(X, name)
    dets = np.abs(np.linalg.det(X))
    bad = np.flatnonzero(np.abs(dets - 1) > DET_TOL)
    if bad.size:
        raise ValueError(f"{name}[{bad[0]}] has |det| = {dets[bad[0]]!r}, expected 1")
    return X


def check_weights(w, k):
    """Probability weights of length ``k``; ``None`` means uniform."""
    if w is None:
        return np.full(k, 1.0 / k)
    w = check_array(np.asarray(w, dtype=float).reshape(1, -1), input_name="sample_weight").ravel()
    if w.size != k or np.any(w <= 0):
        raise ValueError("sample_weight must hold one positive weight per matrix")
    return w / w.sum()


def check_samples(X, name="X"):
    """One-dimensional finite sample."""
    X = check_array(np.asarray(X, dtype=float).reshape(-1, 1), input_name=name)
    return X.ravel()
