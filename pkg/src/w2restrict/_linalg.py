"""Symmetric matrix functions via eigendecomposition."""

import numpy as np


def sym_sqrt(a):
    """Principal square root of a symmetric PSD matrix (negative eigenvalues clamped to 0)."""
    a = 0.5 * (a + a.T)
    lam, v = np.linalg.eigh(a)
    out = (v * np.sqrt(np.maximum(lam, 0.0))) @ v.T
    return 0.5 * (out + out.T)


def sym_inv_sqrt(a):
    """Inverse square root of a symmetric positive-definite matrix."""
    a = 0.5 * (a + a.T)
    lam, v = np.linalg.eigh(a)
    if lam[0] <= 0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    out = (v / np.sqrt(lam)) @ v.T
    return 0.5 * (out + out.T)


def eig_clamp(a, eps):
    """Symmetrise ``a`` and raise its eigenvalues to at least ``eps``."""
    a = 0.5 * (a + a.T)
    lam, v = np.linalg.eigh(a)
    if lam[0] >= eps:
        return a, False
    return (v * np.maximum(lam, eps)) @ v.T, True
