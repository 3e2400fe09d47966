"""Reference per-segment kernels in NumPy/SciPy.

Used when the compiled extension is unavailable, and as the yardstick the
extension is tested against. Every function takes C-contiguous float64
arrays: counts ``n`` (S, Nc), projected stats ``a`` (S, R), Grams (Nc, R, R),
precision ``W`` (R, R) and language means (L, R).
"""

import numpy as np
from scipy import linalg

from .errors import NotPositiveDefinite


def _factor(P, s):
    try:
        return linalg.cho_factor(P, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise NotPositiveDefinite(f"segment {s}: posterior precision is not positive definite") from None


def posteriors(n, a, grams, W, means):
    S, R = a.shape
    L = means.shape[0]
    Wm = means @ W
    eye = np.eye(R)
    cov = np.empty((S, R, R))
    mu = np.empty((S, L, R))
    for s in range(S):
        cf = _factor(W + np.tensordot(n[s], grams, axes=1), s)
        C = linalg.cho_solve(cf, eye, check_finite=False)
        cov[s] = 0.5 * (C + C.T)
        mu[s] = linalg.cho_solve(cf, (Wm + a[s]).T, check_finite=False).T
    return cov, mu


def ld_scores(n, a, grams, W, means):
    # sigma_l = (W m_l)' (W + B)^-1 (a - B m_l / 2)
    S = a.shape[0]
    Wm = means @ W
    out = np.empty((S, means.shape[0]))
    for s in range(S):
        B = np.tensordot(n[s], grams, axes=1)
        cf = _factor(W + B, s)
        rhs = a[s] - 0.5 * means @ B
        y = linalg.cho_solve(cf, rhs.T, check_finite=False)
        out[s] = np.einsum("lr,rl->l", Wm, y)
    return out


def cpf_scores(n, a, grams, W, means):
    # sigma~_l = (W m_l)' (W + E)^-1 (a - E m_l / 2),  E = I + B
    S, R = a.shape
    Wm = means @ W
    out = np.empty((S, means.shape[0]))
    eye = np.eye(R)
    for s in range(S):
        E = eye + np.tensordot(n[s], grams, axes=1)
        cf = _factor(W + E, s)
        rhs = a[s] - 0.5 * means @ E
        y = linalg.cho_solve(cf, rhs.T, check_finite=False)
        out[s] = np.einsum("lr,rl->l", Wm, y)
    return out


def classical_ivectors(n, a, grams):
    S, R = a.shape
    eye = np.eye(R)
    out = np.empty((S, R))
    for s in range(S):
        cf = _factor(eye + np.tensordot(n[s], grams, axes=1), s)
        out[s] = linalg.cho_solve(cf, a[s], check_finite=False)
    return out
