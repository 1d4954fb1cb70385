"""Replication-level performance metrics, classification accuracy and Cohen's kappa."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError, UndefinedKappaError

Z95 = 1.959963984540054


def _est(estimates) -> np.ndarray:
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 0 or est.shape[0] < 1:
        raise InvalidInputError("need at least one replication")
    return est


def bias(estimates, theta) -> np.ndarray:
    est = _est(estimates)
    return np.mean(est - theta, axis=0)


def relative_bias(estimates, theta) -> np.ndarray:
    """sum_s (est_s - theta) / (S theta); NaN where theta = 0."""
    est = _est(estimates)
    theta = np.asarray(theta, dtype=float)
    S = est.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sum(est - theta, axis=0) / (S * theta)
    return np.where(theta == 0, np.nan, out)


def empirical_se(estimates) -> np.ndarray:
    est = _est(estimates)
    if est.shape[0] < 2:
        return np.full(est.shape[1:], np.nan)
    return np.std(est, axis=0, ddof=1)


def relative_rmse(estimates, theta) -> np.ndarray:
    est = _est(estimates)
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.sqrt(np.mean((est - theta) ** 2, axis=0)) / theta
    return np.where(theta == 0, np.nan, out)


def coverage(ci_low, ci_high, theta) -> np.ndarray:
    """Share of replications whose interval contains theta; NaN intervals are skipped."""
    lo = np.asarray(ci_low, dtype=float)
    hi = np.asarray(ci_high, dtype=float)
    ok = np.isfinite(lo) & np.isfinite(hi)
    hit = (lo <= theta) & (theta <= hi) & ok
    n = ok.sum(axis=0)
    with np.errstate(invalid="ignore"):
        return np.where(n > 0, hit.sum(axis=0) / np.maximum(n, 1), np.nan)


def mcse_bias(estimates) -> np.ndarray:
    """Monte Carlo SE of the bias, sqrt(Var(est) / S)."""
    est = _est(estimates)
    return empirical_se(est) / np.sqrt(est.shape[0])


def accuracy(predicted, truth) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.size == 0:
        raise InvalidInputError("label vectors must be non-empty and of equal length")
    return float(np.mean(predicted == truth))


def cohen_kappa(labels_a, labels_b) -> tuple:
    """Cohen's kappa with a 95% CI from the large-sample variance of Fleiss, Cohen and Everitt.

    Returns ``(kappa, (low, high), se)``.
    """
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("label vectors must be 1-D and of equal length")
    n = a.size
    if n < 2:
        raise InvalidInputError("kappa needs at least two rated units")
    cats, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
    ia, ib = inv[:n], inv[n:]
    c = cats.size
    P = np.zeros((c, c))
    np.add.at(P, (ia, ib), 1.0)
    P /= n
    row, col = P.sum(axis=1), P.sum(axis=0)
    po = np.trace(P)
    pe = float(row @ col)
    if np.isclose(pe, 1.0):
        raise UndefinedKappaError("kappa is undefined when both raters use a single category")
    kappa = (po - pe) / (1 - pe)

    diag = np.diag(P)
    term1 = np.sum(diag * ((1 - pe) - (row + col) * (1 - po)) ** 2)
    off = P.copy()
    np.fill_diagonal(off, 0.0)
    term2 = (1 - po) ** 2 * np.sum(off * (col[:, None] + row[None, :]) ** 2)
    term3 = (po * pe - 2 * pe + po) ** 2
    var = (term1 + term2 - term3) / (n * (1 - pe) ** 4)
    se = float(np.sqrt(max(var, 0.0)))
    return float(kappa), (float(kappa - Z95 * se), float(kappa + Z95 * se)), se
