"""Heuristic starting values.

Per-individual bilinear least squares (knot grid-searched over the person's
interior occasions), k-means on the standardized coefficients, then
within-group moments. Restarts reuse the same recipe with a different
clustering seed and jittered means.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError
from ..mixture import GatingParameters, MixtureModel, Panel
from ..spline import ClassParameters, factor_loadings

MIN_CLUSTER = 6


def knot_box(panel: Panel, margin: float = 0.5) -> tuple:
    """Admissible knot interval: half a wave spacing inside the observed window."""
    observed = panel.mask.any(axis=2)
    t = panel.times[observed]
    tmin, tmax = float(t.min()), float(t.max())
    spacing = (tmax - tmin) / max(panel.J - 1, 1)
    lo, hi = tmin + margin * spacing, tmax - margin * spacing
    if not hi > lo:
        lo, hi = tmin, tmax
    return lo, hi


def _lstsq(t, y, knot):
    X = factor_loadings(t, knot)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(resid @ resid), X


def _individual_fits(panel: Panel):
    """(n, m, 4) original-scale (intercept, slope1, slope2, knot); NaN when too few points."""
    out = np.full((panel.n, panel.m, 4), np.nan)
    for i in range(panel.n):
        for u in range(panel.m):
            obs = panel.mask[i, :, u]
            if obs.sum() < 5:
                continue
            t, y = panel.times[i, obs], panel.values[i, obs, u]
            best = None
            for knot in t[1:-1]:
                coef, rss, _ = _lstsq(t, y, knot)
                if best is None or rss < best[1]:
                    best = (coef, rss, knot)
            coef, _, knot = best
            slope1 = coef[1] - coef[2]
            out[i, u] = [coef[0] - knot * slope1, slope1, coef[1] + coef[2], knot]
    return out


def _kmeans(X, K, rng, n_iter=100):
    """Lloyd's algorithm with k-means++ seeding."""
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, K):
        d2 = np.min([np.sum((X - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
    centers = np.array(centers)
    labels = np.zeros(n, dtype=int)
    for it in range(n_iter):
        d = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        new = d.argmin(axis=1)
        if it > 0 and np.array_equal(new, labels):
            break
        labels = new
        for k in range(K):
            if np.any(labels == k):
                centers[k] = X[labels == k].mean(axis=0)
    return labels


def _quantile_split(panel: Panel, K: int) -> np.ndarray:
    level = np.array([panel.values[i][panel.mask[i]].mean() for i in range(panel.n)])
    ranks = np.argsort(np.argsort(level, kind="stable"), kind="stable")
    return (ranks * K) // panel.n


def _pooled_knot(panel: Panel, members, u, lo, hi):
    t_all, y_all = [], []
    for i in members:
        obs = panel.mask[i, :, u]
        t_all.append(panel.times[i, obs])
        y_all.append(panel.values[i, obs, u])
    t, y = np.concatenate(t_all), np.concatenate(y_all)
    grid = np.linspace(lo, hi, max(int(round((hi - lo) / 0.05)) + 1, 2))
    rss = [_lstsq(t, y, g)[1] for g in grid]
    return float(grid[int(np.argmin(rss))])


def _nearest_pd(S, floor):
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    return (V * np.maximum(w, floor)) @ V.T


def _class_from_members(panel: Panel, members, lo, hi) -> ClassParameters:
    m = panel.m
    knots = np.array([_pooled_knot(panel, members, u, lo, hi) for u in range(m)])
    coefs, noise, resid_pairs = [], [], []
    rss_sum, dof_sum = np.zeros(m), np.zeros(m)
    for i in members:
        row, ok, rcol = [], True, []
        for u in range(m):
            obs = panel.mask[i, :, u]
            if obs.sum() < 4:
                ok = False
                break
            t, y = panel.times[i, obs], panel.values[i, obs, u]
            coef, rss, X = _lstsq(t, y, knots[u])
            row.append(coef)
            rss_sum[u] += rss
            dof_sum[u] += obs.sum() - 3
            full = np.full(panel.J, np.nan)
            full[obs] = y - X @ coef
            rcol.append(full)
        if ok:
            coefs.append(np.concatenate(row))
            resid_pairs.append(np.column_stack(rcol))
    coefs = np.array(coefs)
    var = np.where(dof_sum > 0, rss_sum / np.maximum(dof_sum, 1), 1.0)
    var = np.maximum(var, 1e-3)
    resid = np.diag(var)
    if m == 2 and resid_pairs:
        R = np.concatenate(resid_pairs)
        both = np.all(np.isfinite(R), axis=1)
        if both.sum() > 3:
            corr = np.clip(np.corrcoef(R[both].T)[0, 1], -0.9, 0.9)
            resid[0, 1] = resid[1, 0] = corr * np.sqrt(var[0] * var[1])
    q = 3 * m
    if len(coefs) > q:
        cov = np.cov(coefs.T)
    else:
        cov = np.eye(q)
    floor = 1e-2 * max(np.min(np.diag(cov)), 1e-2)
    cov = _nearest_pd(0.8 * cov, floor)
    mean = coefs.mean(axis=0).reshape(m, 3) if len(coefs) else np.zeros((m, 3))
    return ClassParameters(mean, knots, cov, resid)


def starting_values(data, K: int, seed=0, restart: int = 0, knot_bounds=None, outcomes=None) -> MixtureModel:
    """Starting mixture for ``fit``; ``restart`` > 0 reshuffles and jitters deterministically."""
    panel = data if isinstance(data, Panel) else Panel(data)
    lo, hi = knot_bounds if knot_bounds is not None else knot_box(panel)
    outcomes = tuple(outcomes) if outcomes is not None else ("y", "z")[:panel.m]
    if panel.n < 10 * K:
        raise InvalidInputError(f"need at least {10 * K} individuals for K={K}, got {panel.n}")
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, int(restart)])

    if K == 1:
        labels = np.zeros(panel.n, dtype=int)
    else:
        feats = _individual_fits(panel).reshape(panel.n, -1)
        med = np.nanmedian(feats, axis=0)
        feats = np.where(np.isfinite(feats), feats, med)
        sd = feats.std(axis=0)
        X = (feats - feats.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        labels = _kmeans(X, K, rng)
        counts = np.bincount(labels, minlength=K)
        if counts.min() < MIN_CLUSTER:
            labels = _quantile_split(panel, K)

    classes = [_class_from_members(panel, np.flatnonzero(labels == k), lo, hi) for k in range(K)]
    if restart > 0:
        jittered = []
        for c in classes:
            sd = np.sqrt(np.diag(c.cov)).reshape(c.mean.shape)
            jittered.append(ClassParameters(c.mean + rng.normal(0.0, 0.25 * sd), c.knots, c.cov, c.resid))
        classes = jittered

    counts = np.bincount(labels, minlength=K).astype(float)
    coef = np.zeros((K - 1, panel.p + 1))
    coef[:, 0] = np.log(counts[1:] / counts[0])
    model = MixtureModel(tuple(classes), GatingParameters(coef), outcomes)
    return model.relabeled()
