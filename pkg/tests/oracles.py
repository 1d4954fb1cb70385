"""Independent reference computations used by the tests.

Nothing here calls the package's density code: moments are assembled on the
original (intercept, slope1, slope2) scale with the unreparameterized
piecewise loadings, and the Gaussian log-density uses a hand-written
Cholesky over Python scalars.
"""
import math

import numpy as np

from pblsgmm.mixture import GatingParameters, Individual, MixtureModel
from pblsgmm.spline import ClassParameters, Schedule


def piecewise_loading(t, knot):
    """Original-scale loading: y(t) = eta0 + eta1 min(t, g) + eta2 max(t - g, 0)."""
    return (1.0, min(t, knot), max(t - knot, 0.0))


def scalar_cholesky_logpdf(x, mu, S):
    n = len(x)
    L = [[0.0] * n for _ in range(n)]
    for j in range(n):
        s = S[j][j] - sum(L[j][k] ** 2 for k in range(j))
        if s <= 0:
            raise ArithmeticError("not PD")
        L[j][j] = math.sqrt(s)
        for i in range(j + 1, n):
            L[i][j] = (S[i][j] - sum(L[i][k] * L[j][k] for k in range(j))) / L[j][j]
    z = []
    for i in range(n):
        z.append((x[i] - mu[i] - sum(L[i][k] * z[k] for k in range(i))) / L[i][i])
    logdet = 2.0 * sum(math.log(L[i][i]) for i in range(n))
    return -0.5 * (n * math.log(2 * math.pi) + logdet + sum(v * v for v in z))


def brute_class_logdens(ind, params):
    """Scalar-loop density of the observed entries (y-block then z-block order)."""
    mean0 = params.original_mean()
    cov0 = params.original_cov()
    R = params.resid
    entries = []  # (outcome, time index)
    m = params.n_outcomes
    for u in range(m):
        for j, t in enumerate(ind.times):
            if ind.mask[j, u]:
                entries.append((u, j))
    mu, S, x = [], [], []
    for (u, j) in entries:
        lam = piecewise_loading(ind.times[j], params.knots[u])
        mu.append(sum(lam[a] * mean0[u][a] for a in range(3)))
        x.append(float(ind.values[j, u]))
        row = []
        for (w, k) in entries:
            lw = piecewise_loading(ind.times[k], params.knots[w])
            v = 0.0
            for a in range(3):
                for b in range(3):
                    v += lam[a] * cov0[3 * u + a][3 * w + b] * lw[b]
            if j == k:
                v += R[u][w]
            row.append(v)
        S.append(row)
    return scalar_cholesky_logpdf(x, mu, S)


def brute_gating(x, coef):
    etas = [0.0] + [coef[k][0] + sum(coef[k][1 + j] * x[j] for j in range(len(x))) for k in range(len(coef))]
    mx = max(etas)
    w = [math.exp(e - mx) for e in etas]
    s = sum(w)
    return [v / s for v in w]


def brute_total_loglik(model, data):
    total = 0.0
    for ind in data:
        pis = brute_gating(list(ind.x), model.gating.coef.tolist())
        terms = [math.log(pis[k]) + brute_class_logdens(ind, c) for k, c in enumerate(model.classes)]
        mx = max(terms)
        total += mx + math.log(sum(math.exp(t - mx) for t in terms))
    return total


def random_spd(rng, q, scale=1.0):
    A = rng.normal(size=(q, q))
    return scale * (A @ A.T / q + 0.5 * np.eye(q))


def random_class(rng, m, time_range=(0.0, 3.0)):
    mean = rng.normal(0, 2, size=(m, 3))
    knots = rng.uniform(*time_range, size=m)
    cov = random_spd(rng, 3 * m)
    R = random_spd(rng, m, 0.5)
    return ClassParameters(mean, knots, cov, R)


def random_instance(rng, n_max=5, J_max=3, K_max=2, m=None, p_max=2):
    """Random small mixture plus data, with random missingness (never a fully empty person)."""
    m = m or int(rng.integers(1, 3))
    K = int(rng.integers(1, K_max + 1))
    p = int(rng.integers(0, p_max + 1))
    n = int(rng.integers(1, n_max + 1))
    classes = tuple(random_class(rng, m) for _ in range(K))
    gating = GatingParameters(rng.normal(size=(K - 1, p + 1)))
    model = MixtureModel(classes, gating, ("y", "z")[:m])
    data = []
    for i in range(n):
        J = int(rng.integers(1, J_max + 1))
        times = np.sort(rng.uniform(0, 3, J))
        while np.any(np.diff(times) <= 0):
            times = np.sort(rng.uniform(0, 3, J))
        mask = rng.random((J, m)) < 0.8
        if not mask.any():
            mask[rng.integers(J), rng.integers(m)] = True
        vals = np.where(mask, rng.normal(0, 5, (J, m)), np.nan)
        data.append(Individual(i + 1, Schedule(times, mask), vals, rng.normal(size=p)))
    return model, data
