"""Compiled per-individual loops for the information-form log-density."""
import numpy as np
from numba import njit

LOG_2PI = np.log(2.0 * np.pi)


@njit(cache=True)
def _chol_inplace(M, q):
    """Lower Cholesky factor of M[:q, :q] in place; returns False if not PD."""
    for j in range(q):
        s = M[j, j]
        for k in range(j):
            s -= M[j, k] * M[j, k]
        if not s > 0.0:
            return False
        d = np.sqrt(s)
        M[j, j] = d
        for i in range(j + 1, q):
            s = M[i, j]
            for k in range(j):
                s -= M[i, k] * M[j, k]
            M[i, j] = s / d
    return True


@njit(cache=True, fastmath=True)
def info_form_logdens(times, values, codes, n_obs, mean, knots, Psi_inv, logdet_psi, Wpat, logdet_pat, out):
    """Fill ``out[i]`` with the class log-density of individual i.

    With residual precision W (block diagonal over occasions) and loadings
    G, the implied covariance is S = G Psi G^T + R, so

        log|S| = log|R| + log|Psi| + log|Psi^-1 + G^T W G|
        r^T S^-1 r = r^T W r - b^T (Psi^-1 + G^T W G)^-1 b,   b = G^T W r.

    ``codes[i, j]`` indexes the observed-outcome pattern of occasion j (0 =
    nothing observed); ``Wpat[code]`` is the zero-padded inverse of the
    observed residual block and ``logdet_pat[code]`` its log-determinant.
    Returns -1 on success or the index of the first individual whose inner
    matrix is not positive definite.
    """
    n, J = times.shape
    m = knots.shape[0]
    q = 3 * m
    lam = np.empty((m, 3))
    r = np.empty(m)
    Wr = np.empty(m)
    M = np.empty((q, q))
    b = np.empty(q)
    for i in range(n):
        for a in range(q):
            b[a] = 0.0
            for bb in range(a + 1):
                M[a, bb] = Psi_inv[a, bb]
        c = 0.0
        logdet = logdet_psi
        for j in range(J):
            code = codes[i, j]
            if code == 0:
                continue
            logdet += logdet_pat[code]
            t = times[i, j]
            for u in range(m):
                d = t - knots[u]
                ad = abs(d)
                lam[u, 0] = 1.0
                lam[u, 1] = d
                lam[u, 2] = ad
                if (code >> u) & 1:
                    r[u] = values[i, j, u] - (mean[u, 0] + mean[u, 1] * d + mean[u, 2] * ad)
                else:
                    r[u] = 0.0
            for u in range(m):
                s = 0.0
                for w in range(m):
                    s += Wpat[code, u, w] * r[w]
                Wr[u] = s
                c += r[u] * s
            for u in range(m):
                for a in range(3):
                    b[3 * u + a] += lam[u, a] * Wr[u]
                for w in range(u + 1):
                    wuv = Wpat[code, u, w]
                    if wuv == 0.0:
                        continue
                    for a in range(3):
                        la = wuv * lam[u, a]
                        top = 3 if w < u else a + 1
                        for bb in range(top):
                            M[3 * u + a, 3 * w + bb] += la * lam[w, bb]
        if not _chol_inplace(M, q):
            return i
        quad = c
        for a in range(q):
            s = b[a]
            for k in range(a):
                s -= M[a, k] * b[k]
            b[a] = s / M[a, a]
            quad -= b[a] * b[a]
            logdet += 2.0 * np.log(M[a, a])
        out[i] = -0.5 * (n_obs[i] * LOG_2PI + logdet + quad)
    return -1
