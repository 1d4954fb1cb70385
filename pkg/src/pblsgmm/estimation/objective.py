"""Negative log-likelihood over the unconstrained vector with block-cached evaluation.

A perturbation of one class block only changes that class's density column,
so per-class log-density arrays are memoized by the bytes of their block.
Central-difference gradients and Hessians then cost one class evaluation per
perturbed coordinate instead of K.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import NumericalFailure
from ..mixture import Panel, gating_logits, panel_log_densities
from .params import ParameterLayout


def _lse_rows(a: np.ndarray) -> np.ndarray:
    mx = a.max(axis=1)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


class Objective:
    def __init__(self, panel: Panel, layout: ParameterLayout, cache_size: int = 4096):
        self.panel = panel
        self.layout = layout
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self.n_class_evals = 0

    def class_logdens(self, k: int, ub: np.ndarray) -> np.ndarray:
        key = (k, ub.tobytes())
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        self.n_class_evals += 1
        try:
            ld = panel_log_densities(self.panel, self.layout.decode_class(ub), k + 1)
        except (NumericalFailure, ValueError, FloatingPointError):
            ld = np.full(self.panel.n, -np.inf)
        self._cache[key] = ld
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return ld

    def terms(self, u: np.ndarray) -> np.ndarray:
        """(n, K) log prior + log density."""
        lay = self.layout
        ld = np.column_stack([self.class_logdens(k, u[lay.class_slice(k)]) for k in range(lay.K)])
        eta = gating_logits(self.panel.x, lay.decode_gating(u))
        logpi = eta - _lse_rows(eta)[:, None]
        return logpi + ld

    def loglik(self, u: np.ndarray) -> float:
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            val = float(np.sum(_lse_rows(self.terms(u))))
        return val if np.isfinite(val) else -np.inf

    def __call__(self, u: np.ndarray) -> float:
        """Mean negative log-likelihood per individual (+inf on failure)."""
        return -self.loglik(u) / self.panel.n

    def steps(self, u: np.ndarray, rel: float) -> np.ndarray:
        return rel * np.maximum(1.0, np.abs(u))

    def gradient(self, u: np.ndarray, rel: float = 1e-5, with_curvature: bool = False):
        """Central-difference gradient of ``__call__``; optionally the diagonal curvature too."""
        h = self.steps(u, rel)
        f0 = self(u) if with_curvature else None
        g = np.empty_like(u)
        curv = np.empty_like(u)
        for i in range(u.size):
            up, dn = u.copy(), u.copy()
            up[i] += h[i]
            dn[i] -= h[i]
            fp, fm = self(up), self(dn)
            g[i] = (fp - fm) / (2 * h[i])
            if with_curvature:
                curv[i] = (fp - 2 * f0 + fm) / h[i] ** 2
        if with_curvature:
            return g, curv
        return g

    def hessian(self, u: np.ndarray, rel: float = 1e-4) -> np.ndarray:
        """Central-difference Hessian of the total negative log-likelihood."""
        n = u.size
        h = self.steps(u, rel)
        f = lambda v: -self.loglik(v)  # noqa: E731
        f0 = f(u)
        H = np.empty((n, n))
        for i in range(n):
            e_i = np.zeros(n)
            e_i[i] = h[i]
            H[i, i] = (f(u + 2 * e_i) - 2 * f0 + f(u - 2 * e_i)) / (4 * h[i] ** 2)
            for j in range(i):
                e_j = np.zeros(n)
                e_j[j] = h[j]
                val = (
                    f(u + e_i + e_j) - f(u + e_i - e_j) - f(u - e_i + e_j) + f(u - e_i - e_j)
                ) / (4 * h[i] * h[j])
                H[i, j] = H[j, i] = val
        return H
