"""Mixture likelihood: gating, per-class Gaussian densities, posteriors.

Two evaluation routes exist for the within-class density:

* :func:`class_log_density` assembles the dense implied moments for one
  individual and factors them directly.
* :func:`panel_log_densities` evaluates every individual at once in
  information form (Woodbury identity on the 3m x 3m growth-factor block),
  which is what the estimator calls thousands of times.

Tests check the two against each other.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ._kernels import info_form_logdens
from .errors import InvalidInputError, NumericalFailure
from .spline import ClassParameters, Schedule, implied_moments

LOG_2PI = np.log(2.0 * np.pi)

__all__ = [
    "Individual",
    "GatingParameters",
    "MixtureModel",
    "Panel",
    "gating_logits",
    "gating_probabilities",
    "class_log_density",
    "panel_log_densities",
    "log_density_matrix",
    "total_log_likelihood",
    "posterior_probabilities",
    "posterior_matrix",
    "classify",
    "classify_all",
]


@dataclass(frozen=True)
class Individual:
    """One subject: occasions, outcomes (J, m) with NaN where missing, covariates."""

    id: object
    schedule: Schedule
    values: np.ndarray
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        if values.shape != self.schedule.mask.shape:
            raise InvalidInputError(
                f"individual {self.id}: values shape {values.shape} != mask shape {self.schedule.mask.shape}"
            )
        if not np.all(np.isfinite(values[self.schedule.mask])):
            raise InvalidInputError(f"individual {self.id}: observed outcomes must be finite")
        if not np.all(np.isfinite(x)):
            raise InvalidInputError(f"individual {self.id}: covariates must be finite")
        values = np.where(self.schedule.mask, values, np.nan)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "x", x)

    @classmethod
    def from_arrays(cls, id, times, y, z=None, x=()):
        """Convenience constructor; NaN marks a missing outcome."""
        cols = [np.asarray(y, dtype=float)]
        if z is not None:
            cols.append(np.asarray(z, dtype=float))
        values = np.column_stack(cols)
        return cls(id, Schedule(times, np.isfinite(values)), values, np.asarray(x, dtype=float))

    @property
    def times(self) -> np.ndarray:
        return self.schedule.times

    @property
    def mask(self) -> np.ndarray:
        return self.schedule.mask

    @property
    def y(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def z(self) -> np.ndarray:
        return self.values[:, 1]

    def select(self, columns: Sequence[int]) -> "Individual":
        """Project onto a subset of outcome columns (e.g. ``[0]`` for y only)."""
        columns = list(columns)
        mask = self.mask[:, columns]
        return Individual(self.id, Schedule(self.times, mask), self.values[:, columns], self.x)


@dataclass(frozen=True)
class GatingParameters:
    """Multinomial-logit coefficients, one row ``(intercept, beta...)`` per class k >= 2."""

    coef: np.ndarray

    def __post_init__(self):
        coef = np.asarray(self.coef, dtype=float)
        if coef.ndim != 2 or coef.shape[1] < 1:
            raise InvalidInputError("gating coef must be a (K-1, p+1) matrix")
        if not np.all(np.isfinite(coef)):
            raise InvalidInputError("gating coefficients must be finite")
        object.__setattr__(self, "coef", coef)

    @classmethod
    def zeros(cls, K: int, p: int) -> "GatingParameters":
        return cls(np.zeros((K - 1, p + 1)))

    @property
    def n_classes(self) -> int:
        return self.coef.shape[0] + 1

    @property
    def n_covariates(self) -> int:
        return self.coef.shape[1] - 1

    @property
    def intercepts(self) -> np.ndarray:
        return self.coef[:, 0]

    @property
    def slopes(self) -> np.ndarray:
        return self.coef[:, 1:]

    def full(self) -> np.ndarray:
        """(K, p+1) coefficient matrix including the reference row of zeros."""
        return np.vstack([np.zeros((1, self.coef.shape[1])), self.coef])

    def permuted(self, order) -> "GatingParameters":
        """Coefficients after reordering classes; ``order[new] = old``."""
        full = self.full()[list(order)]
        return GatingParameters((full - full[0])[1:])


@dataclass(frozen=True)
class MixtureModel:
    classes: tuple
    gating: GatingParameters
    outcomes: tuple = ("y", "z")

    def __post_init__(self):
        classes = tuple(self.classes)
        if len(classes) < 1:
            raise InvalidInputError("a mixture needs at least one class")
        if self.gating.n_classes != len(classes):
            raise InvalidInputError("gating rows do not match the number of classes")
        m = classes[0].n_outcomes
        if any(c.n_outcomes != m for c in classes) or len(self.outcomes) != m:
            raise InvalidInputError("all classes must model the same outcomes")
        object.__setattr__(self, "classes", classes)
        object.__setattr__(self, "outcomes", tuple(self.outcomes))

    @property
    def K(self) -> int:
        return len(self.classes)

    @property
    def n_outcomes(self) -> int:
        return self.classes[0].n_outcomes

    @property
    def n_covariates(self) -> int:
        return self.gating.n_covariates

    def knot_order(self) -> np.ndarray:
        """Class indices sorted by ascending first-outcome knot (stable)."""
        return np.argsort([c.knots[0] for c in self.classes], kind="stable")

    def permuted(self, order) -> "MixtureModel":
        order = list(order)
        return MixtureModel(
            tuple(self.classes[i] for i in order), self.gating.permuted(order), self.outcomes
        )

    def relabeled(self) -> "MixtureModel":
        """Same mixture with classes ordered by ascending first-outcome knot."""
        return self.permuted(self.knot_order())


class Panel:
    """Individuals packed into padded arrays for vectorized evaluation."""

    def __init__(self, individuals: Sequence[Individual]):
        individuals = list(individuals)
        if not individuals:
            raise InvalidInputError("no individuals")
        m = individuals[0].mask.shape[1]
        p = individuals[0].x.size
        J = max(ind.times.size for ind in individuals)
        n = len(individuals)
        self.individuals = individuals
        self.ids = [ind.id for ind in individuals]
        self.times = np.zeros((n, J))
        self.values = np.zeros((n, J, m))
        self.mask = np.zeros((n, J, m), dtype=bool)
        self.x = np.zeros((n, p))
        for i, ind in enumerate(individuals):
            if ind.mask.shape[1] != m or ind.x.size != p:
                raise InvalidInputError(f"individual {ind.id} has inconsistent dimensions")
            if not ind.mask.any():
                raise InvalidInputError(f"individual {ind.id} has no observed outcomes")
            Ji = ind.times.size
            self.times[i, :Ji] = ind.times
            self.mask[i, :Ji] = ind.mask
            self.values[i, :Ji] = np.where(ind.mask, ind.values, 0.0)
            self.x[i] = ind.x
        self.n, self.J, self.m, self.p = n, J, m, p
        self.n_observed = self.mask.sum(axis=(1, 2)).astype(float)
        self.codes = self.mask.astype(np.int64) @ (1 << np.arange(m, dtype=np.int64))

    def __len__(self):
        return self.n

    def residual_precision(self, resid: np.ndarray, class_index=None):
        """Inverse and log-determinant of the observed residual block, per mask pattern.

        Returns ``(W, logdet)`` indexed by pattern code ``sum_u mask_u << u``;
        code 0 (nothing observed) maps to zeros.
        """
        m = self.m
        W = np.zeros((1 << m, m, m))
        logdet = np.zeros(1 << m)
        for code in range(1, 1 << m):
            sel = np.array([(code >> u) & 1 for u in range(m)], dtype=bool)
            sub = resid[np.ix_(sel, sel)]
            try:
                c = np.linalg.cholesky(sub)
            except np.linalg.LinAlgError:
                raise NumericalFailure("residual covariance is not positive definite", class_index) from None
            W[code][np.ix_(sel, sel)] = np.linalg.inv(sub)
            logdet[code] = 2.0 * np.sum(np.log(np.diag(c)))
        return W, logdet


def gating_logits(x, gating: GatingParameters) -> np.ndarray:
    """Linear predictors with a leading zero column for the reference class."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != gating.n_covariates:
        raise InvalidInputError(
            f"expected {gating.n_covariates} covariate(s), got {x.shape[1]}"
        )
    design = np.column_stack([np.ones(x.shape[0]), x])
    eta = np.column_stack([np.zeros(x.shape[0]), design @ gating.coef.T])
    return eta[0] if single else eta


def gating_probabilities(x, gating: GatingParameters, K: int | None = None) -> np.ndarray:
    if K is not None and K != gating.n_classes:
        raise InvalidInputError(f"K={K} but gating has {gating.n_classes} classes")
    eta = gating_logits(x, gating)
    eta = eta - eta.max(axis=-1, keepdims=True)
    w = np.exp(eta)
    return w / w.sum(axis=-1, keepdims=True)


def class_log_density(ind: Individual, params: ClassParameters, class_index=None) -> float:
    """Gaussian log-density of the observed entries under one class (dense route)."""
    mom = implied_moments(params, ind.schedule)
    obs = ind.values.T.reshape(-1)[ind.mask.T.reshape(-1)]
    try:
        L = np.linalg.cholesky(mom.cov)
    except np.linalg.LinAlgError:
        raise NumericalFailure(
            "implied covariance is not positive definite", class_index, ind.id
        ) from None
    z = np.linalg.solve(L, obs - mom.mean)
    return float(-0.5 * (obs.size * LOG_2PI + z @ z) - np.sum(np.log(np.diag(L))))


def panel_log_densities(panel: Panel, params: ClassParameters, class_index=None) -> np.ndarray:
    """Log-density of every individual under one class (information-form route)."""
    if params.n_outcomes != panel.m:
        raise InvalidInputError(f"panel has {panel.m} outcome(s), class has {params.n_outcomes}")
    try:
        Lpsi = np.linalg.cholesky(params.cov)
    except np.linalg.LinAlgError:
        raise NumericalFailure("growth-factor covariance is not positive definite", class_index) from None
    W, logdet_r = panel.residual_precision(params.resid, class_index)
    Linv = np.linalg.inv(Lpsi)
    out = np.empty(panel.n)
    bad = info_form_logdens(
        panel.times, panel.values, panel.codes, panel.n_observed,
        params.mean, params.knots, Linv.T @ Linv, 2.0 * np.sum(np.log(np.diag(Lpsi))),
        W, logdet_r, out,
    )
    if bad >= 0:
        raise NumericalFailure("implied covariance is not positive definite", class_index, panel.ids[bad])
    return out


def _as_panel(data) -> Panel:
    return data if isinstance(data, Panel) else Panel(data)


def log_density_matrix(model: MixtureModel, data) -> np.ndarray:
    """(n, K) matrix of within-class log-densities."""
    panel = _as_panel(data)
    return np.column_stack(
        [panel_log_densities(panel, c, k + 1) for k, c in enumerate(model.classes)]
    )


def _mixture_terms(model: MixtureModel, panel: Panel):
    ld = log_density_matrix(model, panel)
    logpi = np.log(gating_probabilities(panel.x, model.gating))
    return logpi + ld


def total_log_likelihood(model: MixtureModel, data) -> float:
    panel = _as_panel(data)
    terms = _mixture_terms(model, panel)
    per = logsumexp(terms, axis=1)
    bad = ~np.isfinite(per)
    if bad.any():
        raise NumericalFailure("non-finite likelihood contribution", None, panel.ids[int(np.argmax(bad))])
    return float(np.sum(per))


def posterior_matrix(model: MixtureModel, data) -> np.ndarray:
    """(n, K) posterior class probabilities."""
    terms = _mixture_terms(model, _as_panel(data))
    return np.exp(terms - logsumexp(terms, axis=1, keepdims=True))


def posterior_probabilities(model: MixtureModel, ind: Individual) -> np.ndarray:
    logpi = np.log(gating_probabilities(ind.x, model.gating))
    ld = np.array([class_log_density(ind, c, k + 1) for k, c in enumerate(model.classes)])
    t = logpi + ld
    return np.exp(t - logsumexp(t))


def _round_sig(a, digits=12):
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore"):
        mag = np.floor(np.log10(np.abs(a)))
    mag = np.where(np.isfinite(mag), mag, 0)
    scale = 10.0 ** (digits - 1 - mag)
    return np.round(a * scale) / scale


def classify(posteriors, rng: np.random.Generator) -> int:
    """0-based modal class; exact ties (12 significant digits) broken at random."""
    p = _round_sig(posteriors)
    tied = np.flatnonzero(p == p.max())
    if tied.size == 1:
        return int(tied[0])
    return int(rng.choice(tied))


def classify_all(posteriors, rng: np.random.Generator) -> np.ndarray:
    return np.array([classify(row, rng) for row in np.atleast_2d(posteriors)], dtype=int)
