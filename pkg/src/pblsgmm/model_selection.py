"""Class enumeration by information criteria."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import EstimationFailure, InvalidInputError
from .estimation.fit import CONVERGED, NUMERICAL_FAILURE, FitConfig, drop_covariates, fit
from .estimation.params import n_free_parameters


def parameter_count(K: int, outcomes: int, p_covariates: int = 0) -> int:
    """Free parameters: 11 per univariate class, 32 per bivariate class, plus gating."""
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    if outcomes not in (1, 2):
        raise InvalidInputError("outcomes must be 1 or 2")
    return n_free_parameters(K, outcomes, p_covariates)


def information_criteria(minus_two_ll: float, p: int, n: int) -> tuple:
    """(AIC, BIC) with n counted in individuals."""
    return minus_two_ll + 2 * p, minus_two_ll + p * np.log(n)


@dataclass
class EnumerationRow:
    K: int
    minus_two_ll: float
    aic: float
    bic: float
    proportions: tuple
    n_parameters: int
    status: str
    bic_best: bool = False
    n_obs: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["proportions"] = list(self.proportions)
        return d


def _outcome_columns(outcomes) -> tuple:
    names = ("y", "z")
    if isinstance(outcomes, str):
        outcomes = (outcomes,) if outcomes in names else tuple(outcomes)
    cols = tuple(names.index(o) for o in outcomes)
    if not cols or len(set(cols)) != len(cols):
        raise InvalidInputError(f"bad outcome selection {outcomes!r}")
    return cols


def enumerate_classes(data, Kmax: int, outcomes=("y", "z"), config: FitConfig = FitConfig()) -> list:
    """Fit K = 1..Kmax without covariates; flag the BIC-minimizing converged row."""
    if Kmax < 1:
        raise InvalidInputError("Kmax must be >= 1")
    cols = _outcome_columns(outcomes)
    names = tuple(("y", "z")[c] for c in cols)
    base = drop_covariates(data)
    if cols != (0, 1):
        base = [ind.select(cols) for ind in base]
    n = len(base)
    cfg = FitConfig(**{**config.to_dict(), "compute_se": False})
    rows = []
    prev_ll = -np.inf
    for K in range(1, Kmax + 1):
        p = parameter_count(K, len(cols))
        try:
            res = fit(base, K, cfg, outcomes=names)
        except (EstimationFailure, InvalidInputError) as exc:
            rows.append(EnumerationRow(K, np.nan, np.nan, np.nan, (), p, f"{NUMERICAL_FAILURE}: {exc}", n_obs=n))
            continue
        if res.status != CONVERGED:
            rows.append(EnumerationRow(K, np.nan, np.nan, np.nan, tuple(res.proportions), p, res.status, n_obs=n))
            continue
        m2ll = -2.0 * res.loglik
        aic, bic = information_criteria(m2ll, p, n)
        status = res.status
        if res.loglik < prev_ll - 1e-3:
            status = f"{CONVERGED} (loglik below K-1: probable local optimum)"
        prev_ll = max(prev_ll, res.loglik)
        rows.append(EnumerationRow(K, m2ll, aic, bic, tuple(float(v) for v in res.proportions), p, status, n_obs=n))
    finite = [r for r in rows if np.isfinite(r.bic)]
    if finite:
        min(finite, key=lambda r: r.bic).bic_best = True
    return rows


enumerate = enumerate_classes  # noqa: A001
