"""FIML point estimation with restarts, Wald inference and original-scale reports."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
import scipy.optimize as so

from ..errors import EstimationFailure, InvalidInputError
from ..mixture import Individual, MixtureModel, Panel, classify_all, posterior_matrix
from .objective import Objective
from .params import ParameterLayout
from .start import knot_box, starting_values

log = logging.getLogger(__name__)

CONVERGED = "converged"
RESTART_EXHAUSTED = "restart-exhausted"
NUMERICAL_FAILURE = "numerical-failure"
Z95 = 1.959963984540054


@dataclass(frozen=True)
class FitConfig:
    max_restarts: int = 10
    gtol: float = 1e-5
    ftol: float = 1e-10
    fd_step: float = 1e-5
    hessian_step: float = 1e-4
    knot_margin: float = 0.5
    max_iter: int = 1000
    seed: int = 0
    compute_se: bool = True

    def __post_init__(self):
        if self.max_restarts < 1:
            raise InvalidInputError("max_restarts must be >= 1")
        for name in ("gtol", "ftol", "fd_step", "hessian_step"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    model: MixtureModel
    layout: ParameterLayout
    u: np.ndarray
    loglik: float
    status: str
    n_attempts: int
    attempt_logliks: list
    n_iter: int
    n_obs: int
    names: list
    estimates: np.ndarray
    reparam_estimates: np.ndarray
    posteriors: np.ndarray
    classes: np.ndarray
    proportions: np.ndarray
    ids: list = field(default_factory=list)
    se: np.ndarray = None
    ci_low: np.ndarray = None
    ci_high: np.ndarray = None
    se_available: bool = False
    grad_norm: float = np.nan

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def K(self) -> int:
        return self.model.K

    @property
    def n_parameters(self) -> int:
        return self.layout.size

    def estimate(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    def as_series(self) -> pd.Series:
        return pd.Series(self.estimates, index=self.names)


def reparam_names(layout: ParameterLayout) -> list:
    rnames = {"intercept": "level_at_knot", "slope1": "mean_slope", "slope2": "half_slope_diff"}
    out = []
    for name in layout.report_names():
        for g, r in rnames.items():
            name = name.replace(g, r)
        out.append(name)
    return out


def _reparam_vector(layout: ParameterLayout, model: MixtureModel) -> np.ndarray:
    iu = np.triu_indices(layout.q)
    parts = []
    for c in model.classes:
        parts += [c.mean.reshape(-1), c.knots, c.cov[iu], np.diag(c.resid)]
        if layout.m == 2:
            parts.append([c.resid[0, 1]])
    parts.append(model.gating.coef.reshape(-1))
    return np.concatenate(parts)


def _as_panel(data) -> Panel:
    return data if isinstance(data, Panel) else Panel(data)


def make_layout(panel: Panel, K: int, config: FitConfig, outcomes=None, covariates=None) -> ParameterLayout:
    outcomes = tuple(outcomes) if outcomes is not None else ("y", "z")[:panel.m]
    return ParameterLayout(
        K, panel.m, panel.p, knot_box(panel, config.knot_margin), outcomes,
        tuple(covariates) if covariates is not None else (),
    )


def _optimize(obj: Objective, u0: np.ndarray, config: FitConfig):
    f0 = obj(u0)
    if not np.isfinite(f0):
        return None
    g0, curv = obj.gradient(u0, config.fd_step, with_curvature=True)
    if not np.all(np.isfinite(g0)):
        return None
    H0 = np.diag(1.0 / np.clip(np.where(np.isfinite(curv), curv, 1.0), 1e-3, 1e6))
    history = [f0]

    def callback(xk):
        history.append(obj(xk))

    res = so.minimize(
        obj, u0, jac=lambda v: obj.gradient(v, config.fd_step), method="BFGS",
        callback=callback,
        options={"gtol": config.gtol, "maxiter": config.max_iter, "hess_inv0": H0},
    )
    g = obj.gradient(res.x, config.fd_step)
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    rel = abs(history[-1] - history[-2]) / max(abs(history[-1]), 1.0) if len(history) > 1 else np.inf
    ok = np.isfinite(res.fun) and (gnorm <= config.gtol or (rel <= config.ftol and gnorm <= 10 * config.gtol))
    return res.x, -res.fun * obj.panel.n, bool(ok), int(res.nit), gnorm


def fit(data, K: int, config: FitConfig = FitConfig(), outcomes=None, covariates=None, start: MixtureModel = None) -> FitResult:
    """Maximize the mixture log-likelihood; restart from new starts until one converges."""
    if K < 1:
        raise InvalidInputError("K must be >= 1")
    panel = _as_panel(data)
    layout = make_layout(panel, K, config, outcomes, covariates)
    obj = Objective(panel, layout)

    best = None
    lls = []
    attempts = 0
    for r in range(config.max_restarts):
        attempts += 1
        if start is not None and r == 0:
            m0 = start
        else:
            m0 = starting_values(panel, K, config.seed, r, layout.knot_bounds, layout.outcomes)
        out = _optimize(obj, layout.encode(m0), config)
        if out is None:
            lls.append(-np.inf)
            log.debug("attempt %d: non-finite objective at start", r)
            continue
        u, ll, ok, nit, gnorm = out
        lls.append(ll)
        log.debug("attempt %d: ll=%.6f converged=%s |g|=%.2e", r, ll, ok, gnorm)
        # converged solutions dominate non-converged ones
        if best is None or (ok and not best[2]) or (ok == best[2] and ll > best[1]):
            best = (u, ll, ok, nit, gnorm)
        if ok:
            break
    if best is None:
        raise EstimationFailure("objective is non-finite at every starting point")
    u, ll, ok, nit, gnorm = best
    status = CONVERGED if ok else RESTART_EXHAUSTED
    model = layout.decode(u).relabeled()
    return _finalize(panel, layout, model, ll, status, attempts, lls, nit, gnorm, config)


def _finalize(panel, layout, model, ll, status, attempts, lls, nit, gnorm, config) -> FitResult:
    u = layout.encode(model)
    post = posterior_matrix(model, panel)
    rng = np.random.default_rng([int(config.seed) & 0xFFFFFFFF, 7])
    classes = classify_all(post, rng)
    proportions = np.bincount(classes, minlength=layout.K) / panel.n
    result = FitResult(
        model=model, layout=layout, u=u, loglik=float(ll), status=status,
        n_attempts=attempts, attempt_logliks=list(lls), n_iter=nit, n_obs=panel.n,
        names=layout.report_names(), estimates=layout.report_vector(model),
        reparam_estimates=_reparam_vector(layout, model), posteriors=post,
        classes=classes, proportions=proportions, ids=list(panel.ids), grad_norm=gnorm,
    )
    if config.compute_se and status == CONVERGED:
        result = wald_inference(result, panel, config)
    return result


def fit_from_model(data, model: MixtureModel, config: FitConfig = FitConfig(), covariates=None) -> FitResult:
    """Wrap a known parameter set as a result (no optimization); used by oracle runs."""
    panel = _as_panel(data)
    layout = make_layout(panel, model.K, config, model.outcomes, covariates)
    lo, hi = layout.knot_bounds
    for c in model.classes:
        if np.any(c.knots <= lo) or np.any(c.knots >= hi):
            layout = replace(layout, knot_bounds=(min(lo, c.knots.min() - 1), max(hi, c.knots.max() + 1)))
    from ..mixture import total_log_likelihood

    ll = total_log_likelihood(model, panel)
    return _finalize(panel, layout, model, ll, CONVERGED, 1, [ll], 0, 0.0, config)


def wald_inference(fit: FitResult, data, config: FitConfig = FitConfig()) -> FitResult:
    """Observed-information SEs on the reporting scale via the delta method."""
    panel = _as_panel(data)
    obj = Objective(panel, fit.layout)
    H = obj.hessian(fit.u, config.hessian_step)
    n = fit.layout.size
    unavailable = replace(
        fit, se=np.full(n, np.nan), ci_low=np.full(n, np.nan), ci_high=np.full(n, np.nan),
        se_available=False,
    )
    if not np.all(np.isfinite(H)):
        return unavailable
    H = 0.5 * (H + H.T)
    w = np.linalg.eigvalsh(H)
    if w.min() <= 1e-8 * max(abs(w).max(), 1.0):
        log.info("Hessian not positive definite (min eigenvalue %.3e); SEs unavailable", w.min())
        return unavailable
    cov_u = np.linalg.inv(H)
    Jac = fit.layout.report_jacobian(fit.u)
    cov_r = Jac @ cov_u @ Jac.T
    var = np.diag(cov_r)
    if np.any(var < 0):
        return unavailable
    se = np.sqrt(var)
    return replace(
        fit, se=se, ci_low=fit.estimates - Z95 * se, ci_high=fit.estimates + Z95 * se,
        se_available=True,
    )


def report_original_scale(fit: FitResult) -> pd.DataFrame:
    """Long table of original-scale estimates with SEs and Wald intervals.

    Gating rows also carry odds ratios ``exp(coef)`` with ``exp`` of the CI ends.
    """
    rows = []
    se = fit.se if fit.se is not None else np.full(len(fit.names), np.nan)
    lo = fit.ci_low if fit.ci_low is not None else np.full(len(fit.names), np.nan)
    hi = fit.ci_high if fit.ci_high is not None else np.full(len(fit.names), np.nan)
    for i, name in enumerate(fit.names):
        cls, *rest = name.split(".")
        if rest[0].startswith("beta"):
            block, quantity = "gating", ".".join(rest)
        else:
            block, quantity = rest[0], rest[1]
        row = {
            "parameter": name, "class": int(cls[1:]), "block": block, "quantity": quantity,
            "estimate": fit.estimates[i], "se": se[i], "ci_low": lo[i], "ci_high": hi[i],
            "odds_ratio": np.nan, "or_ci_low": np.nan, "or_ci_high": np.nan,
        }
        if block == "gating":
            row.update(odds_ratio=np.exp(fit.estimates[i]), or_ci_low=np.exp(lo[i]), or_ci_high=np.exp(hi[i]))
        rows.append(row)
    return pd.DataFrame(rows)


def odds_ratio_table(fit: FitResult, digits: int = 3) -> pd.DataFrame:
    """Covariate x class table of ``OR (low, high)`` strings; reference class shown as '---'."""
    cov_names = list(fit.layout.covariates)
    table = {}
    for k in range(fit.K):
        col = f"Class {k + 1}"
        cells = []
        for c in cov_names:
            if k == 0:
                cells.append("---")
                continue
            i = fit.names.index(f"c{k + 1}.beta.{c}")
            est = np.exp(fit.estimates[i])
            if fit.se_available:
                lo, hi = np.exp(fit.ci_low[i]), np.exp(fit.ci_high[i])
                sig = "*" if (lo > 1 or hi < 1) else ""
                cells.append(f"{est:.{digits}f} ({lo:.{digits}f}, {hi:.{digits}f}){sig}")
            else:
                cells.append(f"{est:.{digits}f} (NA)")
        table[col] = cells
    return pd.DataFrame(table, index=pd.Index(cov_names, name="covariate"))


def drop_covariates(data) -> list:
    """Copies of the individuals without gating covariates."""
    return [Individual(ind.id, ind.schedule, ind.values, np.zeros(0)) for ind in data]


def select_outcomes(data, columns) -> list:
    return [ind.select(columns) for ind in data]
