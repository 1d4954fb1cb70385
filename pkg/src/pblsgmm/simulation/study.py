"""Replicate-until-S-converged Monte Carlo studies.

Attempt ``r`` draws its dataset from the stream ``default_rng([master_seed, r])``,
so results do not depend on the worker count or on completion order: attempts
are reduced in index order and the first ``S`` converged ones are kept.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from ..errors import EstimationFailure, InvalidInputError, NumericalFailure
from ..estimation.fit import CONVERGED, NUMERICAL_FAILURE, FitConfig, FitResult, fit, fit_from_model
from ..estimation.params import ParameterLayout
from ..mixture import MixtureModel
from ..spline import ClassParameters
from . import metrics
from .design import GeneratedDataset, SimulationCondition, generate_dataset

log = logging.getLogger(__name__)

MAX_ATTEMPT_FACTOR = 5
OUTCOME_COLUMNS = {"y": 0, "z": 1}


def project_model(model: MixtureModel, outcomes) -> MixtureModel:
    """Marginal model of the named outcomes, relabeled by its first knot."""
    outcomes = tuple(outcomes)
    if outcomes == model.outcomes:
        return model
    cols = [model.outcomes.index(o) for o in outcomes]
    idx = np.concatenate([np.arange(3 * u, 3 * u + 3) for u in cols])
    classes = tuple(
        ClassParameters(c.mean[cols], c.knots[cols], c.cov[np.ix_(idx, idx)], c.resid[np.ix_(cols, cols)])
        for c in model.classes
    )
    return MixtureModel(classes, model.gating, outcomes).relabeled()


def project(dataset: GeneratedDataset, outcomes) -> GeneratedDataset:
    """Dataset restricted to the named outcomes, truth included."""
    outcomes = tuple(outcomes)
    if outcomes == ("y", "z"):
        return dataset
    cols = [OUTCOME_COLUMNS[o] for o in outcomes]
    return replace(
        dataset,
        individuals=[ind.select(cols) for ind in dataset.individuals],
        truth=project_model(dataset.truth, outcomes),
    )


def truth_vector(condition: SimulationCondition, outcomes=("y", "z")) -> tuple:
    """(names, values) of the generating parameters on the reporting scale."""
    model = project_model(condition.true_model(), outcomes)
    layout = ParameterLayout(model.K, model.n_outcomes, model.n_covariates, (0.0, 1.0), tuple(outcomes))
    return layout.report_names(), layout.report_vector(model)


def default_fitter(dataset: GeneratedDataset, K: int, config: FitConfig, outcomes) -> FitResult:
    return fit(dataset.individuals, K, config, outcomes=outcomes)


def oracle_fitter(dataset: GeneratedDataset, K: int, config: FitConfig, outcomes) -> FitResult:
    """Returns the generating parameters with zero-width intervals."""
    cfg = replace(config, compute_se=False)
    res = fit_from_model(dataset.individuals, dataset.truth, cfg)
    zero = np.zeros_like(res.estimates)
    return replace(res, se=zero, ci_low=res.estimates.copy(), ci_high=res.estimates.copy(), se_available=True)


@dataclass
class ReplicationRecord:
    attempt: int
    status: str
    loglik: float = np.nan
    estimates: np.ndarray = None
    se: np.ndarray = None
    ci_low: np.ndarray = None
    ci_high: np.ndarray = None
    accuracy: float = np.nan
    proportions: np.ndarray = None
    n_restarts: int = 0
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _attempt(args) -> ReplicationRecord:
    condition, master_seed, r, config, mode, fitter, outcomes = args
    ds = project(generate_dataset(condition, [master_seed, r], mode), outcomes)
    try:
        res = fitter(ds, ds.truth.K, config, outcomes)
    except (EstimationFailure, NumericalFailure) as exc:
        return ReplicationRecord(r, NUMERICAL_FAILURE, message=str(exc))
    n = len(res.names)
    nan = np.full(n, np.nan)
    return ReplicationRecord(
        attempt=r, status=res.status, loglik=res.loglik, estimates=res.estimates,
        se=res.se if res.se is not None else nan,
        ci_low=res.ci_low if res.ci_low is not None else nan,
        ci_high=res.ci_high if res.ci_high is not None else nan,
        accuracy=metrics.accuracy(res.classes, ds.classes), proportions=res.proportions,
        n_restarts=res.n_attempts,
    )


def _run_attempts(task, make_args, need, max_attempts, workers, accept):
    """Evaluate attempts 0, 1, ... until ``need`` accepted ones or ``max_attempts``."""
    records = []
    n_ok = 0
    r = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        while n_ok < need and r < max_attempts:
            batch = range(r, min(r + max(need - n_ok, workers if pool else 1), max_attempts))
            args = [make_args(i) for i in batch]
            out = list(pool.map(task, args)) if pool else [task(a) for a in args]
            for rec in out:
                if n_ok >= need:
                    break
                records.append(rec)
                n_ok += accept(rec)
            r = batch.stop
    finally:
        if pool:
            pool.shutdown()
    return records, n_ok


@dataclass
class MetricReport:
    condition: SimulationCondition
    outcomes: tuple
    names: list
    truth: np.ndarray
    relative_bias: np.ndarray
    bias: np.ndarray
    empirical_se: np.ndarray
    relative_rmse: np.ndarray
    coverage: np.ndarray
    mcse_bias: np.ndarray
    mean_accuracy: float
    n_converged: int
    n_attempts: int
    S: int
    partial: bool
    records: list = field(default_factory=list, repr=False)

    @property
    def convergence_rate(self) -> float:
        return self.n_converged / self.n_attempts if self.n_attempts else np.nan

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "parameter": self.names, "truth": self.truth, "relative_bias": self.relative_bias,
            "bias": self.bias, "empirical_se": self.empirical_se, "relative_rmse": self.relative_rmse,
            "coverage": self.coverage, "mcse_bias": self.mcse_bias,
        })

    def replication_table(self) -> pd.DataFrame:
        rows = []
        for rec in self.records:
            if not rec.converged:
                continue
            row = {"attempt": rec.attempt, "loglik": rec.loglik, "accuracy": rec.accuracy}
            row.update(zip(self.names, rec.estimates))
            row.update({f"{n}.se": v for n, v in zip(self.names, rec.se)})
            rows.append(row)
        return pd.DataFrame(rows)

    def summary(self) -> dict:
        return {
            "condition": self.condition.label, "outcomes": list(self.outcomes), "S": self.S,
            "n_converged": self.n_converged, "n_attempts": self.n_attempts,
            "convergence_rate": self.convergence_rate, "mean_accuracy": self.mean_accuracy,
            "partial": self.partial,
        }


def _report(condition, outcomes, names, truth, records, S, partial) -> MetricReport:
    ok = [r for r in records if r.converged]
    if ok:
        est = np.array([r.estimates for r in ok])
        lo = np.array([r.ci_low for r in ok])
        hi = np.array([r.ci_high for r in ok])
        vals = dict(
            relative_bias=metrics.relative_bias(est, truth), bias=metrics.bias(est, truth),
            empirical_se=metrics.empirical_se(est), relative_rmse=metrics.relative_rmse(est, truth),
            coverage=metrics.coverage(lo, hi, truth), mcse_bias=metrics.mcse_bias(est),
        )
        acc = float(np.mean([r.accuracy for r in ok]))
    else:
        vals = {k: np.full(len(names), np.nan) for k in
                ("relative_bias", "bias", "empirical_se", "relative_rmse", "coverage", "mcse_bias")}
        acc = np.nan
    return MetricReport(
        condition=condition, outcomes=tuple(outcomes), names=names, truth=truth, mean_accuracy=acc,
        n_converged=len(ok), n_attempts=len(records), S=S, partial=partial, records=records, **vals,
    )


def run_study(
    condition: SimulationCondition,
    S: int,
    config: FitConfig = FitConfig(),
    assignment_mode: str = "multinomial",
    workers: int = 1,
    fitter=None,
    master_seed: int = 0,
    outcomes=("y", "z"),
) -> MetricReport:
    """Fit the true K to fresh datasets until S converge (at most 5 S attempts)."""
    if S < 1:
        raise InvalidInputError("S must be >= 1")
    outcomes = tuple(outcomes)
    fitter = fitter or default_fitter
    records, n_ok = _run_attempts(
        _attempt,
        lambda r: (condition, master_seed, r, config, assignment_mode, fitter, outcomes),
        S, MAX_ATTEMPT_FACTOR * S, workers, lambda rec: rec.converged,
    )
    names, truth = truth_vector(condition, outcomes)
    partial = n_ok < S
    if partial:
        log.warning("study aborted: %d of %d converged after %d attempts", n_ok, S, len(records))
    return _report(condition, outcomes, names, truth, records, S, partial)


# -- joint versus univariate ----------------------------------------------------

@dataclass
class PairedRecord:
    attempt: int
    status: dict
    accuracy: dict


def _paired_attempt(args) -> PairedRecord:
    condition, master_seed, r, config, mode, fitter = args
    base = generate_dataset(condition, [master_seed, r], mode)
    status, acc = {}, {}
    for key, outs in (("joint", ("y", "z")), ("y", ("y",)), ("z", ("z",))):
        ds = project(base, outs)
        try:
            res = fitter(ds, ds.truth.K, config, outs)
        except (EstimationFailure, NumericalFailure):
            status[key], acc[key] = NUMERICAL_FAILURE, np.nan
            continue
        status[key] = res.status
        acc[key] = metrics.accuracy(res.classes, ds.classes)
    return PairedRecord(r, status, acc)


@dataclass
class ComparisonReport:
    condition: SimulationCondition
    records: list
    S: int
    partial: bool

    @property
    def paired(self) -> list:
        return [r for r in self.records if all(v == CONVERGED for v in r.status.values())]

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([
            {"attempt": r.attempt, "joint": r.accuracy["joint"], "y": r.accuracy["y"], "z": r.accuracy["z"]}
            for r in self.paired
        ], columns=["attempt", "joint", "y", "z"])

    def mean_accuracy(self) -> dict:
        t = self.table()
        return {k: float(t[k].mean()) if len(t) else np.nan for k in ("joint", "y", "z")}

    def summary(self) -> dict:
        m = self.mean_accuracy()
        return {
            "condition": self.condition.label, "S": self.S, "n_paired": len(self.paired),
            "n_attempts": len(self.records), "partial": self.partial, "mean_accuracy": m,
            "difference": {"joint_minus_y": m["joint"] - m["y"], "joint_minus_z": m["joint"] - m["z"]},
        }


def compare_joint_vs_univariate(
    condition: SimulationCondition,
    S: int,
    config: FitConfig = FitConfig(),
    assignment_mode: str = "multinomial",
    workers: int = 1,
    fitter=None,
    master_seed: int = 0,
) -> ComparisonReport:
    """Joint, y-only and z-only fits on the same datasets; paired when all three converge."""
    if S < 1:
        raise InvalidInputError("S must be >= 1")
    config = replace(config, compute_se=False)
    fitter = fitter or default_fitter
    records, n_ok = _run_attempts(
        _paired_attempt,
        lambda r: (condition, master_seed, r, config, assignment_mode, fitter),
        S, MAX_ATTEMPT_FACTOR * S, workers,
        lambda rec: all(v == CONVERGED for v in rec.status.values()),
    )
    return ComparisonReport(condition, records, S, n_ok < S)
