"""Simulation conditions and the two-step data generator."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidConditionError
from ..mixture import GatingParameters, Individual, MixtureModel
from ..spline import ClassParameters, Schedule, spline_curve

SCENARIOS = (1, 2, 3)
SEPARATIONS = (0.50, 0.75, 1.00)
ALLOCATIONS = (0.0, 0.775)
RESIDUAL_VARIANCES = (1.0, 2.0)
BETWEEN_CORRELATIONS = (-0.3, 0.0, 0.3)
GATING_SLOPES = (np.log(1.5), np.log(1.7))
ASSIGNMENT_MODES = ("multinomial", "argmax")

# original-scale (intercept, slope1, slope2) per scenario -> outcome -> class
_SCENARIO_MEANS = {
    1: {"y": [(98.0, 5.0, 2.6), (102.0, 5.0, 2.6)], "z": [(98.0, 5.0, 2.6), (102.0, 5.0, 2.6)]},
    2: {"y": [(98.0, 5.0, 2.6), (102.0, 5.0, 2.6)], "z": [(100.0, 4.4, 2.0), (100.0, 3.6, 2.0)]},
    3: {"y": [(98.0, 5.0, 2.6), (102.0, 5.0, 2.6)], "z": [(100.0, 4.4, 2.0), (100.0, 4.4, 2.8)]},
}


@dataclass(frozen=True)
class SimulationCondition:
    """One cell of the design grid plus the fixed block.

    Knots are 4.5 - separation / 4.5 for y and 4.5 / 4.5 + separation for z
    (class 1 / class 2).
    """

    scenario: int = 1
    separation: float = 1.00
    beta0: float = 0.0
    resid_var: float = 1.0
    rho: float = -0.3
    n: int = 500
    n_waves: int = 10
    window: float = 0.25
    intercept_var: float = 25.0
    slope_var: float = 1.0
    within_corr: float = 0.3
    resid_corr: float = 0.3
    gating_slopes: tuple = field(default=GATING_SLOPES)

    @property
    def label(self) -> str:
        return (
            f"s{self.scenario}_sep{self.separation:.2f}_b{self.beta0:g}"
            f"_th{self.resid_var:g}_rho{self.rho:+.1f}"
        )

    def knots(self) -> np.ndarray:
        """(K=2, m=2) knot locations."""
        s = self.separation
        return np.array([[4.5 - s, 4.5], [4.5, 4.5 + s]])

    def original_means(self) -> np.ndarray:
        """(K=2, m=2, 3) original-scale growth-factor means."""
        sm = _SCENARIO_MEANS[self.scenario]
        return np.array([[sm["y"][k], sm["z"][k]] for k in range(2)])

    def outcome_cov(self) -> np.ndarray:
        sd = np.sqrt([self.intercept_var, self.slope_var, self.slope_var])
        corr = np.full((3, 3), self.within_corr)
        np.fill_diagonal(corr, 1.0)
        return corr * np.outer(sd, sd)

    def joint_cov(self) -> np.ndarray:
        """6x6 original-scale growth-factor covariance; rho applies to all nine cross pairs."""
        S = self.outcome_cov()
        sd = np.sqrt(np.diag(S))
        cross = self.rho * np.outer(sd, sd)
        return np.block([[S, cross], [cross.T, S]])

    def resid_cov(self) -> np.ndarray:
        c = self.resid_corr * self.resid_var
        return np.array([[self.resid_var, c], [c, self.resid_var]])

    def gating(self) -> GatingParameters:
        return GatingParameters(np.array([[self.beta0, *self.gating_slopes]]))

    def true_model(self) -> MixtureModel:
        means, knots = self.original_means(), self.knots()
        classes = tuple(
            ClassParameters.from_original(means[k], knots[k], self.joint_cov(), self.resid_cov())
            for k in range(2)
        )
        return MixtureModel(classes, self.gating(), ("y", "z"))

    def waves(self) -> np.ndarray:
        return np.arange(self.n_waves, dtype=float)

    def mahalanobis_within(self, outcome: int = 0) -> float:
        d = np.diff(self.original_means()[:, outcome, :], axis=0)[0]
        return float(np.sqrt(d @ np.linalg.solve(self.outcome_cov(), d)))

    def mahalanobis_joint(self) -> float:
        d = np.diff(self.original_means().reshape(2, 6), axis=0)[0]
        return float(np.sqrt(d @ np.linalg.solve(self.joint_cov(), d)))


def build_condition(scenario=1, separation=1.00, beta0=0.0, resid_var=1.0, rho=-0.3, **fixed) -> SimulationCondition:
    """Validate grid descriptors and return a fully populated condition.

    Keyword overrides of the fixed block (``n``, ``window``, ...) are passed
    through unchecked; they exist for desk-scale and degenerate runs.
    """
    checks = (
        ("scenario", scenario, SCENARIOS),
        ("separation", separation, SEPARATIONS),
        ("beta0", beta0, ALLOCATIONS),
        ("resid_var", resid_var, RESIDUAL_VARIANCES),
        ("rho", rho, BETWEEN_CORRELATIONS),
    )
    for name, value, grid in checks:
        if not any(np.isclose(value, g) for g in grid):
            raise InvalidConditionError(f"{name}={value!r} is not on the design grid {grid}")
    snap = lambda v, grid: min(grid, key=lambda g: abs(g - v))  # noqa: E731
    cond = SimulationCondition(
        scenario=int(scenario),
        separation=snap(separation, SEPARATIONS),
        beta0=snap(beta0, ALLOCATIONS),
        resid_var=snap(resid_var, RESIDUAL_VARIANCES),
        rho=snap(rho, BETWEEN_CORRELATIONS),
    )
    if fixed:
        cond = replace(cond, **fixed)
    return cond


def design_grid():
    """All 3 x 3 x 2 x 2 x 3 = 108 cells."""
    return [
        build_condition(s, d, b, th, r)
        for s in SCENARIOS
        for d in SEPARATIONS
        for b in ALLOCATIONS
        for th in RESIDUAL_VARIANCES
        for r in BETWEEN_CORRELATIONS
    ]


@dataclass
class GeneratedDataset:
    individuals: list
    classes: np.ndarray  # 0-based true membership
    truth: MixtureModel
    seed: object
    assignment_mode: str
    growth_factors: np.ndarray = None  # (n, 6) original scale

    @property
    def n(self) -> int:
        return len(self.individuals)


def _psd_factor(S) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    return V * np.sqrt(np.clip(w, 0.0, None))


def generate_dataset(condition: SimulationCondition, seed, assignment_mode: str = "multinomial") -> GeneratedDataset:
    if assignment_mode not in ASSIGNMENT_MODES:
        raise InvalidConditionError(f"unknown assignment mode {assignment_mode!r}")
    rng = np.random.default_rng(seed)
    n, J = condition.n, condition.n_waves
    p = len(condition.gating_slopes)

    x = rng.standard_normal((n, p))
    gating = condition.gating()
    eta = np.column_stack([np.zeros(n), np.column_stack([np.ones(n), x]) @ gating.coef.T])
    prob = np.exp(eta - eta.max(axis=1, keepdims=True))
    prob /= prob.sum(axis=1, keepdims=True)
    u = rng.random(n)
    if assignment_mode == "multinomial":
        cls = (u[:, None] > np.cumsum(prob, axis=1)[:, :-1]).sum(axis=1)
    else:
        cls = np.argmax(prob, axis=1)

    means = condition.original_means().reshape(2, 6)
    gf = means[cls] + rng.standard_normal((n, 6)) @ _psd_factor(condition.joint_cov()).T
    times = condition.waves()[None, :] + rng.uniform(-condition.window, condition.window, (n, J))
    eps = rng.standard_normal((n, J, 2)) @ _psd_factor(condition.resid_cov()).T
    knots = condition.knots()

    individuals = []
    for i in range(n):
        k = cls[i]
        vals = np.column_stack([
            spline_curve(times[i], *gf[i, 3 * u:3 * u + 3], knots[k, u]) for u in range(2)
        ]) + eps[i]
        individuals.append(Individual(i + 1, Schedule(times[i], np.ones((J, 2), bool)), vals, x[i]))
    return GeneratedDataset(individuals, cls, condition.true_model(), seed, assignment_mode, gf)
