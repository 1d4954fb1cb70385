"""Bilinear-spline growth curve kernel.

Factor loadings, the reparameterization between (intercept, slope1, slope2)
and (measurement at the knot, mean slope, half slope difference), and the
class-specific implied moments of one individual's stacked outcomes.

Everything here is pure numpy and works for any number ``m`` of parallel
outcomes; the rest of the package uses ``m`` in {1, 2}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMomentsError, InvalidInputError

__all__ = [
    "Schedule",
    "ClassParameters",
    "ImpliedMoments",
    "factor_loadings",
    "reparameterize",
    "inverse_transform_mean",
    "reparam_matrix",
    "transform_covariance",
    "implied_moments",
    "spline_curve",
]


@dataclass(frozen=True)
class Schedule:
    """Measurement occasions of one individual plus per-outcome observed masks.

    ``mask`` has shape (J, m); column 0 is y, column 1 (if present) is z.
    """

    times: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim == 1:
            mask = mask[:, None]
        if times.ndim != 1 or times.size < 1:
            raise InvalidInputError("times must be a non-empty vector")
        if not np.all(np.isfinite(times)):
            raise InvalidInputError("times must be finite")
        if np.any(np.diff(times) <= 0):
            raise InvalidInputError("times must be strictly increasing")
        if mask.shape[0] != times.size:
            raise InvalidInputError("mask rows must match the number of occasions")
        if not mask.any():
            raise InvalidInputError("schedule has no observed entries")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "mask", mask)

    @property
    def n_occasions(self) -> int:
        return self.times.size

    @property
    def observed_y(self) -> np.ndarray:
        return self.mask[:, 0]

    @property
    def observed_z(self) -> np.ndarray:
        return self.mask[:, 1]


@dataclass(frozen=True)
class ClassParameters:
    """One latent class on the reparameterized scale.

    Attributes
    ----------
    mean : (m, 3) array
        Per-outcome means of (knot measurement, mean slope, half slope difference).
    knots : (m,) array
        Outcome-specific knot locations.
    cov : (3m, 3m) array
        Joint growth-factor covariance, outcome blocks stacked in order.
    resid : (m, m) array
        Residual covariance, constant over occasions.
    """

    mean: np.ndarray
    knots: np.ndarray
    cov: np.ndarray
    resid: np.ndarray

    def __post_init__(self):
        mean = np.atleast_2d(np.asarray(self.mean, dtype=float))
        knots = np.atleast_1d(np.asarray(self.knots, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        resid = np.atleast_2d(np.asarray(self.resid, dtype=float))
        m = knots.size
        if mean.shape != (m, 3) or cov.shape != (3 * m, 3 * m) or resid.shape != (m, m):
            raise InvalidInputError(
                f"inconsistent class shapes: mean {mean.shape}, knots {knots.shape}, "
                f"cov {cov.shape}, resid {resid.shape}"
            )
        for name, arr in (("mean", mean), ("knots", knots), ("cov", cov), ("resid", resid)):
            if not np.all(np.isfinite(arr)):
                raise InvalidInputError(f"{name} must be finite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "resid", resid)

    @property
    def n_outcomes(self) -> int:
        return self.knots.size

    @property
    def residual_var(self) -> np.ndarray:
        return np.diag(self.resid).copy()

    @property
    def residual_cov(self) -> float:
        return float(self.resid[0, 1]) if self.n_outcomes > 1 else 0.0

    @classmethod
    def from_original(cls, mean, knots, cov, resid) -> "ClassParameters":
        """Build from original-scale means (intercept, slope1, slope2) and covariance."""
        knots = np.atleast_1d(np.asarray(knots, dtype=float))
        mean = np.atleast_2d(np.asarray(mean, dtype=float))
        rmean = np.array([reparameterize(mu, g) for mu, g in zip(mean, knots)])
        rcov = transform_covariance(cov, knots, "to_reparam")
        return cls(rmean, knots, rcov, resid)

    def original_mean(self) -> np.ndarray:
        return np.array([inverse_transform_mean(mu, g) for mu, g in zip(self.mean, self.knots)])

    def original_cov(self) -> np.ndarray:
        return transform_covariance(self.cov, self.knots, "to_original")


@dataclass(frozen=True)
class ImpliedMoments:
    """Mean and covariance of the observed entries; outcome blocks stacked in order."""

    mean: np.ndarray
    cov: np.ndarray


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("non-finite input")


def factor_loadings(times, knot) -> np.ndarray:
    """Rows ``(1, t - knot, |t - knot|)`` for each occasion."""
    times = np.asarray(times, dtype=float)
    knot = float(knot)
    _check_finite(times, np.array(knot))
    d = times - knot
    return np.column_stack([np.ones_like(times), d, np.abs(d)])


def reparameterize(gf, knot) -> np.ndarray:
    """(intercept, slope1, slope2) -> (value at knot, mean slope, half slope difference)."""
    eta0, eta1, eta2 = np.asarray(gf, dtype=float)
    _check_finite(np.array([eta0, eta1, eta2, knot]))
    return np.array([eta0 + knot * eta1, 0.5 * (eta1 + eta2), 0.5 * (eta2 - eta1)])


def inverse_transform_mean(gf, knot) -> np.ndarray:
    """Inverse of :func:`reparameterize`."""
    a, b, c = np.asarray(gf, dtype=float)
    _check_finite(np.array([a, b, c, knot]))
    slope1 = b - c
    return np.array([a - knot * slope1, slope1, b + c])


def reparam_matrix(knot, inverse: bool = False) -> np.ndarray:
    """3x3 linear map of :func:`reparameterize` (or of its inverse)."""
    g = float(knot)
    if inverse:
        return np.array([[1.0, -g, g], [0.0, 1.0, -1.0], [0.0, 1.0, 1.0]])
    return np.array([[1.0, g, 0.0], [0.0, 0.5, 0.5], [0.0, -0.5, 0.5]])


def _block_diag(blocks) -> np.ndarray:
    size = sum(b.shape[0] for b in blocks)
    out = np.zeros((size, size))
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


def transform_covariance(cov, knots, direction: str = "to_reparam") -> np.ndarray:
    """Map a stacked growth-factor covariance between the two parameterizations.

    ``direction`` is ``"to_reparam"`` (original -> reparameterized) or
    ``"to_original"``.
    """
    cov = np.asarray(cov, dtype=float)
    knots = np.atleast_1d(np.asarray(knots, dtype=float))
    _check_finite(cov, knots)
    if cov.shape != (3 * knots.size, 3 * knots.size):
        raise InvalidInputError(f"covariance shape {cov.shape} does not match {knots.size} outcome(s)")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
        raise InvalidInputError("covariance matrix is not symmetric")
    if direction not in ("to_reparam", "to_original"):
        raise InvalidInputError(f"unknown direction {direction!r}")
    inverse = direction == "to_original"
    B = _block_diag([reparam_matrix(g, inverse) for g in knots])
    out = B @ cov @ B.T
    return 0.5 * (out + out.T)


def spline_curve(times, intercept, slope1, slope2, knot) -> np.ndarray:
    """Direct piecewise evaluation of the bilinear spline on the original scale."""
    t = np.asarray(times, dtype=float)
    return np.where(
        t <= knot,
        intercept + slope1 * t,
        intercept + slope1 * knot + slope2 * (t - knot),
    )


def implied_moments(params: ClassParameters, schedule: Schedule) -> ImpliedMoments:
    m = params.n_outcomes
    if schedule.mask.shape[1] != m:
        raise InvalidInputError(
            f"schedule has {schedule.mask.shape[1]} outcome column(s), class has {m}"
        )
    J = schedule.n_occasions
    blocks = [factor_loadings(schedule.times, g) for g in params.knots]
    lam = np.zeros((m * J, 3 * m))
    for u, L in enumerate(blocks):
        lam[u * J:(u + 1) * J, 3 * u:3 * u + 3] = L
    mean = lam @ params.mean.reshape(-1)
    cov = lam @ params.cov @ lam.T + np.kron(params.resid, np.eye(J))
    keep = schedule.mask.T.reshape(-1)
    if not keep.any():
        raise EmptyMomentsError("all entries are masked")
    cov = cov[np.ix_(keep, keep)]
    return ImpliedMoments(mean[keep], 0.5 * (cov + cov.T))
