"""Unconstrained encoding of the mixture parameters and the reporting-scale map.

Per class the block is laid out as

    means (3m) | Cholesky factor, row-major lower triangle, log diagonal (3m(3m+1)/2)
    | knots, logistic into the knot box (m) | log residual variances (m)
    | atanh residual correlation (1, only when m = 2)

followed by the gating coefficients, row-major ``(K-1, p+1)``.

The reporting scale is what the tables show: original-scale growth-factor
means, knots, original-scale growth-factor covariance (upper triangle),
residual variances and the residual covariance, then the gating
coefficients. Both vectors have the same length, so the Jacobian between
them is square.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from ..errors import InvalidInputError
from ..mixture import GatingParameters, MixtureModel
from ..spline import ClassParameters, reparam_matrix

GF_NAMES = ("intercept", "slope1", "slope2")


def class_block_size(m: int) -> int:
    q = 3 * m
    return q + q * (q + 1) // 2 + m + m + (1 if m == 2 else 0)


def n_free_parameters(K: int, m: int, p: int) -> int:
    return K * class_block_size(m) + (K - 1) * (p + 1)


@dataclass(frozen=True)
class ParameterLayout:
    K: int
    m: int
    p: int
    knot_bounds: tuple
    outcomes: tuple = ("y", "z")
    covariates: tuple = ()

    def __post_init__(self):
        lo, hi = self.knot_bounds
        if not hi > lo:
            raise InvalidInputError(f"empty knot box {self.knot_bounds}")
        if self.m not in (1, 2):
            raise InvalidInputError("only one or two parallel outcomes are supported")
        if len(self.outcomes) != self.m:
            raise InvalidInputError("outcome names do not match m")
        if not self.covariates:
            object.__setattr__(self, "covariates", tuple(f"x{j + 1}" for j in range(self.p)))

    @property
    def q(self) -> int:
        return 3 * self.m

    @property
    def block(self) -> int:
        return class_block_size(self.m)

    @property
    def size(self) -> int:
        return n_free_parameters(self.K, self.m, self.p)

    def class_slice(self, k: int) -> slice:
        return slice(k * self.block, (k + 1) * self.block)

    @property
    def gating_slice(self) -> slice:
        return slice(self.K * self.block, self.size)

    # -- class blocks -------------------------------------------------------

    def _tril(self):
        return np.tril_indices(self.q)

    def encode_class(self, c: ClassParameters) -> np.ndarray:
        lo, hi = self.knot_bounds
        L = np.linalg.cholesky(c.cov)
        rows, cols = self._tril()
        chol = L[rows, cols].copy()
        diag = rows == cols
        chol[diag] = np.log(chol[diag])
        frac = np.clip((c.knots - lo) / (hi - lo), 1e-12, 1 - 1e-12)
        var = np.diag(c.resid)
        parts = [c.mean.reshape(-1), chol, logit(frac), np.log(var)]
        if self.m == 2:
            corr = c.resid[0, 1] / np.sqrt(var[0] * var[1])
            parts.append([np.arctanh(np.clip(corr, -1 + 1e-15, 1 - 1e-15))])
        return np.concatenate(parts)

    def decode_class(self, u: np.ndarray) -> ClassParameters:
        q, m = self.q, self.m
        lo, hi = self.knot_bounds
        mean = u[:q].reshape(m, 3)
        ntri = q * (q + 1) // 2
        rows, cols = self._tril()
        vals = u[q:q + ntri].copy()
        diag = rows == cols
        vals[diag] = np.exp(vals[diag])
        L = np.zeros((q, q))
        L[rows, cols] = vals
        i = q + ntri
        knots = lo + (hi - lo) * expit(u[i:i + m])
        var = np.exp(u[i + m:i + 2 * m])
        resid = np.diag(var)
        if m == 2:
            cov = np.tanh(u[i + 2 * m]) * np.sqrt(var[0] * var[1])
            resid[0, 1] = resid[1, 0] = cov
        return ClassParameters(mean, knots, L @ L.T, resid)

    def cholesky_of(self, u_block: np.ndarray) -> np.ndarray:
        q = self.q
        ntri = q * (q + 1) // 2
        rows, cols = self._tril()
        vals = u_block[q:q + ntri].copy()
        diag = rows == cols
        vals[diag] = np.exp(vals[diag])
        L = np.zeros((q, q))
        L[rows, cols] = vals
        return L

    # -- whole vector -------------------------------------------------------

    def encode(self, model: MixtureModel) -> np.ndarray:
        if model.K != self.K or model.n_outcomes != self.m or model.n_covariates != self.p:
            raise InvalidInputError("model does not match the parameter layout")
        return np.concatenate(
            [self.encode_class(c) for c in model.classes] + [model.gating.coef.reshape(-1)]
        )

    def decode_gating(self, u: np.ndarray) -> GatingParameters:
        return GatingParameters(u[self.gating_slice].reshape(self.K - 1, self.p + 1))

    def decode(self, u: np.ndarray) -> MixtureModel:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.size,):
            raise InvalidInputError(f"expected {self.size} parameters, got {u.shape}")
        classes = tuple(self.decode_class(u[self.class_slice(k)]) for k in range(self.K))
        return MixtureModel(classes, self.decode_gating(u), self.outcomes)

    # -- reporting scale ----------------------------------------------------

    def class_names(self, k: int) -> list:
        """Reporting-scale names of class ``k`` (0-based index, 1-based label)."""
        m, q = self.m, self.q
        pre = f"c{k + 1}"
        names = [f"{pre}.{o}.mean_{g}" for o in self.outcomes for g in GF_NAMES]
        names += [f"{pre}.{o}.knot" for o in self.outcomes]
        labels = [(o, g) for o in self.outcomes for g in GF_NAMES]
        for i in range(q):
            for j in range(i, q):
                (oi, gi), (oj, gj) = labels[i], labels[j]
                if oi == oj:
                    names.append(f"{pre}.{oi}.var_{gi}" if gi == gj else f"{pre}.{oi}.cov_{gi}_{gj}")
                else:
                    names.append(f"{pre}.{oi}{oj}.cov_{gi}_{gj}")
        names += [f"{pre}.{o}.resid_var" for o in self.outcomes]
        if m == 2:
            names.append(f"{pre}.{''.join(self.outcomes)}.resid_cov")
        return names

    def gating_names(self) -> list:
        names = []
        for k in range(1, self.K):
            names.append(f"c{k + 1}.beta0")
            names += [f"c{k + 1}.beta.{c}" for c in self.covariates]
        return names

    def report_names(self) -> list:
        names = []
        for k in range(self.K):
            names += self.class_names(k)
        return names + self.gating_names()

    def report_class(self, c: ClassParameters) -> np.ndarray:
        q = self.q
        iu = np.triu_indices(q)
        parts = [c.original_mean().reshape(-1), c.knots, c.original_cov()[iu], np.diag(c.resid)]
        if self.m == 2:
            parts.append([c.resid[0, 1]])
        return np.concatenate(parts)

    def report_vector(self, model: MixtureModel) -> np.ndarray:
        return np.concatenate(
            [self.report_class(c) for c in model.classes] + [model.gating.coef.reshape(-1)]
        )

    def report_from_u(self, u: np.ndarray) -> np.ndarray:
        return self.report_vector(self.decode(u))

    def _class_jacobian(self, ub: np.ndarray) -> np.ndarray:
        m, q = self.m, self.q
        lo, hi = self.knot_bounds
        nb = self.block
        ntri = q * (q + 1) // 2
        i_knot = q + ntri
        i_var = i_knot + m
        c = self.decode_class(ub)
        L = self.cholesky_of(ub)
        s = expit(ub[i_knot:i_knot + m])
        dknot = (hi - lo) * s * (1 - s)
        Jac = np.zeros((nb, nb))

        # original means: eta0 = a - g (b - c), eta1 = b - c, eta2 = b + c
        for o in range(m):
            a, b, cc = c.mean[o]
            r = 3 * o
            g = c.knots[o]
            Jac[r, r:r + 3] = [1.0, -g, g]
            Jac[r, i_knot + o] = -(b - cc) * dknot[o]
            Jac[r + 1, r:r + 3] = [0.0, 1.0, -1.0]
            Jac[r + 2, r:r + 3] = [0.0, 1.0, 1.0]
        # knots
        for o in range(m):
            Jac[q + o, i_knot + o] = dknot[o]
        # original covariance C = Binv L L^T Binv^T
        Binv = np.zeros((q, q))
        for o in range(m):
            Binv[3 * o:3 * o + 3, 3 * o:3 * o + 3] = reparam_matrix(c.knots[o], inverse=True)
        iu = np.triu_indices(q)
        row0 = q + m
        rows, cols = np.tril_indices(q)
        for e, (a, b) in enumerate(zip(rows, cols)):
            dL = np.zeros((q, q))
            dL[a, b] = L[a, b] if a == b else 1.0
            dP = dL @ L.T + L @ dL.T
            Jac[row0:row0 + len(iu[0]), q + e] = (Binv @ dP @ Binv.T)[iu]
        P = c.cov
        for o in range(m):
            D = np.zeros((q, q))
            D[3 * o, 3 * o + 1:3 * o + 3] = [-1.0, 1.0]
            dC = D @ P @ Binv.T + Binv @ P @ D.T
            Jac[row0:row0 + len(iu[0]), i_knot + o] = dC[iu] * dknot[o]
        # residuals
        rr = row0 + len(iu[0])
        var = np.diag(c.resid)
        for o in range(m):
            Jac[rr + o, i_var + o] = var[o]
        if m == 2:
            w = ub[i_var + m]
            sd = np.sqrt(var[0] * var[1])
            rho = np.tanh(w)
            Jac[rr + m, i_var] = 0.5 * rho * sd
            Jac[rr + m, i_var + 1] = 0.5 * rho * sd
            Jac[rr + m, i_var + m] = (1 - rho**2) * sd
        return Jac

    def report_jacobian(self, u: np.ndarray) -> np.ndarray:
        """d(report_from_u)/du, assembled block by block (analytic)."""
        Jac = np.zeros((self.size, self.size))
        for k in range(self.K):
            sl = self.class_slice(k)
            Jac[sl, sl] = self._class_jacobian(u[sl])
        g = self.gating_slice
        Jac[g, g] = np.eye(g.stop - g.start)
        return Jac
