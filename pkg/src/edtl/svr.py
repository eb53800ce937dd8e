"""epsilon-insensitive support vector regression with a Gaussian RBF kernel.

The dual is solved with a two-variable SMO solver that picks the maximal
KKT-violating pair each iteration (first-order working set selection), in
the 2N-variable form

    min_a  0.5 a'Qa + p'a   s.t.  s'a = 0,  0 <= a <= C

with ``a = [alpha; alpha*]``, ``s = [+1..; -1..]``, ``Q_tu = s_t s_u K``
and ``p = [eps - y; eps + y]``. Fitted coefficients are ``alpha - alpha*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_TAU = 1e-12


class SVRError(ValueError):
    pass


@dataclass(frozen=True)
class SVRHyperParams:
    C: float = 1.0
    epsilon: float = 0.1
    gamma: float | None = None  # None: median heuristic at fit time

    def __post_init__(self):
        if not self.C > 0:
            raise SVRError("C must be positive")
        if not self.epsilon >= 0:
            raise SVRError("epsilon must be non-negative")
        if self.gamma is not None and not self.gamma > 0:
            raise SVRError("gamma must be positive")


@dataclass(frozen=True, eq=False)
class SVRModel:
    support_points: np.ndarray  # (n_sv, d)
    dual_coefs: np.ndarray  # alpha - alpha*, one per support point
    bias: float
    gamma: float
    hyper: SVRHyperParams = field(default_factory=SVRHyperParams)
    converged: bool = True
    n_iter: int = 0
    dual_objective: float = 0.0
    objective_history: tuple[float, ...] = ()
    support_index: np.ndarray | None = None  # rows of the training set

    @property
    def dim(self) -> int:
        return self.support_points.shape[1]

    def predict(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.dim:
            raise SVRError(f"input has {z.shape[1]} dims, model expects {self.dim}")
        if len(self.dual_coefs) == 0:
            return np.full(z.shape[0], self.bias)
        return kernel_matrix(z, self.support_points, self.gamma) @ self.dual_coefs + self.bias

    def to_dict(self) -> dict:
        return {
            "support_points": [[float(v) for v in row] for row in self.support_points],
            "dual_coefs": [float(v) for v in self.dual_coefs],
            "bias": float(self.bias),
            "gamma": float(self.gamma),
            "dim": int(self.dim),
            "hyper": {"C": self.hyper.C, "epsilon": self.hyper.epsilon,
                      "gamma": self.hyper.gamma},
            "converged": self.converged,
            "n_iter": self.n_iter,
            "dual_objective": float(self.dual_objective),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SVRModel:
        pts = np.array(d["support_points"], dtype=float).reshape(-1, d["dim"])
        return cls(pts, np.array(d["dual_coefs"], dtype=float), float(d["bias"]),
                   float(d["gamma"]), SVRHyperParams(**d["hyper"]),
                   bool(d["converged"]), int(d["n_iter"]), float(d["dual_objective"]))


def rbf_kernel(z, z2, gamma: float) -> float:
    z = np.asarray(z, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z.shape != z2.shape:
        raise SVRError("kernel arguments differ in length")
    if not gamma > 0:
        raise SVRError("gamma must be positive")
    d = z - z2
    return math.exp(-float(d @ d) / (2.0 * gamma * gamma))


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.maximum(d2, 0.0)


def kernel_matrix(a, b, gamma: float) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return np.exp(-_sq_dists(a, b) / (2.0 * gamma * gamma))


def median_gamma(Z, max_points: int = 2000, seed: int = 0) -> float:
    """Width that gives the median pair of points a kernel value of 1/e.

    Large inputs are subsampled (seeded) to ``max_points`` rows.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] < 2:
        raise SVRError("need at least two points")
    if Z.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(Z.shape[0], max_points, replace=False)
        Z = Z[np.sort(idx)]
    iu = np.triu_indices(Z.shape[0], k=1)
    d = np.sqrt(_sq_dists(Z, Z)[iu])
    med = float(np.median(d))
    if med <= 0:
        nz = d[d > 0]
        if nz.size == 0:
            return 1.0
        med = float(np.median(nz))
    return med / math.sqrt(2.0)


def dual_objective(beta: np.ndarray, K: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    """Maximisation-form dual value for coefficients ``beta = alpha - alpha*``
    with complementary alpha, alpha*."""
    return float(-0.5 * beta @ K @ beta - epsilon * np.abs(beta).sum() + y @ beta)


def fit_svr(Z, y, hp: SVRHyperParams | None = None, tol: float = 1e-3,
            max_passes: int | None = None) -> SVRModel:
    """Fit an epsilon-SVR.

    Stops once the maximal KKT violation drops below ``tol`` or after
    ``max_passes`` passes (default ``10 * N``), a pass being N pair updates;
    in the latter case the model is returned with ``converged=False``.
    ``objective_history`` holds the dual objective at the start of each pass
    and at return.
    """
    hp = hp or SVRHyperParams()
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = Z.shape[0]
    if n < 2:
        raise SVRError("need at least two samples")
    if y.shape[0] != n:
        raise SVRError("Z and y differ in length")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(y))):
        raise SVRError("non-finite input")
    gamma = hp.gamma if hp.gamma is not None else median_gamma(Z)
    if max_passes is None:
        max_passes = 10 * n
    K = kernel_matrix(Z, Z, gamma)
    C, eps = hp.C, hp.epsilon

    s = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([eps - y, eps + y])
    a = np.zeros(2 * n)
    G = p.copy()
    kd = np.diag(K).copy()

    def q_col(t):
        col = K[:, t % n]
        return s * s[t] * np.concatenate([col, col])

    history = []
    it = 0
    converged = False
    while True:
        up = ((s > 0) & (a < C)) | ((s < 0) & (a > 0))
        low = ((s > 0) & (a > 0)) | ((s < 0) & (a < C))
        minus_sg = -s * G
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, minus_sg, -np.inf)))
        j = int(np.argmin(np.where(low, minus_sg, np.inf)))
        if minus_sg[i] - minus_sg[j] < tol:
            converged = True
            break
        if it >= max_passes * n:
            break
        if it % n == 0:
            history.append(-0.5 * float(a @ (G + p)))
        it += 1

        Qi, Qj = q_col(i), q_col(j)
        ai_old, aj_old = a[i], a[j]
        qii, qjj = kd[i % n], kd[j % n]
        if s[i] != s[j]:
            quad = max(qii + qjj + 2.0 * Qi[j], _TAU)
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            quad = max(qii + qjj - 2.0 * Qi[j], _TAU)
            delta = (G[i] - G[j]) / quad
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total
        G += Qi * (a[i] - ai_old) + Qj * (a[j] - aj_old)

    # Cancel any common part of alpha_i and alpha*_i: beta is unchanged and
    # the epsilon term of the objective can only improve.
    beta = a[:n] - a[n:]
    a = np.concatenate([np.maximum(beta, 0.0), np.maximum(-beta, 0.0)])
    Kb = K @ beta
    G = np.concatenate([Kb, -Kb]) + p
    bias = -_rho(a, G, s, C)
    obj = dual_objective(beta, K, y, eps)
    history.append(obj)

    sv = np.flatnonzero(beta != 0)
    return SVRModel(Z[sv].copy(), beta[sv].copy(), float(bias), float(gamma), hp,
                    converged, it, obj, tuple(history), sv)


def _rho(a, G, s, C) -> float:
    sg = s * G
    upper = a >= C
    lower = a <= 0
    free = ~(upper | lower)
    if free.any():
        return float(sg[free].mean())
    ub_mask = (upper & (s < 0)) | (lower & (s > 0))
    lb_mask = (upper & (s > 0)) | (lower & (s < 0))
    ub = sg[ub_mask].min() if ub_mask.any() else np.inf
    lb = sg[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


def predict_svr(model: SVRModel, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.ndim != 1:
        raise SVRError("expected a single vector")
    return float(model.predict(z)[0])


def kkt_residuals(model: SVRModel, Z, y) -> np.ndarray:
    """Per-point violation of the epsilon-SVR optimality conditions.

    ``Z`` must be the training inputs in their original order; points that
    are not support vectors are matched to a zero coefficient.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    y = np.asarray(y, dtype=float)
    C, eps = model.hyper.C, model.hyper.epsilon
    beta = _coefs_for(model, Z)
    r = y - model.predict(Z)
    res = np.empty_like(r)
    tiny = 1e-12 * C
    for k, (b, rk) in enumerate(zip(beta, r)):
        if abs(b) <= tiny:
            res[k] = max(0.0, abs(rk) - eps)
        elif b >= C - tiny:
            res[k] = max(0.0, eps - rk)
        elif b <= -C + tiny:
            res[k] = max(0.0, rk + eps)
        elif b > 0:
            res[k] = abs(rk - eps)
        else:
            res[k] = abs(rk + eps)
    return res


def _coefs_for(model: SVRModel, Z: np.ndarray) -> np.ndarray:
    beta = np.zeros(Z.shape[0])
    if len(model.dual_coefs) == 0:
        return beta
    if model.support_index is not None:
        beta[model.support_index] = model.dual_coefs
        return beta
    # Support points are stored in training order, so a forward scan matches
    # each to its first unused equal row.
    k = 0
    for t in range(Z.shape[0]):
        if k < len(model.dual_coefs) and np.array_equal(Z[t], model.support_points[k]):
            beta[t] = model.dual_coefs[k]
            k += 1
    if k != len(model.dual_coefs):
        raise SVRError("support points are not a subsequence of Z")
    return beta
