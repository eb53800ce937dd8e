"""Independent reference computations used as test oracles.

Nothing here imports the code under test's solvers; kernels are evaluated
from their closed form directly.
"""

import math

import numpy as np


def rbf_gram(Z, gamma):
    Z = np.asarray(Z, dtype=float)
    n = Z.shape[0]
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            d = Z[i] - Z[j]
            K[i, j] = math.exp(-float(d @ d) / (2 * gamma * gamma))
    return K


def _project(v, s, C):
    """Euclidean projection onto {0 <= a <= C, s'a = 0}.

    The constraint residual g(lam) = s'clip(v - lam*s, 0, C) is piecewise
    linear and non-increasing in lam; evaluate it at every breakpoint and
    interpolate inside the bracketing segment.
    """
    bps = np.unique(np.concatenate([v / s, (v - C) / s]))
    a = np.clip(v[None, :] - bps[:, None] * s[None, :], 0.0, C)
    g = a @ s
    # g > 0 left of all breakpoints and < 0 right of them (both signs occur).
    k = int(np.flatnonzero(g <= 0)[0])
    if g[k] == 0:
        return a[k]
    l0, l1, g0, g1 = bps[k - 1], bps[k], g[k - 1], g[k]
    lam = l0 if g0 == g1 else l0 + (l1 - l0) * g0 / (g0 - g1)
    return np.clip(v - lam * s, 0.0, C)


def svr_dual_projected_gradient(Z, y, C, epsilon, gamma, iters=20000):
    """Accelerated projected gradient on the 2N-variable epsilon-SVR dual.

    Returns (beta, dual objective in maximisation form).
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    K = rbf_gram(Z, gamma)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    Q = np.outer(s, s) * np.block([[K, K], [K, K]])
    p = np.concatenate([epsilon - y, epsilon + y])
    L = np.linalg.eigvalsh(Q).max()
    step = 1.0 / L
    a = np.zeros(2 * n)
    w = a.copy()
    t = 1.0
    for _ in range(iters):
        a_new = _project(w - step * (Q @ w + p), s, C)
        if np.abs(a_new - a).max() < 1e-14:
            a = a_new
            break
        t_new = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        w = a_new + (t - 1) / t_new * (a_new - a)
        a, t = a_new, t_new
    beta = a[:n] - a[n:]
    obj = -0.5 * beta @ K @ beta - epsilon * np.abs(beta).sum() + y @ beta
    return beta, float(obj)


def brute_knn(X, y, q, k):
    dists = [(float(np.sqrt(((x - q) ** 2).sum())), i) for i, x in enumerate(X)]
    dists.sort()
    return float(np.mean([y[i] for _, i in dists[:k]]))


def closed_batch_moisture(t, M0, Me, K):
    return Me + (M0 - Me) * math.exp(-K * t)
