"""Compiled kernels for the small learners.

Boosting runs on *cells*: rows that share the same bin on every feature
always carry the same score, so they are collapsed to a count and an outcome
sum before fitting.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _cell_loss(F, cnt, sy, logistic):
    total = 0.0
    for c in range(F.shape[0]):
        f = F[c]
        if logistic:
            if f > 0:
                total += cnt[c] * (f + np.log1p(np.exp(-f))) - sy[c] * f
            else:
                total += cnt[c] * np.log1p(np.exp(f)) - sy[c] * f
        else:
            total += 0.5 * cnt[c] * f * f - sy[c] * f
    return total


@njit(cache=True)
def boost_cells(bins, nbins, cnt, sy, F0, rounds, shrinkage, reg, logistic, record):
    """Second-order boosting of depth-one stumps over collapsed cells.

    ``bins[c, j]`` is the bin of cell ``c`` on feature ``j``; a split after
    bin ``b`` sends bins ``<= b`` left. Returns per-round feature (-1 for an
    intercept-only round), split bin, left value, right value, and the
    (unnormalized, up to a constant for squared error) loss after each round
    when ``record`` is set (NaN otherwise).

    A step is accepted without evaluating the loss when the curvature bound
    (logistic curvature is at most 1/4 per row) certifies a decrease;
    otherwise it is halved until the exact loss does not increase.
    """
    m, d = bins.shape
    max_bins = 1
    for j in range(d):
        if nbins[j] > max_bins:
            max_bins = nbins[j]
    F = np.full(m, F0)
    Fn = np.empty(m)
    g = np.empty(m)
    h = np.empty(m)
    G = np.empty(max_bins)
    H = np.empty(max_bins)
    feat = np.full(rounds, -1, dtype=np.int64)
    split = np.zeros(rounds, dtype=np.int64)
    left = np.zeros(rounds)
    right = np.zeros(rounds)
    losses = np.full(rounds + 1, np.nan)
    current = np.nan
    if record:
        current = _cell_loss(F, cnt, sy, logistic)
        losses[0] = current
    for r in range(rounds):
        Gt = 0.0
        Ht = 0.0
        for c in range(m):
            if logistic:
                mu = 1.0 / (1.0 + np.exp(-F[c]))
                g[c] = cnt[c] * mu - sy[c]
                h[c] = max(cnt[c] * mu * (1.0 - mu), 1e-12)
            else:
                g[c] = cnt[c] * F[c] - sy[c]
                h[c] = cnt[c]
            Gt += g[c]
            Ht += h[c]
        base = Gt * Gt / (Ht + reg)
        best_gain = 1e-12
        best_j = -1
        best_b = 0
        best_gl = 0.0
        best_hl = 0.0
        for j in range(d):
            nb = nbins[j]
            if nb < 2:
                continue
            for b in range(nb):
                G[b] = 0.0
                H[b] = 0.0
            for c in range(m):
                G[bins[c, j]] += g[c]
                H[bins[c, j]] += h[c]
            gl = 0.0
            hl = 0.0
            for b in range(nb - 1):
                gl += G[b]
                hl += H[b]
                gr = Gt - gl
                hr = Ht - hl
                gain = gl * gl / (hl + reg) + gr * gr / (hr + reg) - base
                if gain > best_gain:
                    best_gain = gain
                    best_j = j
                    best_b = b
                    best_gl = gl
                    best_hl = hl
        if best_j >= 0:
            hl = best_hl
            hr = Ht - best_hl
            wl = -best_gl / (hl + reg) * shrinkage
            wr = -(Gt - best_gl) / (hr + reg) * shrinkage
        else:
            hl = Ht
            hr = 0.0
            wl = -Gt / (Ht + reg) * shrinkage
            wr = wl
        nl = 0.0
        nr = 0.0
        for c in range(m):
            if best_j >= 0 and bins[c, best_j] > best_b:
                nr += cnt[c]
            else:
                nl += cnt[c]
        curv = 0.25 if logistic else 1.0
        safe = shrinkage * curv * nl < 2.0 * (hl + reg) and (
            nr == 0.0 or shrinkage * curv * nr < 2.0 * (hr + reg))
        accepted = False
        new_loss = np.nan
        for _ in range(30):
            for c in range(m):
                if best_j >= 0 and bins[c, best_j] > best_b:
                    Fn[c] = F[c] + wr
                else:
                    Fn[c] = F[c] + wl
            if safe and not record:
                accepted = True
                break
            if current != current:
                current = _cell_loss(F, cnt, sy, logistic)
            new_loss = _cell_loss(Fn, cnt, sy, logistic)
            if new_loss <= current:
                accepted = True
                break
            wl *= 0.5
            wr *= 0.5
        if accepted:
            F[:] = Fn
            current = new_loss
        else:
            wl = 0.0
            wr = 0.0
        feat[r] = best_j
        split[r] = best_b
        left[r] = wl
        right[r] = wr
        if record:
            losses[r + 1] = current
    return feat, split, left, right, losses


@njit(cache=True)
def _logit_objective(Z, y, beta, pen):
    total = 0.0
    n, k = Z.shape
    for i in range(n):
        eta = 0.0
        for a in range(k):
            eta += Z[i, a] * beta[a]
        if eta > 0:
            total += eta + np.log1p(np.exp(-eta)) - y[i] * eta
        else:
            total += np.log1p(np.exp(eta)) - y[i] * eta
    for a in range(k):
        total += 0.5 * pen[a] * beta[a] * beta[a]
    return total


@njit(cache=True)
def ridge_logistic_newton(Z, y, beta0, pen, max_iter, tol):
    """Damped Newton for ridge-penalized logistic regression.

    ``Z`` carries the intercept column; ``pen`` is the per-coefficient penalty.
    """
    n, k = Z.shape
    beta = beta0.copy()
    obj = _logit_objective(Z, y, beta, pen)
    grad = np.empty(k)
    hess = np.empty((k, k))
    for _ in range(max_iter):
        grad[:] = 0.0
        hess[:, :] = 0.0
        for i in range(n):
            eta = 0.0
            for a in range(k):
                eta += Z[i, a] * beta[a]
            mu = 1.0 / (1.0 + np.exp(-eta))
            w = mu * (1.0 - mu)
            r = mu - y[i]
            for a in range(k):
                grad[a] += Z[i, a] * r
                za = Z[i, a] * w
                for b in range(a, k):
                    hess[a, b] += za * Z[i, b]
        for a in range(k):
            grad[a] += pen[a] * beta[a]
            hess[a, a] += pen[a] + 1e-12
            for b in range(a):
                hess[a, b] = hess[b, a]
        step = np.linalg.solve(hess, grad)
        t = 1.0
        cand = beta - step
        cand_obj = _logit_objective(Z, y, cand, pen)
        while cand_obj > obj and t > 1e-10:
            t *= 0.5
            cand = beta - t * step
            cand_obj = _logit_objective(Z, y, cand, pen)
        if cand_obj > obj:
            break
        beta = cand
        obj = cand_obj
        biggest = 0.0
        for a in range(k):
            if abs(t * step[a]) > biggest:
                biggest = abs(t * step[a])
        if biggest < tol:
            break
    return beta
