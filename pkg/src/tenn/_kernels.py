"""Compiled dynamic-programming kernels shared by the elastic measures and the cells.

Every alignment grid is laid out ``(n + 1) x (m + 1)``: row/column 0 hold the
virtual start, so sample cell ``(p, q)`` lives at grid position ``(p + 1, q + 1)``.
Two grids run side by side:

* the *cross* grid ``C`` multiplies ``K[p, q]`` (reference sample ``p`` against
  input sample ``q``) along every staircase path;
* the *self-aligned* grid ``T`` multiplies ``F[p, q]`` along staircase paths whose
  diagonal moves stay on one diagonal of the grid.

Rows are optionally rescaled to their maximum after they are filled; the running
log of the scale factors is returned so that every value can be restored
exactly (``true = scaled * exp(logscale[row])``).
"""

import numpy as np
import numba

_JIT = dict(nogil=True, cache=True)


@numba.njit(**_JIT)
def alignment_pass(K, F, diag_offset, rescale):
    """Forward recursion over the cross and self-aligned grids.

    Args:
        K: (n, m) local weights of the cross grid (zero outside any corridor).
        F: (n, m) local weights of the self-aligned grid.
        diag_offset: diagonal moves into sample cell (p, q) of the self-aligned
            grid are allowed only when ``p - q == diag_offset``; sample cell
            (0, 0) is always entered from the virtual start.
        rescale: normalise each row by its maximum.

    Returns:
        C, T: scaled grids, shape (n + 1, m + 1).
        SC, ST: (n, m) predecessor sums of each sample cell, expressed in the
            scale of the row above it (``logscale[p]``).
        logscale: (n + 1,) cumulative log scale of each grid row.
    """
    n, m = K.shape
    C = np.zeros((n + 1, m + 1))
    T = np.zeros((n + 1, m + 1))
    SC = np.zeros((n, m))
    ST = np.zeros((n, m))
    logscale = np.zeros(n + 1)
    C[0, 0] = 1.0
    T[0, 0] = 1.0
    for i in range(1, n + 1):
        p = i - 1
        for j in range(1, m + 1):
            q = j - 1
            sc = C[i - 1, j - 1] + C[i - 1, j] + C[i, j - 1]
            st = T[i - 1, j] + T[i, j - 1]
            if (p - q == diag_offset) or (p == 0 and q == 0):
                st += T[i - 1, j - 1]
            SC[p, q] = sc
            ST[p, q] = st
            C[i, j] = K[p, q] * sc
            T[i, j] = F[p, q] * st
        logscale[i] = logscale[i - 1]
        if rescale:
            mx = 0.0
            for j in range(m + 1):
                if C[i, j] > mx:
                    mx = C[i, j]
                if T[i, j] > mx:
                    mx = T[i, j]
            if mx > 0.0:
                inv = 1.0 / mx
                for j in range(m + 1):
                    C[i, j] *= inv
                    T[i, j] *= inv
                logscale[i] += np.log(mx)
    return C, T, SC, ST, logscale


@numba.njit(**_JIT)
def sq_dist_grid(A, B, W):
    """``out[p, q] = sum_k W[p, k] * (A[p, k] - B[q, k])**2``."""
    n, d = A.shape
    m = B.shape[0]
    out = np.empty((n, m))
    for p in range(n):
        for q in range(m):
            s = 0.0
            for k in range(d):
                diff = A[p, k] - B[q, k]
                s += W[p, k] * diff * diff
            out[p, q] = s
    return out


@numba.njit(**_JIT)
def kdtw_weights(x, y, nu, radius):
    """Local weight grids of the plain kernel between x (rows) and y (columns).

    Same-index comparisons read samples beyond a series' end as the zero vector.
    ``radius < 0`` means no corridor.
    """
    n, d = x.shape
    m = y.shape[0]
    L = max(n, m)
    same = np.empty(L)
    for p in range(L):
        s = 0.0
        for k in range(d):
            a = x[p, k] if p < n else 0.0
            b = y[p, k] if p < m else 0.0
            s += (a - b) * (a - b)
        same[p] = np.exp(-nu * s) / 3.0
    K = np.zeros((n, m))
    F = np.zeros((n, m))
    for p in range(n):
        for q in range(m):
            if radius >= 0 and abs(p - q) > radius:
                continue
            s = 0.0
            for k in range(d):
                diff = x[p, k] - y[q, k]
                s += diff * diff
            K[p, q] = np.exp(-nu * s) / 3.0
            F[p, q] = 0.5 * (same[p] + same[q])
    return K, F


@numba.njit(**_JIT)
def log_value(C, T, logscale):
    n = C.shape[0] - 1
    m = C.shape[1] - 1
    v = C[n, m] + T[n, m]
    if v > 0.0:
        return logscale[n] + np.log(v)
    return -np.inf


@numba.njit(**_JIT)
def kdtw_log(x, y, nu, radius, rescale):
    """Log KDTW with two rolling rows (O(m) memory), local weights computed on the fly."""
    n, d = x.shape
    m = y.shape[0]
    L = max(n, m)
    same = np.empty(L)
    for p in range(L):
        s = 0.0
        for k in range(d):
            a = x[p, k] if p < n else 0.0
            b = y[p, k] if p < m else 0.0
            s += (a - b) * (a - b)
        same[p] = np.exp(-nu * s) / 3.0
    Cp = np.zeros(m + 1)
    Tp = np.zeros(m + 1)
    Cc = np.zeros(m + 1)
    Tc = np.zeros(m + 1)
    Cp[0] = 1.0
    Tp[0] = 1.0
    logscale = 0.0
    for i in range(1, n + 1):
        p = i - 1
        Cc[0] = 0.0
        Tc[0] = 0.0
        for j in range(1, m + 1):
            q = j - 1
            if radius >= 0 and abs(p - q) > radius:
                Cc[j] = 0.0
                Tc[j] = 0.0
                continue
            s = 0.0
            for k in range(d):
                diff = x[p, k] - y[q, k]
                s += diff * diff
            st = Tp[j] + Tc[j - 1]
            if p == q or (p == 0 and q == 0):
                st += Tp[j - 1]
            Cc[j] = np.exp(-nu * s) / 3.0 * (Cp[j - 1] + Cp[j] + Cc[j - 1])
            Tc[j] = 0.5 * (same[p] + same[q]) * st
        if rescale:
            mx = 0.0
            for j in range(m + 1):
                mx = max(mx, Cc[j], Tc[j])
            if mx > 0.0:
                inv = 1.0 / mx
                for j in range(m + 1):
                    Cc[j] *= inv
                    Tc[j] *= inv
                logscale += np.log(mx)
        Cp, Cc = Cc, Cp
        Tp, Tc = Tc, Tp
    v = Cp[m] + Tp[m]
    if v > 0.0:
        return logscale + np.log(v)
    return -np.inf


@numba.njit(**_JIT)
def dtw(x, y, radius, squared):
    n, d = x.shape
    m = y.shape[0]
    D = np.full((n + 1, m + 1), np.inf)
    D[0, 0] = 0.0
    for i in range(1, n + 1):
        lo = 1
        hi = m
        if radius >= 0:
            lo = max(1, i - radius)
            hi = min(m, i + radius)
        for j in range(lo, hi + 1):
            c = 0.0
            for k in range(d):
                diff = x[i - 1, k] - y[j - 1, k]
                c += diff * diff
            if not squared:
                c = np.sqrt(c)
            D[i, j] = c + min(D[i - 1, j], D[i - 1, j - 1], D[i, j - 1])
    return D[n, m]


@numba.njit(**_JIT)
def cell_weights(R, At, Ac, X):
    """Gated local weights of a cell: E, K = Ac*E/3, F = Ac*(e_p + e_q)/6."""
    E = np.exp(-sq_dist_grid(R, X, At))
    n = E.shape[0]
    K = np.empty((n, n))
    F = np.empty((n, n))
    for p in range(n):
        for q in range(n):
            K[p, q] = Ac[p, q] * E[p, q] / 3.0
            F[p, q] = Ac[p, q] * (E[p, p] + E[q, q]) / 6.0
    return E, K, F


@numba.njit(**_JIT)
def _attended(R, At, X, p, q):
    s = 0.0
    for k in range(R.shape[1]):
        diff = R[p, k] - X[q, k]
        s += At[p, k] * diff * diff
    return np.exp(-s)


@numba.njit(**_JIT)
def _attended_row(R, At, X, p, out):
    """``out[q] = exp(-sum_k At[p, k] (R[p, k] - X[q, k])^2)`` for all q."""
    out[:] = 0.0
    for k in range(R.shape[1]):
        r = R[p, k]
        a = At[p, k]
        for q in range(out.shape[0]):
            diff = r - X[q, k]
            out[q] += a * diff * diff
    for q in range(out.shape[0]):
        out[q] = np.exp(-out[q])


@numba.njit(**_JIT)
def cell_log_output(R, At, Ac, X):
    """Log cell output with rolling rows; E is evaluated on the fly."""
    n = R.shape[0]
    ed = np.empty(n)
    for p in range(n):
        ed[p] = _attended(R, At, X, p, p)
    Cp = np.zeros(n + 1)
    Tp = np.zeros(n + 1)
    Cc = np.zeros(n + 1)
    Tc = np.zeros(n + 1)
    e = np.empty(n)
    Cp[0] = 1.0
    Tp[0] = 1.0
    logscale = 0.0
    for i in range(1, n + 1):
        p = i - 1
        _attended_row(R, At, X, p, e)
        Cc[0] = 0.0
        Tc[0] = 0.0
        for j in range(1, n + 1):
            q = j - 1
            a = Ac[p, q]
            if a == 0.0:
                Cc[j] = 0.0
                Tc[j] = 0.0
                continue
            st = Tp[j] + Tc[j - 1]
            if p == q:
                st += Tp[j - 1]
            Cc[j] = a * e[q] / 3.0 * (Cp[j - 1] + Cp[j] + Cc[j - 1])
            Tc[j] = a * (ed[p] + ed[q]) / 6.0 * st
        mx = 0.0
        for j in range(n + 1):
            mx = max(mx, Cc[j], Tc[j])
        if mx > 0.0:
            inv = 1.0 / mx
            for j in range(n + 1):
                Cc[j] *= inv
                Tc[j] *= inv
            logscale += np.log(mx)
        Cp, Cc = Cc, Cp
        Tp, Tc = Tc, Tp
    v = Cp[n] + Tp[n]
    if v > 0.0:
        return logscale + np.log(v)
    return -np.inf


@numba.njit(**_JIT)
def _cell_sums(R, At, Ac, X, ed, reverse):
    """Predecessor sums of a square cell grid, forward or in reversed time.

    Returns ``S`` (n, n, 2) holding the cross and self-aligned sums,
    ``logscale`` (n + 1,) as in ``alignment_pass`` and the log of the final
    grid value. With ``reverse`` the weights at (p, q) are read from
    (n-1-p, n-1-q) and the sums are stored at that mirrored cell, so both
    directions index ``S`` by original grid coordinates.
    """
    n = R.shape[0]
    S = np.empty((n, n, 2))
    logscale = np.zeros(n + 1)
    e = np.empty(n)
    Cp = np.zeros(n + 1)
    Tp = np.zeros(n + 1)
    Cc = np.zeros(n + 1)
    Tc = np.zeros(n + 1)
    Cp[0] = 1.0
    Tp[0] = 1.0
    for i in range(1, n + 1):
        p = i - 1
        op = n - 1 - p if reverse else p
        _attended_row(R, At, X, op, e)
        Cc[0] = 0.0
        Tc[0] = 0.0
        for j in range(1, n + 1):
            q = j - 1
            oq = n - 1 - q if reverse else q
            sc = Cp[j - 1] + Cp[j] + Cc[j - 1]
            st = Tp[j] + Tc[j - 1]
            if p == q:
                st += Tp[j - 1]
            S[op, oq, 0] = sc
            S[op, oq, 1] = st
            a = Ac[op, oq]
            Cc[j] = a * e[oq] / 3.0 * sc
            Tc[j] = a * (ed[op] + ed[oq]) / 6.0 * st
        logscale[i] = logscale[i - 1]
        mx = 0.0
        for j in range(n + 1):
            mx = max(mx, Cc[j], Tc[j])
        if mx > 0.0:
            inv = 1.0 / mx
            for j in range(n + 1):
                Cc[j] *= inv
                Tc[j] *= inv
            logscale[i] += np.log(mx)
        Cp, Cc = Cc, Cp
        Tp, Tc = Tc, Tp
    v = Cp[n] + Tp[n]
    logv = logscale[n] + np.log(v) if v > 0.0 else -np.inf
    return S, logscale, logv


@numba.njit(**_JIT)
def cell_gradients(R, At, Ac, X):
    """Cell output and its gradients via a reversed pass and a fused forward pass.

    Returns ``(logz, ref, dR, dAt, dAc)`` where the gradient arrays hold
    ``d z / d theta * exp(-ref)``; ``ref`` equals ``logz`` whenever z > 0.
    The path mass through cell (p, q) is the product of its forward
    predecessor sum, the reversed predecessor sum of the mirrored cell and
    the row scale factors, so only the reversed sums are stored.
    """
    n, d = R.shape
    ed = np.empty(n)
    for p in range(n):
        ed[p] = _attended(R, At, X, p, p)
    B, lb, logz = _cell_sums(R, At, Ac, X, ed, True)
    ref = logz if np.isfinite(logz) else 0.0

    dAc = np.zeros((n, n))
    dR = np.zeros((n, d))
    dAt = np.zeros((n, d))
    # the self-aligned weight of (p, q) depends on E[p, p] and E[q, q]
    ge_diag = np.zeros(n)
    Cp = np.zeros(n + 1)
    Tp = np.zeros(n + 1)
    Cc = np.zeros(n + 1)
    Tc = np.zeros(n + 1)
    Cp[0] = 1.0
    Tp[0] = 1.0
    e_row = np.empty(n)
    la = 0.0
    for i in range(1, n + 1):
        p = i - 1
        rp = n - 1 - p
        w = np.exp(la + lb[rp] - ref)
        _attended_row(R, At, X, p, e_row)
        Cc[0] = 0.0
        Tc[0] = 0.0
        for j in range(1, n + 1):
            q = j - 1
            sc = Cp[j - 1] + Cp[j] + Cc[j - 1]
            st = Tp[j] + Tc[j - 1]
            if p == q:
                st += Tp[j - 1]
            a = Ac[p, q]
            e = e_row[q]
            Cc[j] = a * e / 3.0 * sc
            Tc[j] = a * (ed[p] + ed[q]) / 6.0 * st
            gk = sc * B[p, q, 0] * w
            gf = st * B[p, q, 1] * w
            dAc[p, q] = gk * e / 3.0 + gf * (ed[p] + ed[q]) / 6.0
            h = gf * a / 6.0
            ge_diag[p] += h
            ge_diag[q] += h
            g = gk * a / 3.0 * e
            if g == 0.0:
                continue
            for k in range(d):
                diff = R[p, k] - X[q, k]
                dR[p, k] -= 2.0 * g * At[p, k] * diff
                dAt[p, k] -= g * diff * diff
        mx = 0.0
        for j in range(n + 1):
            mx = max(mx, Cc[j], Tc[j])
        if mx > 0.0:
            inv = 1.0 / mx
            for j in range(n + 1):
                Cc[j] *= inv
                Tc[j] *= inv
            la += np.log(mx)
        Cp, Cc = Cc, Cp
        Tp, Tc = Tc, Tp
    for p in range(n):
        g = ge_diag[p] * ed[p]
        for k in range(d):
            diff = R[p, k] - X[p, k]
            dR[p, k] -= 2.0 * g * At[p, k] * diff
            dAt[p, k] -= g * diff * diff
    return logz, ref, dR, dAt, dAc
