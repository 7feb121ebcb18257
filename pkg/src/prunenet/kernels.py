"""Hot numeric kernels with numba and pure-numpy implementations.

Every public function here dispatches on :func:`prunenet._backend.get_backend`.
The numba path runs the hand-written loops below; the numpy path uses
vectorized numpy (and LAPACK for the eigen-solve). Both must agree to
round-off, which the test-suite checks.
"""
import math

import numpy as np

from . import _backend
from ._backend import njit

_MAX_QL_SWEEPS = 60


class EigenSolverError(ArithmeticError):
    pass


# ---------------------------------------------------------------------------
# symmetric eigenvalues: Householder tridiagonalization + implicit QL


@njit
def _tridiagonalize(a):
    # Householder reduction, eigenvalues only. Destroys ``a``.
    n = a.shape[0]
    d = np.zeros(n)
    e = np.zeros(n)
    for i in range(n - 1, 0, -1):
        l = i - 1
        h = 0.0
        if l > 0:
            scale = 0.0
            for k in range(l + 1):
                scale += abs(a[i, k])
            if scale == 0.0:
                e[i] = a[i, l]
            else:
                for k in range(l + 1):
                    a[i, k] /= scale
                    h += a[i, k] * a[i, k]
                f = a[i, l]
                g = -math.sqrt(h) if f >= 0.0 else math.sqrt(h)
                e[i] = scale * g
                h -= f * g
                a[i, l] = f - g
                f = 0.0
                for j in range(l + 1):
                    g = 0.0
                    for k in range(j + 1):
                        g += a[j, k] * a[i, k]
                    for k in range(j + 1, l + 1):
                        g += a[k, j] * a[i, k]
                    e[j] = g / h
                    f += e[j] * a[i, j]
                hh = f / (h + h)
                for j in range(l + 1):
                    f = a[i, j]
                    g = e[j] - hh * f
                    e[j] = g
                    for k in range(j + 1):
                        a[j, k] -= f * e[k] + g * a[i, k]
        else:
            e[i] = a[i, l]
        d[i] = h
    for i in range(n):
        d[i] = a[i, i]
    # shift so e[i] couples d[i] and d[i+1]
    for i in range(1, n):
        e[i - 1] = e[i]
    if n > 0:
        e[n - 1] = 0.0
    return d, e


@njit
def _tridiagonal_ql(d, e):
    # Implicit QL with Wilkinson-style shifts. Returns False on non-convergence.
    n = d.shape[0]
    eps = 2.220446049250313e-16
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            if it == _MAX_QL_SWEEPS:
                return False
            it += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return True


@njit
def _sym_eigvals_loops(a):
    work = a.copy()
    d, e = _tridiagonalize(work)
    ok = _tridiagonal_ql(d, e)
    d.sort()
    return d, ok


def sym_eigvals(a):
    """Eigenvalues of a real symmetric matrix, ascending."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if _backend.get_backend() == "numpy":
        return np.linalg.eigvalsh(a)
    values, ok = _sym_eigvals_loops(a)
    if not ok:
        raise EigenSolverError("implicit QL did not converge")
    return values


# ---------------------------------------------------------------------------
# two-sample Kolmogorov-Smirnov statistic


@njit
def _ks_sorted_loops(a, b):
    na = a.shape[0]
    nb = b.shape[0]
    i = 0
    j = 0
    best = 0.0
    while i < na and j < nb:
        x = a[i] if a[i] <= b[j] else b[j]
        while i < na and a[i] <= x:
            i += 1
        while j < nb and b[j] <= x:
            j += 1
        gap = abs(i / na - j / nb)
        if gap > best:
            best = gap
    return best


def _ks_sorted_numpy(a, b):
    support = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, support, side="right") / a.size
    cdf_b = np.searchsorted(b, support, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def ks_statistic(a_sorted, b_sorted):
    """sup |F_a - F_b| for two ascending float64 samples."""
    if _backend.get_backend() == "numpy":
        return _ks_sorted_numpy(a_sorted, b_sorted)
    return float(_ks_sorted_loops(a_sorted, b_sorted))


# ---------------------------------------------------------------------------
# two-sample Anderson-Darling statistic (midrank form, handles ties)


@njit
def _ad_sorted_loops(a, b):
    na = a.shape[0]
    nb = b.shape[0]
    big_n = na + nb
    z = np.sort(np.concatenate((a, b)))
    ia = 0
    ib = 0
    pos = 0
    acc_a = 0.0
    acc_b = 0.0
    while pos < big_n:
        x = z[pos]
        q = pos
        while q < big_n and z[q] == x:
            q += 1
        lj = q - pos
        start_a = ia
        while ia < na and a[ia] == x:
            ia += 1
        start_b = ib
        while ib < nb and b[ib] == x:
            ib += 1
        m_a = ia - 0.5 * (ia - start_a)
        m_b = ib - 0.5 * (ib - start_b)
        bj = pos + 0.5 * lj
        denom = bj * (big_n - bj) - big_n * lj / 4.0
        if denom > 0.0:
            acc_a += lj * (big_n * m_a - na * bj) ** 2 / denom
            acc_b += lj * (big_n * m_b - nb * bj) ** 2 / denom
        pos = q
    return (big_n - 1.0) / (big_n * big_n) * (acc_a / na + acc_b / nb)


def _ad_sorted_numpy(a, b):
    z = np.sort(np.concatenate([a, b]))
    big_n = z.size
    zstar = np.unique(z)
    left = np.searchsorted(z, zstar, side="left")
    lj = np.searchsorted(z, zstar, side="right") - left
    bj = left + lj / 2.0
    denom = bj * (big_n - bj) - big_n * lj / 4.0
    live = denom > 0
    total = 0.0
    for s in (a, b):
        right = np.searchsorted(s, zstar, side="right")
        fij = right - np.searchsorted(s, zstar, side="left")
        mij = right - fij / 2.0
        terms = lj[live] * (big_n * mij[live] - s.size * bj[live]) ** 2 / denom[live]
        total += terms.sum() / s.size
    return float((big_n - 1.0) / big_n**2 * total)


def ad_statistic(a_sorted, b_sorted):
    """k=2 Anderson-Darling statistic for two ascending float64 samples."""
    if _backend.get_backend() == "numpy":
        return _ad_sorted_numpy(a_sorted, b_sorted)
    return float(_ad_sorted_loops(a_sorted, b_sorted))
