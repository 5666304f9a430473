"""Factored long-product engine.

A product of 2W x 2W matrices is held as U * diag(exp(sig)) * Vt with U
orthonormal columns, sig log scales sorted descending, Vt orthogonal.
One step multiplies the next matrix on the left and restores the factored
form with an implicitly scaled one-sided Jacobi SVD: each column lives as
a unit vector plus a separate log scale, so the scale spread never touches
floating-point range no matter how long the product runs.  A plain
"subtract sig_1 and exponentiate" refactorization would flush the small
half of the spectrum to zero once the spread passes ~700 log units (a few
hundred steps); the rotation algebra below is exact for arbitrary spread.

Rotation update for one column pair, scales a >= b, unit vectors p, q,
g = <p, q>, rho = exp(b - a):
    w = (1 - rho^2) / (2 g)                       (rho * cot(2 theta) term)
    u = sign(g) / (|w| + sqrt(w^2 + rho^2))       (= tan(theta) / rho)
    t = u * rho,  c = 1/sqrt(1+t^2),  s = c * t
    new hi column  = c * p + (s * rho) * q        (relative change ~ rho^2)
    new lo column  = -(c * u) * p + c * q         (finite even when rho
                                                   underflows: s/rho = c*u)
Both updates use only bounded quantities; rho may underflow to 0 exactly,
in which case the lo update reduces to projecting p out of q and the hi
column is untouched, which is the correct limit.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


JACOBI_TOL = 1e-14
MAX_SWEEPS = 60


@njit(cache=True)
def advance(U, sig, Vt, tstack):  # pragma: no cover - exercised via wrappers
    """Left-multiply the factored product by each matrix in tstack, in order.

    Mutates U (m x K, unit columns), sig (K,), Vt (K x K).  Returns
    (worst_pairing, status): worst_pairing is the largest relative
    reciprocal-pair defect max_j |sig_j + sig_{K-1-j}| / max(1, sig_0) seen
    after any step when K == m (full-width state), else 0; status is 0 on
    success, 1 if a Jacobi pass failed to converge, 2 on a breakdown
    (exactly dependent columns, impossible for invertible factors).
    """
    m, K = U.shape
    nsteps = tstack.shape[0]
    B = np.empty((m, K))
    sig2 = np.empty(K)
    Vt2 = np.empty((K, K))
    order = np.empty(K, dtype=np.int64)
    worst = 0.0
    for step in range(nsteps):
        T = tstack[step]
        # B = T @ U, written out for small fixed sizes
        for c in range(K):
            for i in range(m):
                acc = 0.0
                for k in range(m):
                    acc += T[i, k] * U[k, c]
                B[i, c] = acc
        # absorb column norms into the log scales
        for c in range(K):
            ss = 0.0
            for i in range(m):
                ss += B[i, c] * B[i, c]
            if ss == 0.0:
                return worst, 2
            nrm = math.sqrt(ss)
            sig[c] += math.log(nrm)
            inv = 1.0 / nrm
            for i in range(m):
                B[i, c] *= inv
        # one-sided Jacobi sweeps on the implicit columns exp(sig_c) * B[:, c]
        converged = False
        for _sweep in range(MAX_SWEEPS):
            off = 0.0
            for a in range(K):
                for b in range(a + 1, K):
                    g = 0.0
                    for i in range(m):
                        g += B[i, a] * B[i, b]
                    ag = abs(g)
                    if ag <= JACOBI_TOL:
                        continue
                    if ag > off:
                        off = ag
                    if sig[a] >= sig[b]:
                        hi, lo = a, b
                    else:
                        hi, lo = b, a
                    rho = math.exp(sig[lo] - sig[hi])
                    w = (1.0 - rho * rho) / (2.0 * g)
                    u = math.copysign(1.0, g) / (abs(w) + math.sqrt(w * w + rho * rho))
                    t = u * rho
                    cth = 1.0 / math.sqrt(1.0 + t * t)
                    sth = cth * t
                    s_over_rho = cth * u
                    srho = sth * rho
                    nx2 = 0.0
                    ny2 = 0.0
                    for i in range(m):
                        xi = B[i, hi]
                        yi = B[i, lo]
                        rx = cth * xi + srho * yi
                        ry = cth * yi - s_over_rho * xi
                        B[i, hi] = rx
                        B[i, lo] = ry
                        nx2 += rx * rx
                        ny2 += ry * ry
                    if nx2 == 0.0 or ny2 == 0.0:
                        return worst, 2
                    nx = math.sqrt(nx2)
                    ny = math.sqrt(ny2)
                    sig[hi] += math.log(nx)
                    sig[lo] += math.log(ny)
                    invx = 1.0 / nx
                    invy = 1.0 / ny
                    for i in range(m):
                        B[i, hi] *= invx
                        B[i, lo] *= invy
                    # same plane rotation acts on the right frame rows
                    for i in range(K):
                        vh = Vt[hi, i]
                        vl = Vt[lo, i]
                        Vt[hi, i] = cth * vh + sth * vl
                        Vt[lo, i] = cth * vl - sth * vh
            if off <= JACOBI_TOL:
                converged = True
                break
        if not converged:
            return worst, 1
        # stable descending sort of the scales; permute columns and rows along
        for a in range(K):
            order[a] = a
        for a in range(1, K):
            ia = order[a]
            key = sig[ia]
            b = a - 1
            while b >= 0 and sig[order[b]] < key:
                order[b + 1] = order[b]
                b -= 1
            order[b + 1] = ia
        for c in range(K):
            oc = order[c]
            sig2[c] = sig[oc]
            for i in range(m):
                U[i, c] = B[i, oc]
            for i in range(K):
                Vt2[c, i] = Vt[oc, i]
        for c in range(K):
            sig[c] = sig2[c]
            for i in range(K):
                Vt[c, i] = Vt2[c, i]
        if K == m:
            top = sig[0] if sig[0] > 1.0 else 1.0
            for j in range(K // 2):
                r = abs(sig[j] + sig[K - 1 - j]) / top
                if r > worst:
                    worst = r
    return worst, 0


def warmup():
    """Trigger JIT compilation once (cached on disk afterwards)."""
    U = np.eye(2)
    sig = np.zeros(2)
    Vt = np.eye(2)
    advance(U, sig, Vt, np.eye(2)[None, :, :])
