"""Hot numeric kernels: numba-compiled when available, pure numpy otherwise.

Set MOMENTBOUNDS_NO_NUMBA=1 to force the pure-numpy path (the same
implementations, uncompiled).  Every kernel is written in the numba-nopython
subset of numpy so both paths execute identical code.

Conventions shared by the solver kernels:
  - Hermitian matrices are complex128 (d, d) arrays.
  - Row-block state arrays Z, Y, Lam are (nrows, d, d) and updated in place.
  - ``class_id`` maps each matrix entry to its equivalence class under the
    span of the feature outer products; -1 marks entries orthogonal to the
    span.  Classwise averaging is the orthogonal projection onto the span.
  - ``cm``/``cn`` are the per-row coefficients of the two dual matrices
    (the moment side and the reference side respectively).
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised via the env flag in the benchmark
    import numba
except ImportError:  # pragma: no cover
    numba = None

_DISABLED = os.environ.get("MOMENTBOUNDS_NO_NUMBA", "").strip().lower() not in (
    "", "0", "false", "no",
)
NUMBA_ENABLED = numba is not None and not _DISABLED


def _maybe_jit(fn):
    if NUMBA_ENABLED:
        return numba.njit(cache=True, fastmath=False)(fn)
    return fn


def _classwise_project_impl(M, class_id, class_count, n_classes):
    d = M.shape[0]
    sums = np.zeros(n_classes, dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            c = class_id[i, j]
            if c >= 0:
                sums[c] += M[i, j]
    out = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            c = class_id[i, j]
            if c >= 0:
                out[i, j] = sums[c] / class_count[c]
    return out


def _psd_clip_impl(M):
    w, v = np.linalg.eigh(M)
    wc = np.maximum(w, 0.0)
    return (v * wc) @ v.conj().T


def _frob_impl(M):
    return np.sqrt(np.sum(np.abs(M) ** 2))


def _retrace_dot_impl(X, Y):
    # Re tr[X^H Y]
    return np.real(np.sum(np.conj(X) * Y))


classwise_project = _maybe_jit(_classwise_project_impl)
psd_clip = _maybe_jit(_psd_clip_impl)
frob = _maybe_jit(_frob_impl)
retrace_dot = _maybe_jit(_retrace_dot_impl)


def _dsos_mn_impl(A, B, LA, LB, SA, SB, eps, mm, nn, mn):
    det = mm * nn - mn * mn
    dA = A - LA + SA / eps
    dB = B - LB + SB / eps
    M = eps * (nn * dA - mn * dB) / det
    N = eps * (mm * dB - mn * dA) / det
    return M, N


def _dsos_sweep_impl(Z, Y, Lam, U, A, B, cm, cn, fv, eps, order,
                     class_id, class_count, n_classes, LA, LB, SA, SB,
                     mm, nn, mn):
    """One Gauss-Seidel sweep of the divergence solver.

    The pair (M, N) is re-eliminated in closed form after every block update,
    via the running sums SA = sum_i cm_i (f_i U - Z_i - Y_i) and
    SB = sum_i cn_i (f_i U - Z_i - Y_i);  LA, LB are the matching multiplier
    sums, constant within a sweep.
    """
    for k in range(order.shape[0]):
        i = order[k]
        M, N = _dsos_mn(A, B, LA, LB, SA, SB, eps, mm, nn, mn)
        S = fv[i] * U - cm[i] * M - cn[i] * N
        Znew = psd_clip(S - Y[i] - eps * Lam[i])
        dZ = Znew - Z[i]
        SA -= cm[i] * dZ
        SB -= cn[i] * dZ
        Z[i] = Znew

        M, N = _dsos_mn(A, B, LA, LB, SA, SB, eps, mm, nn, mn)
        S = fv[i] * U - cm[i] * M - cn[i] * N
        R = S - Z[i] - eps * Lam[i]
        Ynew = R - classwise_project(R, class_id, class_count, n_classes)
        dY = Ynew - Y[i]
        SA -= cm[i] * dY
        SB -= cn[i] * dY
        Y[i] = Ynew
    M, N = _dsos_mn(A, B, LA, LB, SA, SB, eps, mm, nn, mn)
    return M, N, SA, SB


_dsos_mn = _maybe_jit(_dsos_mn_impl)
dsos_sweep = _maybe_jit(_dsos_sweep_impl)


def _csos_rho_n_impl(B, H, U, LamN, lamUm, SZYn, szyUm, eps,
                     mm, nn, mn, cmf, cnf, usq, trUH):
    C_N = B - LamN + (cnf / eps) * U - (mn / eps) * H - SZYn / eps
    c_rho = -1.0 + lamUm - (cmf / eps) * usq + (mm / eps) * trUH + szyUm / eps
    trCNU = np.real(np.sum(np.conj(U) * C_N))
    rho = eps * (nn * c_rho + mn * trCNU) / (usq * (nn * mm - mn * mn))
    N = (eps * C_N + mn * rho * U) / nn
    return rho, N


def _csos_sweep_impl(Z, Y, Lam, U, H, B, cm, cn, fv, eps, order,
                     class_id, class_count, n_classes,
                     LamN, lamUm, SZYn, szyUm, mm, nn, mn, cmf, cnf,
                     usq, trUH):
    """One sweep of the partition-function solver.

    (rho, N) are re-eliminated after every block via the running sums
    SZYn = sum_i cn_i (Z_i + Y_i) and szyUm = sum_i cm_i Re tr[U (Z_i+Y_i)].
    """
    for k in range(order.shape[0]):
        i = order[k]
        rho, N = _csos_rho_n(B, H, U, LamN, lamUm, SZYn, szyUm, eps,
                             mm, nn, mn, cmf, cnf, usq, trUH)
        S = fv[i] * U + cm[i] * (rho * U - H) - cn[i] * N
        Znew = psd_clip(S - Y[i] - eps * Lam[i])
        dZ = Znew - Z[i]
        SZYn += cn[i] * dZ
        szyUm += cm[i] * np.real(np.sum(np.conj(U) * dZ))
        Z[i] = Znew

        rho, N = _csos_rho_n(B, H, U, LamN, lamUm, SZYn, szyUm, eps,
                             mm, nn, mn, cmf, cnf, usq, trUH)
        S = fv[i] * U + cm[i] * (rho * U - H) - cn[i] * N
        R = S - Z[i] - eps * Lam[i]
        Ynew = R - classwise_project(R, class_id, class_count, n_classes)
        dY = Ynew - Y[i]
        SZYn += cn[i] * dY
        szyUm += cm[i] * np.real(np.sum(np.conj(U) * dY))
        Y[i] = Ynew
    rho, N = _csos_rho_n(B, H, U, LamN, lamUm, SZYn, szyUm, eps,
                         mm, nn, mn, cmf, cnf, usq, trUH)
    return rho, N, SZYn, szyUm


_csos_rho_n = _maybe_jit(_csos_rho_n_impl)
csos_sweep = _maybe_jit(_csos_sweep_impl)


def _isos_n_impl(B, H, U, LamN, SZYn, eps, nn, mn, cnf):
    C = B - LamN + (cnf / eps) * U - (mn / eps) * H - SZYn / eps
    return eps * C / nn


def _isos_sweep_impl(Z, Y, Lam, U, H, B, cm, cn, fv, eps, order,
                     class_id, class_count, n_classes,
                     LamN, SZYn, nn, mn, cnf):
    """Sweep for the integral bound: like the partition solver without rho."""
    for k in range(order.shape[0]):
        i = order[k]
        N = _isos_n(B, H, U, LamN, SZYn, eps, nn, mn, cnf)
        S = fv[i] * U - cm[i] * H - cn[i] * N
        Znew = psd_clip(S - Y[i] - eps * Lam[i])
        dZ = Znew - Z[i]
        SZYn += cn[i] * dZ
        Z[i] = Znew

        N = _isos_n(B, H, U, LamN, SZYn, eps, nn, mn, cnf)
        S = fv[i] * U - cm[i] * H - cn[i] * N
        R = S - Z[i] - eps * Lam[i]
        Ynew = R - classwise_project(R, class_id, class_count, n_classes)
        SZYn += cn[i] * (Ynew - Y[i])
        Y[i] = Ynew
    N = _isos_n(B, H, U, LamN, SZYn, eps, nn, mn, cnf)
    return N, SZYn


_isos_n = _maybe_jit(_isos_n_impl)
isos_sweep = _maybe_jit(_isos_sweep_impl)


def _qt_inner_impl(V, Y, Sigma, Q, U, eps, n_sweeps,
                   class_id, class_count, n_classes):
    """Inner block maximization for the metric-learning solver."""
    for _ in range(n_sweeps):
        V = psd_clip(U - Y + eps * (Q - Sigma))
        R = U - V - eps * Sigma
        Y = R - classwise_project(R, class_id, class_count, n_classes)
    return V, Y


qt_inner = _maybe_jit(_qt_inner_impl)


def _mirror_step_kl_impl(A, Sigma, H, eps, gamma, sqrtd, u_scale,
                         class_id, class_count, n_classes, normalize):
    """One entropic mirror-ascent step on the smoothed partition saddle.

    Hardcodes the Shannon generator f(t) = t log t - t + 1 (f' = log).
    Returns the updated (A, Sigma) and the smoothed objective at the input
    point.  ``normalize`` enforces tr[A] * u_scale = 1 after the step; the
    integral variant passes 0.
    """
    d = A.shape[0]
    lam, Ua = np.linalg.eigh(A)
    lam = np.maximum(lam, 1e-250)
    flam = lam * np.log(lam) - lam + 1.0

    fA = (Ua * flam) @ Ua.conj().T
    S = fA - sqrtd * Sigma
    S = 0.5 * (S + S.conj().T)
    mu, Vs = np.linalg.eigh(S)
    mumax = mu.max()
    wexp = np.exp((mu - mumax) / eps)
    sumexp = wexp.sum()
    V = (Vs * (wexp / sumexp)) @ Vs.conj().T

    PiA = classwise_project(A, class_id, class_count, n_classes)
    dev = A - PiA

    trAH = np.real(np.sum(np.conj(A) * H))
    trSU = u_scale * np.real(np.trace(Sigma))
    devn2 = np.sum(np.abs(dev) ** 2)
    value = trAH - (mumax + eps * np.log(sumexp)) - sqrtd * trSU \
        - devn2 / (2.0 * eps)

    # divided differences of f on the spectrum of A (diagonal: f' = log)
    DD = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            num = flam[i] - flam[j]
            den = lam[i] - lam[j]
            if np.abs(den) < 1e-12 * (1.0 + np.abs(lam[i])):
                DD[i, j] = np.log(0.5 * (lam[i] + lam[j]))
            else:
                DD[i, j] = num / den
    W = Ua.conj().T @ V @ Ua
    Gdd = Ua @ (DD * W) @ Ua.conj().T

    G = H - dev / eps - Gdd
    G = 0.5 * (G + G.conj().T)

    LogA = (Ua * np.log(lam)) @ Ua.conj().T
    S2 = LogA + gamma * G
    S2 = 0.5 * (S2 + S2.conj().T)
    t, U2 = np.linalg.eigh(S2)
    if normalize == 1:
        t = t - t.max()
        Aexp = (U2 * np.exp(t)) @ U2.conj().T
        tr = np.real(np.trace(Aexp))
        Anew = Aexp / (u_scale * tr)
    else:
        t = np.minimum(t, 50.0)
        Anew = (U2 * np.exp(t)) @ U2.conj().T

    gV = V.copy()
    for i in range(d):
        gV[i, i] = V[i, i] - u_scale
    Snew = Sigma + gamma * sqrtd * classwise_project(
        gV, class_id, class_count, n_classes)
    return Anew, Snew, value


mirror_step_kl = _maybe_jit(_mirror_step_kl_impl)
