"""Compiled soft-backup kernels for deterministic dynamics.

The numpy versions in :mod:`mtirl.maxent` spend most of their time in
per-call overhead on small tables; these loops are the hot path of every
fit.
"""
import numba
import numpy as np


@numba.njit(cache=True)
def det_backward(R, nxt, T):
    S, A = R.shape
    Qs = np.empty((T, S, A))
    logZ = np.zeros((T + 1, S))
    W = np.zeros((T, S, A))
    for t in range(T - 1, -1, -1):
        for s in range(S):
            m = -np.inf
            for a in range(A):
                w = 0.0 if t == T - 1 else logZ[t + 1, nxt[s, a]]
                W[t, s, a] = w
                q = R[s, a] + w
                Qs[t, s, a] = q
                if q > m:
                    m = q
            acc = 0.0
            for a in range(A):
                acc += np.exp(Qs[t, s, a] - m)
            logZ[t, s] = np.log(acc) + m
    return Qs, logZ, W


@numba.njit(cache=True)
def det_forward(Qs, logZ, nxt, p0):
    T, S, A = Qs.shape
    D = p0.copy()
    visits = np.zeros((S, A))
    for t in range(T):
        D_next = np.zeros(S)
        for s in range(S):
            if D[s] == 0.0:
                continue
            for a in range(A):
                x = D[s] * np.exp(Qs[t, s, a] - logZ[t, s])
                visits[s, a] += x
                D_next[nxt[s, a]] += x
        D = D_next
    return visits


@numba.njit(cache=True)
def det_value_iteration(R, nxt, gamma, tol, max_iters, V0):
    S, A = R.shape
    V = V0.copy()
    V_new = np.empty(S)
    for _ in range(max_iters):
        delta = 0.0
        for s in range(S):
            m = -np.inf
            for a in range(A):
                q = R[s, a] + gamma * V[nxt[s, a]]
                if q > m:
                    m = q
            V_new[s] = m
            d = abs(m - V[s])
            if d > delta:
                delta = d
        V, V_new = V_new, V
        if delta < tol:
            break
    Q = np.empty((S, A))
    for s in range(S):
        for a in range(A):
            Q[s, a] = R[s, a] + gamma * V[nxt[s, a]]
    return Q
