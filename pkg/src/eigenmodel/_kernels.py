"""Compiled per-node scans for the latent updates.

Random numbers are drawn by the caller with numpy and passed in, so the
sampler output depends only on the numpy generator state.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _cholesky(A):
    K = A.shape[0]
    L = np.zeros_like(A)
    for j in range(K):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= 0.0:
            raise ValueError("precision matrix is not positive definite")
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, K):
            t = A[i, j]
            for k in range(j):
                t -= L[i, k] * L[j, k]
            L[i, j] = t / L[j, j]
    return L


@njit(cache=True)
def canonical_normal(b, P, z):
    """P^-1 b + L^-T z where P = L L^T."""
    K = b.shape[0]
    L = _cholesky(P)
    w = np.empty(K)
    for i in range(K):
        t = b[i]
        for k in range(i):
            t -= L[i, k] * w[k]
        w[i] = t / L[i, i]
    x = np.empty(K)
    for i in range(K - 1, -1, -1):
        t = w[i] + z[i]
        for k in range(i + 1, K):
            t -= L[k, i] * x[k]
        x[i] = t / L[i, i]
    return x


@njit(cache=True)
def eigen_vector_scan(U, lam, vec_mean, R, u_var, normals):
    n, K = U.shape
    V = U * lam
    SV = V.T @ V
    for i in range(n):
        P = SV.copy()
        b = vec_mean / u_var
        for k in range(K):
            P[k, k] += 1.0 / u_var
            for l in range(K):
                P[k, l] -= V[i, k] * V[i, l]
        for j in range(n):
            r = R[i, j]
            if j != i and r != 0.0:
                for k in range(K):
                    b[k] += V[j, k] * r
        u = canonical_normal(b, P, normals[i])
        for k in range(K):
            vk = u[k] * lam[k]
            for l in range(K):
                SV[k, l] += vk * u[l] * lam[l] - V[i, k] * V[i, l]
        for k in range(K):
            U[i, k] = u[k]
            V[i, k] = u[k] * lam[k]


@njit(cache=True)
def _block_log_marginal(N, S, v):
    den = 1.0 + N * v
    return -0.5 * np.log(den) + 0.5 * v * S * S / den


@njit(cache=True)
def class_label_scan(c, R, N, S, v, uniforms):
    """Sequential collapsed draws of every label; N, S are updated in place."""
    n = c.shape[0]
    K = N.shape[0]
    nk = np.zeros(K)
    for i in range(n):
        nk[c[i]] += 1.0
    t = np.empty(K)
    q = np.empty(K)
    delta = np.empty(K)
    for i in range(n):
        a = c[i]
        for b in range(K):
            t[b] = nk[b]
            q[b] = 0.0
        t[a] -= 1.0
        for j in range(n):
            if j != i:
                q[c[j]] += R[i, j]
        for b in range(K):
            N[a, b] -= t[b]
            S[a, b] -= q[b]
            if b != a:
                N[b, a] = N[a, b]
                S[b, a] = S[a, b]
        best = -np.inf
        for k in range(K):
            d = 0.0
            for b in range(K):
                d += _block_log_marginal(N[k, b] + t[b], S[k, b] + q[b], v)
                d -= _block_log_marginal(N[k, b], S[k, b], v)
            delta[k] = d
            if d > best:
                best = d
        total = 0.0
        for k in range(K):
            delta[k] = np.exp(delta[k] - best)
            total += delta[k]
        target = uniforms[i] * total
        k = 0
        acc = delta[0]
        while acc < target and k < K - 1:
            k += 1
            acc += delta[k]
        for b in range(K):
            N[k, b] += t[b]
            S[k, b] += q[b]
            if b != k:
                N[b, k] = N[k, b]
                S[b, k] = S[k, b]
        if k != a:
            nk[a] -= 1.0
            nk[k] += 1.0
            c[i] = k


@njit(cache=True)
def distance_position_scan(U, R, inv_var, noise, logu):
    n, K = U.shape
    accepted = 0
    prop = np.empty(K)
    for i in range(n):
        for k in range(K):
            prop[k] = U[i, k] + noise[i, k]
        log_ratio = 0.0
        for j in range(n):
            if j == i:
                continue
            d_old = 0.0
            d_new = 0.0
            for k in range(K):
                x = U[j, k] - U[i, k]
                y = U[j, k] - prop[k]
                d_old += x * x
                d_new += y * y
            e_old = R[i, j] + np.sqrt(d_old)
            e_new = R[i, j] + np.sqrt(d_new)
            log_ratio -= 0.5 * (e_new * e_new - e_old * e_old)
        for k in range(K):
            log_ratio -= 0.5 * (prop[k] * prop[k] - U[i, k] * U[i, k]) * inv_var[k]
        if logu[i] < log_ratio:
            for k in range(K):
                U[i, k] = prop[k]
            accepted += 1
    return accepted
