"""Assembled sparse reference for two-dimensional periodic cell problems.

Builds the strain map ``x -> G(x_g) + Du A^-1 - E0`` explicitly with its
own Q1 shape functions and minimises the quadratic energy with a direct
sparse solve.  Shares no code with the package solver.
"""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

GAUSS = (0.5 - 0.5 / np.sqrt(3), 0.5 + 0.5 / np.sqrt(3))
BASIS2 = np.array([np.diag([0.5, 0.5]), np.diag([0.5, -0.5]), [[0, 0.5], [0.5, 0]]])


def _strain_map(N, Ainv, free_mean):
    """Sparse matrix mapping dofs to the 4 entries of the strain at every quadrature point."""
    h = 1.0 / N
    nu = 2 * N * N
    rows, cols, vals = [], [], []
    r = 0
    for i in range(N):
        for j in range(N):
            for qx in GAUSS:
                for qy in GAUSS:
                    grads = {}
                    for a, b in ((0, 0), (1, 0), (0, 1), (1, 1)):
                        gx = (1 if a else -1) / h * (qy if b else 1 - qy)
                        gy = (1 if b else -1) / h * (qx if a else 1 - qx)
                        grads[((i + a) % N, (j + b) % N)] = np.array([gx, gy])
                    for m in range(2):
                        for n in range(2):
                            # (Du A^-1)_{mn} = sum_k du_m/dy_k Ainv_{kn}
                            for (ni, nj), g in grads.items():
                                dof = 2 * (ni * N + nj) + m
                                rows.append(r + 2 * m + n)
                                cols.append(dof)
                                vals.append(g @ Ainv[i, j][:, n])
                            if free_mean:
                                for s in range(3):
                                    rows.append(r + 2 * m + n)
                                    cols.append(nu + s)
                                    vals.append(BASIS2[s][m, n])
                    r += 4
    ncols = nu + (3 if free_mean else 0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(r, ncols))


def _weights(lam, mu, N):
    blocks = []
    P = np.zeros((4, 4))
    for m in range(2):
        for n in range(2):
            P[2 * m + n, 2 * m + n] += 0.5
            P[2 * m + n, 2 * n + m] += 0.5
    vecI = np.array([1.0, 0, 0, 1.0])
    w = 1.0 / (N * N) / 4
    for i in range(N):
        for j in range(N):
            C = lam[i, j] * np.outer(vecI, vecI) + 2 * mu[i, j] * P
            blocks += [w * C] * 4
    return sp.block_diag(blocks, format="csr")


def minimise(lam, mu, A, E0, free_mean=False):
    """Minimum of ``int Q(E0 + [G] + Du A^-1)`` and the minimiser (pinned first node)."""
    N = lam.shape[0]
    D = _strain_map(N, np.linalg.inv(A), free_mean)
    W = _weights(lam, mu, N)
    c = np.broadcast_to(np.asarray(E0).reshape(N, N, 1, 4), (N, N, 4, 4)).reshape(-1)
    keep = np.arange(2, D.shape[1])
    Dk = D[:, keep]
    K = (Dk.T @ W @ Dk).tocsc()
    x = spla.spsolve(K, -(Dk.T @ (W @ c)))
    e = Dk @ x + c
    return float(e @ (W @ e)), x


def effective_matrix(lam, mu, A):
    """Effective matrix by polarisation of the cell minima."""
    N = lam.shape[0]

    def E(G):
        return minimise(lam, mu, A, np.broadcast_to(G, (N, N, 2, 2)))[0]

    Q = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            Q[i, j] = (E(BASIS2[i] + BASIS2[j]) - E(BASIS2[i] - BASIS2[j])) / 4
    return Q
