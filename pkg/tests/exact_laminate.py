"""Exact rational laminate oracle for layers normal to e_1 with A = I.

Independent of the package: corrector gradients are ``v_k e_1^T`` per
layer, fixed by zero mean and continuity of the normal traction, and all
integrals are sums over layers in exact arithmetic.
"""
import sympy as sp

G3 = [
    sp.eye(3) / 3,
    sp.diag(sp.Rational(2, 3), -sp.Rational(1, 3), -sp.Rational(1, 3)),
    sp.diag(0, -sp.Rational(1, 2), sp.Rational(1, 2)),
]
for i, j in [(0, 1), (0, 2), (1, 2)]:
    M = sp.zeros(3)
    M[i, j] = M[j, i] = sp.Rational(1, 2)
    G3.append(M)


def _L(lam, mu, E):
    S = (E + E.T) / 2
    return lam * S.trace() * sp.eye(3) + 2 * mu * S


def _dot(X, Y):
    return sum(X[i, j] * Y[i, j] for i in range(3) for j in range(3))


def _relax(layers, loads):
    """Layer strains ``loads_k + v_k e_1^T`` of the relaxed laminate."""
    K = len(layers)
    v = sp.symbols(f"v0:{3 * K}")
    e1 = sp.Matrix([1, 0, 0])
    E = [loads[k] + sp.Matrix(v[3 * k:3 * k + 3]) * e1.T for k in range(K)]
    eqs = list(sum((t * sp.Matrix(v[3 * k:3 * k + 3]) for k, (t, _, _) in enumerate(layers)),
                   sp.zeros(3, 1)))
    for k in range(K - 1):
        a = _L(layers[k][1], layers[k][2], E[k]) * e1
        b = _L(layers[k + 1][1], layers[k + 1][2], E[k + 1]) * e1
        eqs += list(a - b)
    sol = sp.solve(eqs, v, dict=True)[0]
    return [e.subs(sol) for e in E]


def laminate(layers, Bs):
    """``layers`` = [(t, lam, mu)], ``Bs`` = per-layer prestrain matrices.

    Returns ``(Q, b, xi, R)`` with exact rationals.
    """
    Es = [_relax(layers, [G] * len(layers)) for G in G3]
    Q = sp.Matrix(6, 6, lambda i, j: sum(t * _dot(Es[i][k], _L(lam, mu, Es[j][k]))
                                         for k, (t, lam, mu) in enumerate(layers)))
    b = sp.Matrix([sum(t * _dot(_L(lam, mu, Es[i][k]), Bs[k])
                       for k, (t, lam, mu) in enumerate(layers)) for i in range(6)])
    xi = Q.LUsolve(b)
    EB = _relax(layers, [-B for B in Bs])
    single = sum(t * _dot(EB[k], _L(lam, mu, EB[k])) for k, (t, lam, mu) in enumerate(layers))
    R = sp.nsimplify(single - (b.T * xi)[0])
    return sp.simplify(Q), sp.simplify(b), sp.simplify(xi), sp.simplify(R)
