"""Slow, explicit reference implementations used as test oracles."""

import numpy as np


def loop_bracket(f, X, Y):
    d = len(X)
    out = np.zeros(d, dtype=np.result_type(X, Y, float))
    for c in range(d):
        for a in range(d):
            for b in range(d):
                out[c] += f[c, a, b] * X[a] * Y[b]
    return out


def sparse_bracket(brackets, dim):
    """Bracket from a 1-based sparse list ``[c, a, b, value]``."""

    def br(X, Y):
        out = np.zeros(dim)
        for c, a, b, v in brackets:
            a, b, c = a - 1, b - 1, c - 1
            out[c] += v * (X[a] * Y[b] - X[b] * Y[a])
        return out

    return br


def ricci_2form(m):
    """``p(X,Y) = -1/2 tr(J ad[X,Y]) + 1/2 tr(ad J[X,Y])`` with explicit ad matrices."""
    d = m.dim
    f, J = m.structure_constants, m.J
    ad = [f[:, a, :] for a in range(d)]  # ad(v_a)[c, b] = f[c, a, b]

    def ad_of(Z):
        return sum(Z[a] * ad[a] for a in range(d))

    p = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            Z = f[:, a, b]
            p[a, b] = -0.5 * np.trace(J @ ad_of(Z)) + 0.5 * np.trace(ad_of(J @ Z))
    return p


def p0_eigenvalues(m):
    """Sorted eigenvalues of ``P0 = omega0^{-1} p11`` and ``p11`` itself."""
    p = ricci_2form(m)
    p11 = 0.5 * (p + m.J.T @ p @ m.J)
    P0 = np.linalg.inv(m.omega0) @ p11
    return np.sort(np.linalg.eigvals(P0).real), p11
