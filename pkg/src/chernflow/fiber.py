"""Pointwise multilinear algebra on a real 2n-dimensional space with an
almost complex structure.

Vectors are coordinate arrays in a fixed real basis ``v_1, ..., v_2n``.
Endomorphisms act on columns, so ``J @ X`` is ``JX``.  A 2-form is stored as
its full skew matrix ``xi[a, b] = xi(v_a, v_b)``.  Complex vectors are the
C-bilinear extension of everything.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised when a model violates an invariant that the caller requires."""

    def __init__(self, report):
        self.report = list(report)
        lines = ", ".join(f"{v.name} (residual {v.residual:.3g})" for v in self.report)
        super().__init__(f"model failed validation: {lines}")


class FrameError(ValueError):
    pass


def standard_J(dim: int) -> np.ndarray:
    """``J v_{2k-1} = v_{2k}`` for k = 1..n."""
    if dim % 2:
        raise ValueError(f"dimension must be even, got {dim}")
    J = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        J[k + 1, k] = 1.0
        J[k, k + 1] = -1.0
    return J


def J_from_pairs(dim: int, pairs) -> np.ndarray:
    """Build J from pairs ``(a, b)`` meaning ``J v_a = v_b`` (1-based)."""
    J = np.zeros((dim, dim))
    for a, b in pairs:
        J[b - 1, a - 1] = 1.0
        J[a - 1, b - 1] = -1.0
    return J


@dataclass(frozen=True, eq=False)
class LieAlgebraModel:
    """Left-invariant almost Hermitian data on a Lie algebra.

    ``structure_constants[c, a, b]`` is the coefficient of ``v_c`` in
    ``[v_a, v_b]``; ``omega0[a, b] = omega_0(v_a, v_b)``.
    """

    structure_constants: np.ndarray
    J: np.ndarray
    omega0: np.ndarray
    name: str = ""
    allow_non_lie: bool = False

    def __post_init__(self):
        for attr in ("structure_constants", "J", "omega0"):
            arr = np.array(getattr(self, attr), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, attr, arr)
        d = self.dim
        if d % 2:
            raise ValueError(f"dimension must be even, got {d}")
        if self.structure_constants.shape != (d, d, d):
            raise ValueError(f"structure constants must have shape {(d, d, d)}")
        if self.J.shape != (d, d) or self.omega0.shape != (d, d):
            raise ValueError(f"J and omega0 must be {d}x{d}")

    @property
    def dim(self) -> int:
        return self.J.shape[0]

    @property
    def n(self) -> int:
        return self.dim // 2

    @property
    def metric(self) -> np.ndarray:
        """Riemannian metric ``g(X, Y) = omega(X, JY)`` as a matrix."""
        return self.omega0 @ self.J

    def bracket(self, X, Y):
        return bracket(self.structure_constants, X, Y)

    def ad(self, X) -> np.ndarray:
        """Matrix of ``Y -> [X, Y]``."""
        return np.einsum("cab,a->cb", self.structure_constants, X)

    @classmethod
    def from_brackets(cls, dim, brackets, J, omega0="standard", name="", allow_non_lie=False):
        """Build a model from a sparse bracket list ``[(c, a, b, value), ...]``.

        Indices are 1-based: the entry sets the coefficient of ``v_c`` in
        ``[v_a, v_b]``.  The list is antisymmetrized; giving both orientations
        with inconsistent values emits a warning and the later entry wins.
        """
        f = np.zeros((dim, dim, dim))
        seen = {}
        for c, a, b, value in brackets:
            c, a, b = int(c) - 1, int(a) - 1, int(b) - 1
            value = float(value)
            if a == b:
                if value != 0.0:
                    warnings.warn(f"ignoring nonzero self-bracket [v{a + 1}, v{a + 1}]")
                continue
            key = (c, min(a, b), max(a, b))
            oriented = value if a < b else -value
            if key in seen and seen[key] != oriented:
                warnings.warn(
                    f"inconsistent bracket entries for [v{a + 1}, v{b + 1}] component v{c + 1}; "
                    f"using {value} for [v{a + 1}, v{b + 1}]"
                )
            seen[key] = oriented
        for (c, a, b), value in seen.items():
            f[c, a, b] = value
            f[c, b, a] = -value
        J = np.asarray(J, dtype=float)
        if isinstance(omega0, str):
            if omega0 != "standard":
                raise ValueError(f"unknown omega0 keyword {omega0!r}")
            omega0 = standard_omega(J)
        return cls(f, J, np.asarray(omega0, dtype=float), name=name, allow_non_lie=allow_non_lie)


def standard_omega(J) -> np.ndarray:
    """Fundamental form of the Euclidean metric, ``omega(X, Y) = <JX, Y>``.

    Only compatible when J is orthogonal.
    """
    J = np.asarray(J, dtype=float)
    if not np.allclose(J.T @ J, np.eye(J.shape[0]), atol=TOL):
        raise ValueError("'standard' omega0 requires an orthogonal J")
    return J.T.copy()


def bracket(f, X, Y):
    """``[X, Y]``; X and Y may carry matching leading batch axes."""
    return np.einsum("cab,...a,...b->...c", f, X, Y)


def _apply(A, X):
    return np.einsum("ab,...b->...a", A, X)


@dataclass(frozen=True)
class Violation:
    name: str
    residual: float


def jacobiator(f) -> np.ndarray:
    """``jac[m, a, b, c]`` = component m of [[v_a,v_b],v_c] + cyclic."""
    t = np.einsum("nab,mnc->mabc", f, f)
    return t + t.transpose(0, 2, 3, 1) + t.transpose(0, 3, 1, 2)


def validate_model(m: LieAlgebraModel, tol: float = TOL) -> list[Violation]:
    """Return the violated invariants of ``m`` with their worst residuals.

    An empty list means the model is a valid almost Hermitian Lie algebra.
    """
    f, J, W = m.structure_constants, m.J, m.omega0
    eye = np.eye(m.dim)
    checks = [
        ("antisymmetry", np.max(np.abs(f + f.transpose(0, 2, 1)), initial=0.0)),
        ("jacobi", np.max(np.abs(jacobiator(f)), initial=0.0)),
        ("J_squared", np.max(np.abs(J @ J + eye))),
        ("omega_skew", np.max(np.abs(W + W.T))),
        ("omega_compatible", np.max(np.abs(J.T @ W @ J - W))),
    ]
    report = [Violation(name, float(r)) for name, r in checks if r > tol]
    G = W @ J
    lam = np.linalg.eigvalsh(0.5 * (G + G.T))[0]
    if lam <= tol:
        report.append(Violation("omega_positive", float(-lam)))
    return report


def random_almost_abelian(
    dim: int, rng, scale: float = 1.0, perturb: float = 0.25, max_cond: float = 4.0
) -> LieAlgebraModel:
    """Random valid model: ``[v_1, w] = A w`` on the abelian ideal ``span(v_2..v_dim)``.

    The Jacobi identity holds for every A.  J and omega0 are the standard
    pair conjugated by ``Q = I + perturb * randn``, which keeps them
    compatible; Q is redrawn until ``cond(Q) <= max_cond``.
    """
    A = scale * rng.standard_normal((dim - 1, dim - 1))
    f = np.zeros((dim, dim, dim))
    f[1:, 0, 1:] = A
    f[1:, 1:, 0] = -A
    while True:
        Q = np.eye(dim) + perturb * rng.standard_normal((dim, dim))
        if np.linalg.cond(Q) <= max_cond:
            break
    Qi = np.linalg.inv(Q)
    J0 = standard_J(dim)
    return LieAlgebraModel(f, Q @ J0 @ Qi, Qi.T @ standard_omega(J0) @ Qi, name="random")


def require_valid(m: LieAlgebraModel, tol: float = TOL) -> LieAlgebraModel:
    """Raise :class:`ModelValidationError` unless ``m`` validates.

    With ``m.allow_non_lie`` a Jacobi failure only warns.
    """
    report = validate_model(m, tol)
    if m.allow_non_lie:
        for v in report:
            if v.name == "jacobi":
                warnings.warn(f"Jacobi identity fails (residual {v.residual:.3g}); continuing")
        report = [v for v in report if v.name != "jacobi"]
    if report:
        raise ModelValidationError(report)
    return m


# -- 2-forms -------------------------------------------------------------------


def _check_dims(xi, J):
    xi = np.asarray(xi)
    J = np.asarray(J)
    if xi.shape[-2:] != J.shape:
        raise ValueError(f"form shape {xi.shape[-2:]} does not match J {J.shape}")
    return xi, J


def apply_J_to_form(xi, J) -> np.ndarray:
    """``(J xi)(X, Y) = xi(JX, JY)`` (the sign ``(-1)^2`` is +1)."""
    xi, J = _check_dims(xi, J)
    return np.einsum("ca,...cd,db->...ab", J, xi, J)


def project_11(xi, J) -> np.ndarray:
    """(1,1) part ``(xi(X,Y) + xi(JX,JY)) / 2``."""
    return 0.5 * (np.asarray(xi) + apply_J_to_form(xi, J))


def anti_part(xi, J) -> np.ndarray:
    """``xi - project_11(xi)``, the J-anti-invariant part."""
    return 0.5 * (np.asarray(xi) - apply_J_to_form(xi, J))


def trace_against(xi, omega) -> np.ndarray:
    """``tr_omega xi = n xi ^ omega^{n-1} / omega^n``, i.e. ``tr(omega^{-1} xi) / 2``.

    Only the (1,1) part of ``xi`` contributes.
    """
    return 0.5 * np.trace(np.linalg.solve(omega, xi), axis1=-2, axis2=-1)


# -- Nijenhuis tensor ----------------------------------------------------------


def nijenhuis(m: LieAlgebraModel, X, Y):
    """``N(X,Y) = [JX,JY] - J[JX,Y] - J[X,JY] - [X,Y]``."""
    J = m.J
    if np.shape(X)[-1] != m.dim or np.shape(Y)[-1] != m.dim:
        raise ValueError("vector dimension does not match the model")
    JX, JY = _apply(J, X), _apply(J, Y)
    return m.bracket(JX, JY) - _apply(J, m.bracket(JX, Y) + m.bracket(X, JY)) - m.bracket(X, Y)


def nijenhuis_identities(m: LieAlgebraModel, X, Y) -> dict:
    """Max residuals of the algebraic symmetries of N over the given pairs."""
    J = m.J
    JX, JY = _apply(J, X), _apply(J, Y)
    N = nijenhuis(m, X, Y)
    JN = _apply(J, N)
    N_JX_Y = nijenhuis(m, JX, Y)
    N_X_JY = nijenhuis(m, X, JY)
    res = {
        "N(X,Y) = -N(Y,X)": N + nijenhuis(m, Y, X),
        "N(JX,Y) = -J N(X,Y)": N_JX_Y + JN,
        "N(X,JY) = -J N(X,Y)": N_X_JY + JN,
        "N(JX,JY) = -N(X,Y)": nijenhuis(m, JX, JY) + N,
        "N(JX,Y) = N(X,JY)": N_JX_Y - N_X_JY,
    }
    return {k: float(np.max(np.abs(v), initial=0.0)) for k, v in res.items()}


def nijenhuis_table(m: LieAlgebraModel) -> np.ndarray:
    """``N[c, a, b]``: component ``v_c`` of ``N(v_a, v_b)``."""
    f, J = m.structure_constants, m.J
    fJJ = np.einsum("cxy,xa,yb->cab", f, J, J)
    fJ1 = np.einsum("cxb,xa->cab", f, J)
    f1J = np.einsum("cay,yb->cab", f, J)
    return fJJ - np.einsum("dc,cab->dab", J, fJ1 + f1J) - f


# -- complex frames ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ComplexFrame:
    """A basis ``e_1..e_n`` of T^{1,0} with its dual coframe.

    ``frame_matrix`` is 2n x n complex; ``basis`` stacks ``[e, conj(e)]`` and
    ``dual`` is its inverse, whose rows are ``theta^1..theta^n`` followed by
    the conjugates.
    """

    frame_matrix: np.ndarray
    basis: np.ndarray = field(init=False)
    dual: np.ndarray = field(init=False)

    def __post_init__(self):
        E = np.asarray(self.frame_matrix, dtype=complex)
        B = np.hstack([E, E.conj()])
        if np.linalg.matrix_rank(B, tol=TOL * max(1.0, np.abs(B).max())) < B.shape[0]:
            raise FrameError("frame together with its conjugate is not a basis")
        object.__setattr__(self, "frame_matrix", E)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "dual", np.linalg.inv(B))

    @property
    def n(self) -> int:
        return self.frame_matrix.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return self.dual[: self.n]

    def coords(self, V):
        """Coefficients of V in ``(e_1..e_n, ebar_1..ebar_n)``."""
        return self.dual @ V

    def part10(self, V):
        return self.frame_matrix @ self.theta @ V

    def part01(self, V):
        return V - self.part10(V)


def build_complex_frame(J, tol: float = TOL) -> ComplexFrame:
    """Frame ``e_j = (u_j - i J u_j) / 2`` for a greedily adapted real basis.

    ``u_1`` is the first standard basis vector; each later ``u_j`` is the
    lowest-index standard basis vector outside ``span{u_k, J u_k}``.
    """
    J = np.asarray(J, dtype=float)
    d = J.shape[0]
    if J.shape != (d, d) or d % 2:
        raise FrameError(f"J must be square of even size, got {J.shape}")
    if np.max(np.abs(J @ J + np.eye(d))) > tol * max(1.0, np.abs(J).max() ** 2):
        raise FrameError("J does not square to -Id")
    span = np.zeros((d, 0))
    us = []
    for k in range(d):
        u = np.eye(d)[k]
        trial = np.column_stack([span, u])
        if np.linalg.matrix_rank(trial, tol=1e-10) == span.shape[1] + 1:
            us.append(u)
            span = np.column_stack([span, u, J @ u])
        if len(us) == d // 2:
            break
    E = np.column_stack([0.5 * (u - 1j * (J @ u)) for u in us])
    return ComplexFrame(E)


# -- structure coefficients ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class StructureCoefficients:
    """Bracket coefficients in a complex frame, all shaped ``[k, i, j]``.

    ``[e_i, e_j]       = C^k_ij e_k - conj(Nbar^k_ij) ebar_k``
    ``[e_i, ebar_j]    = Cmix^k_ij e_k + CmixBar^k_ij ebar_k``
    ``[ebar_i, ebar_j] = -Nbar^k_ij e_k + conj(C^k_ij) ebar_k``
    """

    C: np.ndarray
    Nbar: np.ndarray
    Cmix: np.ndarray
    CmixBar: np.ndarray

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @classmethod
    def zeros(cls, n: int) -> "StructureCoefficients":
        z = np.zeros((n, n, n), dtype=complex)
        return cls(z, z.copy(), z.copy(), z.copy())

    @property
    def trace10(self):
        """``C^{qbar}_{p qbar}`` (summed over q), indexed by p."""
        return np.einsum("qpq->p", self.CmixBar)

    @property
    def trace01(self):
        """``C^i_{pbar i}`` = coefficient of e_i in [ebar_p, e_i], summed over i."""
        return -np.einsum("iip->p", self.Cmix)


def extract_structure_coefficients(m: LieAlgebraModel, fr: ComplexFrame) -> StructureCoefficients:
    f = m.structure_constants
    E = fr.frame_matrix
    n = fr.n
    ee = np.einsum("cab,ai,bj->cij", f, E, E)
    eeb = np.einsum("cab,ai,bj->cij", f, E, E.conj())
    ee_c = np.einsum("kc,cij->kij", fr.dual, ee)
    eeb_c = np.einsum("kc,cij->kij", fr.dual, eeb)
    return StructureCoefficients(
        C=ee_c[:n],
        Nbar=-ee_c[n:].conj(),
        Cmix=eeb_c[:n],
        CmixBar=eeb_c[n:],
    )


def reconstruct_brackets(sc: StructureCoefficients, fr: ComplexFrame) -> np.ndarray:
    """Real structure constants rebuilt from frame coefficients."""
    n = fr.n
    # coefficient arrays on the full complex basis b_mu = (e, ebar)
    full = np.zeros((2 * n, 2 * n, 2 * n), dtype=complex)
    full[:n, :n, :n] = sc.C
    full[n:, :n, :n] = -sc.Nbar.conj()
    full[:n, :n, n:] = sc.Cmix
    full[n:, :n, n:] = sc.CmixBar
    full[:n, n:, :n] = -sc.Cmix.transpose(0, 2, 1)
    full[n:, n:, :n] = -sc.CmixBar.transpose(0, 2, 1)
    full[:n, n:, n:] = -sc.Nbar
    full[n:, n:, n:] = sc.C.conj()
    B, D = fr.basis, fr.dual
    f = np.einsum("ck,kmn,ma,nb->cab", B, full, D, D)
    return f.real


# -- forms in frame components ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class FrameTwoForm:
    """Values of a 2-form on frame pairs, arrays shaped ``(..., n, n)``.

    ``ee[k, l] = xi(e_k, e_l)``, ``eeb[k, l] = xi(e_k, ebar_l)``,
    ``ebeb[k, l] = xi(ebar_k, ebar_l)``.
    """

    ee: np.ndarray
    eeb: np.ndarray
    ebeb: np.ndarray

    def block(self) -> np.ndarray:
        top = np.concatenate([self.ee, self.eeb], axis=-1)
        bottom = np.concatenate([-np.swapaxes(self.eeb, -1, -2), self.ebeb], axis=-1)
        return np.concatenate([top, bottom], axis=-2)

    def to_real(self, fr: ComplexFrame, check: bool = False) -> np.ndarray:
        M = fr.dual.T @ self.block() @ fr.dual
        if check:
            scale = max(1.0, float(np.max(np.abs(M), initial=0.0)))
            imag = float(np.max(np.abs(M.imag), initial=0.0))
            if imag > 1e-10 * scale:
                raise ValueError(f"form is not real (imaginary part {imag:.3g})")
        return M.real

    @classmethod
    def from_real(cls, xi, fr: ComplexFrame) -> "FrameTwoForm":
        E = fr.frame_matrix
        xi = np.asarray(xi)
        ee = np.einsum("ak,...ab,bl->...kl", E, xi, E)
        eeb = np.einsum("ak,...ab,bl->...kl", E, xi, E.conj())
        ebeb = np.einsum("ak,...ab,bl->...kl", E.conj(), xi, E.conj())
        return cls(ee, eeb, ebeb)

    def project_11(self) -> "FrameTwoForm":
        return FrameTwoForm(np.zeros_like(self.ee), self.eeb, np.zeros_like(self.ebeb))

    def __add__(self, other):
        return FrameTwoForm(self.ee + other.ee, self.eeb + other.eeb, self.ebeb + other.ebeb)

    def __sub__(self, other):
        return FrameTwoForm(self.ee - other.ee, self.eeb - other.eeb, self.ebeb - other.ebeb)

    def sup_norm(self) -> float:
        return float(max(np.max(np.abs(a), initial=0.0) for a in (self.ee, self.eeb, self.ebeb)))


# -- d theta ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DTheta:
    """Values of ``d theta^i`` on frame pairs, each shaped ``[i, k, l]``.

    ``on_ee = -C``, ``on_eeb = -Cmix``, ``on_ebeb = Nbar``; the expansion
    coefficients are ``-C/2``, ``-Cmix`` and ``Nbar/2`` against
    ``theta^k^theta^l``, ``theta^k^thetabar^l`` and ``thetabar^k^thetabar^l``.
    """

    on_ee: np.ndarray
    on_eeb: np.ndarray
    on_ebeb: np.ndarray

    def form(self, i: int) -> FrameTwoForm:
        return FrameTwoForm(self.on_ee[i], self.on_eeb[i], self.on_ebeb[i])


def dtheta_coefficients(sc: StructureCoefficients) -> DTheta:
    return DTheta(-sc.C, -sc.Cmix, sc.Nbar.copy())


def exterior_derivative_invariant(alpha, f) -> np.ndarray:
    """``d alpha`` for a left-invariant 1-form given by its row ``alpha``.

    With constant coefficients the derivative terms drop and
    ``d alpha(X, Y) = -alpha([X, Y])``.
    """
    return -np.einsum("c,cab->ab", alpha, f)


def djd_from_jet(m: LieAlgebraModel, grad, hess) -> np.ndarray:
    """``d J d phi`` at a point from a 2-jet of phi along the basis fields.

    ``grad[a] = v_a(phi)`` and ``hess[a, b] = v_a(v_b(phi))``; the jet must
    satisfy ``hess - hess.T = [v_a, v_b](phi)``.  Uses
    ``(J d phi)(Y) = -d phi(JY)`` and the invariant-field formula for d.
    """
    J, f = m.J, m.structure_constants
    # X(JY phi) = sum_b (JY)^b X(v_b phi) for left-invariant X, Y
    XJY = np.einsum("ac,cb->ab", hess, J)  # [a, b] = v_a((J v_b) phi)
    JdphiBracket = np.einsum("c,cd,dab->ab", grad, J, f)  # (J[v_a, v_b]) phi
    return -XJY + XJY.T + JdphiBracket


def random_jet(m: LieAlgebraModel, rng) -> tuple[np.ndarray, np.ndarray]:
    """A consistent random 2-jet (gradient, second derivatives along v_a)."""
    d = m.dim
    grad = rng.standard_normal(d)
    S = rng.standard_normal((d, d))
    S = 0.5 * (S + S.T)
    hess = S + 0.5 * np.einsum("c,cab->ab", grad, m.structure_constants)
    return grad, hess
