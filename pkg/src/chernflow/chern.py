"""Chern connection, torsion and Ricci traces for a Hermitian metric in a
fixed complex frame.

A metric is the array ``g[..., k, l] = g_{k lbar}`` (``omega = i g theta^k ^
thetabar^l``).  Leading axes are the backend's spatial shape, so the same
code handles a single left-invariant fiber (``ConstantBackend``) and a
periodic grid (``GridBackend``).  Structure coefficients are frame
constants for both backends, so their frame derivatives vanish and those
terms are omitted from the curvature traces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fiber import ComplexFrame, FrameTwoForm, StructureCoefficients
from .grid import GridBackend


class MetricError(ValueError):
    pass


def hermitian_det(g):
    """Real determinant of a batch of Hermitian matrices (closed form for n <= 2)."""
    if g.shape[-1] == 1:
        return g[..., 0, 0].real
    if g.shape[-1] == 2:
        return (g[..., 0, 0] * g[..., 1, 1]).real - np.abs(g[..., 0, 1]) ** 2
    return np.linalg.det(g).real


def hermitian_min_eig(g):
    if g.shape[-1] == 1:
        return g[..., 0, 0].real
    if g.shape[-1] == 2:
        a, d = g[..., 0, 0].real, g[..., 1, 1].real
        return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + np.abs(g[..., 0, 1]) ** 2)
    return np.linalg.eigvalsh(g)[..., 0]


def check_metric(g, tol: float = 1e-12) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    herm = np.max(np.abs(g - np.conj(np.swapaxes(g, -1, -2))), initial=0.0)
    if herm > tol * max(1.0, np.max(np.abs(g))):
        raise MetricError(f"metric is not Hermitian (residual {herm:.3g})")
    lam = hermitian_min_eig(g).min()
    if lam <= 0:
        raise MetricError(f"metric is not positive definite (min eigenvalue {lam:.3g})")
    return g


def inverse(g):
    """Batched inverse with a closed form for 1x1 and 2x2 blocks."""
    g = np.asarray(g)
    if g.shape[-1] == 1:
        return 1.0 / g
    if g.shape[-1] == 2:
        a, b, c, d = g[..., 0, 0], g[..., 0, 1], g[..., 1, 0], g[..., 1, 1]
        det = a * d - b * c
        out = np.empty_like(g)
        out[..., 0, 0], out[..., 0, 1] = d / det, -b / det
        out[..., 1, 0], out[..., 1, 1] = -c / det, a / det
        return out
    return np.linalg.inv(g)


def frame_derivatives(backend, g):
    """``dg[..., i, k, l] = e_i g_{k lbar}``."""
    P = backend.pad(g)
    return np.stack([backend.d(g, a, P) for a in range(backend.n)], axis=-3)


def log_det_derivatives(backend, g):
    """``e_a log det g = tr(g^{-1} e_a g)`` for all 2n directions, last axis."""
    giT = np.swapaxes(inverse(g), -1, -2)
    P = backend.pad(g)
    return np.stack(
        [(giT * backend.d(g, a, P)).sum(axis=(-1, -2)) for a in range(2 * backend.n)],
        axis=-1,
    )


@dataclass(frozen=True, eq=False)
class Christoffels:
    """``G10[..., p, i, k] = Gamma^p_{ik}``, ``G01[..., p, i, k] = Gamma^p_{ibar k}``."""

    G10: np.ndarray
    G01: np.ndarray

    def conj_barred(self):
        """``Gamma^{qbar}_{i lbar}`` as ``[..., q, i, l]``."""
        return np.conj(self.G01)


def chern_christoffels(g, sc: StructureCoefficients, backend) -> Christoffels:
    g = check_metric(g)
    gi = inverse(g)
    dg = frame_derivatives(backend, g)
    G10 = np.einsum("...lp,...ikl->...pik", gi, dg) + np.einsum(
        "...lp,...kq,qli->...pik", gi, g, np.conj(sc.Cmix), optimize=True
    )
    # vanishing (1,1) torsion: Gamma^p_{kbar j} = -C^p_{j kbar}
    G01 = np.broadcast_to(-np.swapaxes(sc.Cmix, -1, -2), G10.shape).copy()
    return Christoffels(G10, G01)


def torsion_11(gam: Christoffels, sc: StructureCoefficients):
    """``S^i_{j kbar} = -Gamma^i_{kbar j} - C^i_{j kbar}``, shaped ``[..., i, j, k]``."""
    return -np.swapaxes(gam.G01, -1, -2) - sc.Cmix


@dataclass(frozen=True, eq=False)
class Torsion:
    T: np.ndarray  # [..., p, i, k] = T^p_{ik}
    lowered: np.ndarray  # [..., i, k, l] = T_{ik lbar}

    @property
    def trace(self):
        """``T^j_{pj}`` indexed by p."""
        return np.einsum("...jpj->...p", self.T)


def torsion_components(gam: Christoffels, sc: StructureCoefficients, g) -> Torsion:
    T = gam.G10 - np.swapaxes(gam.G10, -1, -2) - sc.C
    lowered = np.einsum("...pik,...pl->...ikl", T, g)
    return Torsion(T, lowered)


def torsion_lowered_explicit(g, sc: StructureCoefficients, backend):
    """The expanded formula for ``T_{ik lbar}`` directly from g and C."""
    dg = frame_derivatives(backend, g)
    Cc = np.conj(sc.Cmix)
    t1 = dg
    t2 = np.einsum("...kq,qli->...ikl", g, Cc)
    return (
        t1
        + t2
        - np.swapaxes(t1, -3, -2)
        - np.swapaxes(t2, -3, -2)
        - np.einsum("pik,...pl->...ikl", sc.C, g)
    )


def dbar_omega(g, sc: StructureCoefficients, backend):
    """Coefficients ``A[..., k, i, j]`` of ``dbar omega = (i/2) A theta^k^thetabar^i^thetabar^j``."""
    n = backend.n
    dbg = np.stack([backend.d(g, n + j) for j in range(n)], axis=-3)  # [..., j, k, i]
    a = np.einsum("...jki->...kij", dbg)
    b = np.einsum("pki,...pj->...kij", sc.Cmix, g)
    c = np.einsum("qij,...kq->...kij", np.conj(sc.C), g)
    return a - np.swapaxes(a, -1, -2) - b + np.swapaxes(b, -1, -2) + c


def metric_compatibility_residual(g, sc, backend, gam: Christoffels) -> float:
    """Max residual of ``X<e_k, ebar_l> = <D_X e_k, ebar_l> + <e_k, D_X ebar_l>``
    for ``X = e_i`` and ``X = ebar_i``."""
    n = backend.n
    dg = frame_derivatives(backend, g)
    r1 = (
        dg
        - np.einsum("...pik,...pl->...ikl", gam.G10, g)
        - np.einsum("...qil,...kq->...ikl", gam.conj_barred(), g)
    )
    dbg = np.stack([backend.d(g, n + i) for i in range(n)], axis=-3)
    r2 = (
        dbg
        - np.einsum("...pik,...pl->...ikl", gam.G01, g)
        - np.einsum("...qil,...kq->...ikl", np.conj(gam.G10), g)
    )
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def gamma_trace_residual(g, sc, backend, gam: Christoffels) -> float:
    """``Gamma^p_{ip} - (e_i log det g - C^{qbar}_{i qbar})``."""
    n = backend.n
    L = log_det_derivatives(backend, g)[..., :n]
    lhs = np.einsum("...pip->...i", gam.G10)
    return float(np.max(np.abs(lhs - (L - sc.trace10))))


# -- Ricci ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RicciComponents:
    """Traces ``R20 = R_{kl}``, ``R11 = R_{k lbar}``, ``R02 = R_{kbar lbar}``."""

    R20: np.ndarray
    R11: np.ndarray
    R02: np.ndarray

    @property
    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.R11 - np.conj(np.swapaxes(self.R11, -1, -2))), initial=0.0))

    @property
    def reality_defect(self) -> float:
        return float(np.max(np.abs(self.R02 + np.conj(self.R20)), initial=0.0))

    def as_form(self, symmetrize: bool = True) -> FrameTwoForm:
        """Frame values of ``Ric = (i/2) R_kl th^k^th^l + i R_klbar th^k^thb^l + (i/2) R_kblb thb^k^thb^l``."""
        R11 = self.R11
        if symmetrize:
            R11 = 0.5 * (R11 + np.conj(np.swapaxes(R11, -1, -2)))
        return FrameTwoForm(1j * self.R20, 1j * R11, 1j * self.R02)


def _ricci_from_log_volume(L, second, sc: StructureCoefficients) -> RicciComponents:
    """Assemble the three Ricci traces.

    ``L[..., a]`` are first derivatives of the log volume along the 2n frame
    directions, ``second[..., k, l] = e_k(ebar_l log vol)``.
    """
    n = sc.n
    Lb = L[..., n:]
    tr10, tr01 = sc.trace10, sc.trace01
    Nc = np.conj(sc.Nbar)
    R20 = (
        -np.einsum("pkl,...p->...kl", Nc, Lb)
        + np.einsum("pkl,p->kl", sc.C, tr10)
        + np.einsum("pkl,p->kl", Nc, tr01)
    )
    R11 = (
        -(second - np.einsum("pkl,...p->...kl", sc.CmixBar, Lb))
        + np.einsum("pkl,p->kl", sc.Cmix, tr10)
        - np.einsum("pkl,p->kl", sc.CmixBar, tr01)
    )
    R02 = (
        np.einsum("pkl,...p->...kl", sc.Nbar, L[..., :n])
        - np.einsum("pkl,p->kl", sc.Nbar, tr10)
        - np.einsum("pkl,p->kl", np.conj(sc.C), tr01)
    )
    shape = np.broadcast_shapes(R20.shape, R11.shape, R02.shape)
    return RicciComponents(*(np.broadcast_to(R, shape).astype(complex) for R in (R20, R11, R02)))


def _second_from_first(backend, L):
    n = backend.n
    cols = [
        np.stack([backend.d(L[..., n + l], k) for l in range(n)], axis=-1) for k in range(n)
    ]
    return np.stack(cols, axis=-2)


def ricci_traces(g, sc: StructureCoefficients, backend) -> RicciComponents:
    """Ricci traces of the Chern connection of g.

    Second derivatives of ``log det g`` are frame derivatives of
    ``tr(g^{-1} e_a g)``, never of the determinant field itself.
    """
    g = check_metric(g)
    L = log_det_derivatives(backend, g)
    return _ricci_from_log_volume(L, _second_from_first(backend, L), sc)


def ric_of_volume_form(log_volume, sc: StructureCoefficients, backend) -> RicciComponents:
    """Ricci traces with ``log det g`` replaced by the log of a positive density.

    Takes ``log Omega`` so that positivity is the caller's concern; use
    :func:`log_density` to validate a raw density.
    """
    log_volume = np.asarray(log_volume, dtype=float)
    L = np.stack([backend.d(log_volume, a) for a in range(2 * backend.n)], axis=-1)
    return _ricci_from_log_volume(L, _second_from_first(backend, L), sc)


def log_density(Omega):
    Omega = np.asarray(Omega, dtype=float)
    if np.any(Omega <= 0) or not np.all(np.isfinite(Omega)):
        raise MetricError("volume density must be positive and finite")
    return np.log(Omega)


def chern_ricci_form(rc: RicciComponents, frame: ComplexFrame) -> np.ndarray:
    """Real matrix of ``Ric(omega)`` on the real basis (spatial axes leading)."""
    return rc.as_form().to_real(frame, check=True)


def cric_form(rc: RicciComponents, frame: ComplexFrame) -> np.ndarray:
    """(1,1) part of the Chern-Ricci form."""
    return rc.as_form().project_11().to_real(frame, check=True)


def scalar_curvature(g, rc: RicciComponents):
    """``R = g^{jbar i} R_{i jbar}``."""
    gi = inverse(np.asarray(g, dtype=complex))
    return np.einsum("...ji,...ij->...", gi, rc.R11).real


def hermitian_to_form(g, frame: ComplexFrame) -> np.ndarray:
    """Real matrix of ``omega = i g_{k lbar} theta^k ^ thetabar^l``."""
    g = np.asarray(g, dtype=complex)
    z = np.zeros_like(g)
    return FrameTwoForm(z, 1j * g, z).to_real(frame, check=True)


def form_to_hermitian(omega, frame: ComplexFrame) -> np.ndarray:
    return -1j * FrameTwoForm.from_real(omega, frame).eeb


# -- Laplacians -----------------------------------------------------------------


def canonical_laplacian(g, sc: StructureCoefficients, backend, phi):
    """``g^{jbar i} (e_i ebar_j phi - [e_i, ebar_j]^{(0,1)} phi)``."""
    n = backend.n
    gi = inverse(np.asarray(g, dtype=complex))
    dbar = np.stack([backend.d(phi, n + p) for p in range(n)], axis=-1)
    out = 0.0
    for i in range(n):
        for j in range(n):
            term = backend.dd(phi, i, j) - np.einsum("p,...p->...", sc.CmixBar[:, i, j], dbar)
            out = out + gi[..., j, i] * term
    return np.real(out)


def laplace_beltrami(g, backend: GridBackend, frame: ComplexFrame, phi):
    """Divergence-form Laplace-Beltrami operator of the Riemannian metric
    ``G(X, Y) = omega(X, JY)``, with midpoint-averaged coefficients on the
    diagonal fluxes."""
    from .fiber import standard_J

    grid = backend.grid
    h = grid.h
    W = hermitian_to_form(g, frame)
    G = W @ standard_J(grid.dim)
    G = 0.5 * (G + np.swapaxes(G, -1, -2))
    sqrtdet = np.sqrt(np.linalg.det(G))
    A = sqrtdet[..., None, None] * inverse(G)
    out = np.zeros(grid.shape)
    for a in range(grid.dim):
        Amid = 0.5 * (A[..., a, a] + np.roll(A[..., a, a], -1, a))
        flux = Amid * (np.roll(phi, -1, a) - phi) / h
        out += (flux - np.roll(flux, 1, a)) / h
        for b in range(grid.dim):
            if b != a:
                out += backend.partial(A[..., a, b] * backend.partial(phi, b), a)
    return out / sqrtdet


def torsion_term(g, sc, backend, phi):
    """``tau(d phi) = 2 Re(T^j_{pj} g^{qbar p} ebar_q phi)``."""
    n = backend.n
    gam = chern_christoffels(g, sc, backend)
    Ttr = torsion_components(gam, sc, g).trace
    gi = inverse(np.asarray(g, dtype=complex))
    dbar = np.stack([backend.d(phi, n + q) for q in range(n)], axis=-1)
    return 2 * np.real(np.einsum("...p,...qp,...q->...", Ttr, gi, dbar))


def laplace_compare(g, sc, backend, phi, frame: ComplexFrame | None = None):
    """``Delta_g phi - 2 Delta^C phi - tau(d phi)``.

    For left-invariant data every term is a derivative of an invariant
    function and the residual is identically zero.
    """
    if not isinstance(backend, GridBackend):
        return np.zeros(np.shape(phi))
    frame = frame if frame is not None else backend.grid.frame()
    return (
        laplace_beltrami(g, backend, frame, phi)
        - 2 * canonical_laplacian(g, sc, backend, phi)
        - torsion_term(g, sc, backend, phi)
    )


# -- d J d and the Ricci difference ----------------------------------------------------


def half_djd(F, sc: StructureCoefficients, backend) -> FrameTwoForm:
    """Frame values of ``(1/2) d J d F`` for a real function F.

    On ``(e_i, e_j)``: ``-i [e_i,e_j]^{(0,1)} F``; on ``(e_i, ebar_j)``:
    ``i (e_i ebar_j F - [e_i, ebar_j]^{(0,1)} F)``; on ``(ebar_i, ebar_j)``:
    ``i [ebar_i, ebar_j]^{(1,0)} F``.
    """
    n = backend.n
    D = np.stack([backend.d(F, a) for a in range(2 * n)], axis=-1)
    D10, D01 = D[..., :n], D[..., n:]
    ee = -1j * np.einsum("kij,...k->...ij", -np.conj(sc.Nbar), D01)
    eeb_second = np.stack(
        [np.stack([backend.dd(F, i, j) for j in range(n)], axis=-1) for i in range(n)], axis=-2
    )
    eeb = 1j * (eeb_second - np.einsum("kij,...k->...ij", sc.CmixBar, D01))
    ebeb = 1j * np.einsum("kij,...k->...ij", -sc.Nbar, D10)
    shape = np.broadcast_shapes(ee.shape, eeb.shape, ebeb.shape)
    return FrameTwoForm(*(np.broadcast_to(a, shape) for a in (ee, eeb, ebeb)))


def diffric_check(g_tilde, g, sc: StructureCoefficients, backend) -> FrameTwoForm:
    """``Ric(g~) - Ric(g) + (1/2) d J d log(det g~ / det g)``, expected ~ 0."""
    ratio = np.log(hermitian_det(g_tilde) / hermitian_det(g))
    lhs = ricci_traces(g_tilde, sc, backend).as_form() - ricci_traces(g, sc, backend).as_form()
    return lhs + half_djd(ratio, sc, backend)


def volume_ricci_check(g, log_volume, sc: StructureCoefficients, backend) -> FrameTwoForm:
    """``Ric(omega) - Ric(Omega) + (1/2) d J d log(omega^n / Omega)``."""
    ratio = np.log(hermitian_det(g)) - log_volume
    lhs = ricci_traces(g, sc, backend).as_form() - ric_of_volume_form(log_volume, sc, backend).as_form()
    return lhs + half_djd(ratio, sc, backend)
