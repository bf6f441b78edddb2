"""Chern-Ricci flow of left-invariant almost Hermitian structures.

For invariant data the flow is the linear ODE ``omega' = -2 p11`` with
``p(X, Y) = -1/2 tr(J ad[X,Y]) + 1/2 tr(ad J[X,Y])`` and ``p11`` its
J-invariant part, so everything is available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg

from . import chern
from .fiber import (
    LieAlgebraModel,
    build_complex_frame,
    extract_structure_coefficients,
    project_11,
    require_valid,
)
from .grid import ConstantBackend

EIG_TOL = 1e-10


class HorizonError(ValueError):
    """Evaluation requested past the guarded maximal time."""


def horizon_guard(T: float) -> float:
    return max(1e-9, 1e-6 * T)


def invariant_ricci_2form(m: LieAlgebraModel) -> np.ndarray:
    """``p[a, b] = p(v_a, v_b)`` by the trace formula."""
    f, J = m.structure_constants, m.J
    # tr(J ad Z) = s . Z and tr(ad JZ) = t . JZ for Z = [v_a, v_b]
    t = np.einsum("bab->a", f)
    s = np.einsum("bc,cab->a", J, f)
    return -0.5 * np.einsum("c,cab->ab", s, f) + 0.5 * np.einsum("c,cd,dab->ab", t, J, f)


@dataclass(frozen=True, eq=False)
class InvariantChernRicci:
    model: LieAlgebraModel
    p: np.ndarray
    p11: np.ndarray
    P0: np.ndarray
    eigenvalues: np.ndarray
    eigenbasis: np.ndarray

    @property
    def omega0(self) -> np.ndarray:
        return self.model.omega0

    @property
    def p_plus(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def multiplicity(self) -> int:
        """Real multiplicity of the top eigenvalue."""
        top = self.p_plus
        return int(np.sum(np.abs(self.eigenvalues - top) <= 1e-8 * max(1.0, abs(top))))

    def defect(self) -> dict:
        """Residuals of the defining properties of P0."""
        W, J, G = self.omega0, self.model.J, self.model.metric
        P = self.P0
        return {
            "omega0(P0 X, Y) - p11": float(np.max(np.abs(P.T @ W - self.p11))),
            "[P0, J]": float(np.max(np.abs(P @ J - J @ P))),
            "g0-selfadjoint": float(np.max(np.abs(G @ P - (G @ P).T))),
        }


def invariant_chern_ricci(m: LieAlgebraModel) -> InvariantChernRicci:
    require_valid(m)
    p = invariant_ricci_2form(m)
    p11 = project_11(p, m.J)
    W = m.omega0
    P0 = np.linalg.solve(W, p11)
    G = m.metric
    G = 0.5 * (G + G.T)
    GP = G @ P0
    evals, evecs = scipy.linalg.eigh(0.5 * (GP + GP.T), G)
    return InvariantChernRicci(m, p, p11, P0, evals, evecs)


def maximal_time(icr: InvariantChernRicci) -> float:
    if icr.p_plus <= EIG_TOL:
        return math.inf
    return 1.0 / (2.0 * icr.p_plus)


def _check_time(icr, t):
    if t < 0:
        raise HorizonError(f"negative time {t}")
    T = maximal_time(icr)
    if math.isfinite(T) and t > T - horizon_guard(T):
        raise HorizonError(f"t = {t!r} is past the guarded horizon of T = {T!r}")


def flow_at(icr: InvariantChernRicci, t: float) -> np.ndarray:
    """``omega_t = omega_0 - 2 t p11``."""
    _check_time(icr, t)
    return icr.omega0 - 2.0 * t * icr.p11


def operator_at(icr: InvariantChernRicci, t: float) -> np.ndarray:
    """``P_t = (Id - 2t P_0)^{-1} P_0``."""
    _check_time(icr, t)
    d = icr.P0.shape[0]
    return np.linalg.solve(np.eye(d) - 2.0 * t * icr.P0, icr.P0)


def scalar_curvature_at(icr: InvariantChernRicci, t: float) -> float:
    _check_time(icr, t)
    p = icr.eigenvalues
    return float(np.sum(p / (1.0 - 2.0 * t * p)))


def scalar_curvature_rate(icr: InvariantChernRicci, t: float) -> float:
    """``dR/dt = sum 2 p^2 / (1 - 2 t p)^2``."""
    _check_time(icr, t)
    p = icr.eigenvalues
    return float(np.sum(2 * p**2 / (1.0 - 2.0 * t * p) ** 2))


def total_curvature(icr: InvariantChernRicci, t: float) -> float:
    """``int_0^t R = -1/2 sum log(1 - 2 t p)``."""
    p = icr.eigenvalues
    return float(-0.5 * np.sum(np.log1p(-2.0 * t * p)))


@dataclass(frozen=True)
class BlowupRow:
    eps: float
    integral: float
    integral_quad: float
    r_times_eps: float


def blowup_diagnostics(icr: InvariantChernRicci, eps_list) -> list[BlowupRow]:
    T = maximal_time(icr)
    if not math.isfinite(T):
        raise HorizonError("no finite-time singularity: T is infinite")
    p = icr.eigenvalues
    rows = []
    for eps in eps_list:
        eps = float(eps)
        if not 0 < eps < T:
            raise ValueError(f"epsilon must lie in (0, T), got {eps}")
        te = T - eps
        closed = total_curvature(icr, te)
        quad, _ = scipy.integrate.quad(
            lambda s: float(np.sum(p / (1.0 - 2.0 * s * p))), 0.0, te, epsabs=0.0, epsrel=1e-8, limit=200
        )
        R = float(np.sum(p / (1.0 - 2.0 * te * p)))
        rows.append(BlowupRow(eps, closed, quad, R * eps))
    return rows


def normalized_flow_at(icr: InvariantChernRicci, t: float) -> np.ndarray:
    """Solution of ``omega' = -2 p11 - omega``: ``e^{-t}(omega_0 + 2 p11) - 2 p11``."""
    return math.exp(-t) * (icr.omega0 + 2 * icr.p11) - 2 * icr.p11


def normalized_flow_rate(icr: InvariantChernRicci, t: float) -> np.ndarray:
    return -math.exp(-t) * (icr.omega0 + 2 * icr.p11)


def normalized_from_unnormalized(icr: InvariantChernRicci, t: float) -> np.ndarray:
    """``omega(t) = omega~(s) / (s + 1)`` with ``s = e^t - 1``."""
    s = math.expm1(t)
    return flow_at(icr, s) / (s + 1.0)


def rk4_integrate(rhs, y0, t_end: float, dt: float):
    """Classical fourth-order scheme for ``y' = rhs(t, y)``; returns ``(ts, ys)``."""
    nsteps = max(1, int(math.ceil(t_end / dt - 1e-12)))
    h = t_end / nsteps
    y = np.array(y0, dtype=float)
    ts, ys = [0.0], [y.copy()]
    t = 0.0
    for k in range(nsteps):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = (k + 1) * h
        ts.append(t)
        ys.append(y.copy())
    return np.array(ts), np.array(ys)


def ode_crosscheck(icr: InvariantChernRicci, t_end: float, dt: float, normalized: bool = False) -> float:
    """Max deviation between RK4 integration and the closed form."""
    if normalized:
        rhs = lambda t, w: -2 * icr.p11 - w  # noqa: E731
        exact = lambda t: normalized_flow_at(icr, t)  # noqa: E731
    else:
        _check_time(icr, t_end)
        rhs = lambda t, w: -2 * icr.p11  # noqa: E731
        exact = lambda t: flow_at(icr, t)  # noqa: E731
    ts, ys = rk4_integrate(rhs, icr.omega0, t_end, dt)
    return float(max(np.max(np.abs(y - exact(t))) for t, y in zip(ts, ys)))


def omega_positive(omega, J, tol: float = 0.0) -> bool:
    G = omega @ J
    return bool(np.linalg.eigvalsh(0.5 * (G + G.T))[0] > tol)


# -- sampling ---------------------------------------------------------------------


@dataclass
class FlowSample:
    t: float
    omega: np.ndarray
    P: np.ndarray
    eigenvalues: np.ndarray
    R: float


@dataclass
class FlowCurve:
    samples: list = field(default_factory=list)
    T_max: float = math.inf
    normalized: bool = False

    @property
    def times(self):
        return np.array([s.t for s in self.samples])

    @property
    def R(self):
        return np.array([s.R for s in self.samples])


def sample_flow(icr: InvariantChernRicci, ts, normalized: bool = False) -> FlowCurve:
    curve = FlowCurve(T_max=maximal_time(icr), normalized=normalized)
    J = icr.model.J
    for t in ts:
        t = float(t)
        if normalized:
            omega = normalized_flow_at(icr, t)
            P = np.linalg.solve(omega, icr.p11)
            # eigenvalues of the Chern-Ricci operator of the rescaled metric
            lam = np.sort(np.linalg.eigvals(P).real)
            R = float(np.sum(lam))
        else:
            omega = flow_at(icr, t)
            P = operator_at(icr, t)
            lam = np.sort(icr.eigenvalues / (1.0 - 2.0 * t * icr.eigenvalues))
            R = scalar_curvature_at(icr, t)
        if not omega_positive(omega, J):
            raise HorizonError(f"metric lost positivity at t = {t!r}")
        curve.samples.append(FlowSample(t, omega, P, lam, R))
    return curve


# -- cross-module comparison ------------------------------------------------------


def connection_chern_ricci(m: LieAlgebraModel, omega=None):
    """Chern-Ricci data of an invariant metric computed from the connection.

    Returns ``(Ric, cric, R)``: the full real Ricci form, its (1,1) part and
    the Chern scalar curvature ``tr_omega Ric``.
    """
    omega = m.omega0 if omega is None else np.asarray(omega, dtype=float)
    fr = build_complex_frame(m.J)
    sc = extract_structure_coefficients(m, fr)
    g = chern.form_to_hermitian(omega, fr)
    rc = chern.ricci_traces(g, sc, ConstantBackend(fr.n))
    return chern.chern_ricci_form(rc, fr), chern.cric_form(rc, fr), float(chern.scalar_curvature(g, rc))


def proportionality(a, b, tol: float = 1e-12):
    """Best ``k`` with ``a = k b`` and the relative residual ``|a - k b| / |a|``."""
    a, b = np.ravel(a), np.ravel(b)
    nb = float(b @ b)
    if nb <= tol**2:
        return math.nan, math.inf
    k = float(a @ b) / nb
    return k, float(np.linalg.norm(a - k * b) / max(np.linalg.norm(a), tol))


def measure_kappa(m: LieAlgebraModel):
    """``kappa`` with ``cric(omega_0) = kappa p11`` and the fit residual."""
    icr = invariant_chern_ricci(m)
    _, cric, _ = connection_chern_ricci(m)
    return proportionality(cric, icr.p11)
