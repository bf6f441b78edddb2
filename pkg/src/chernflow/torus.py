"""Parabolic complex Monge-Ampere flow on flat tori.

The Chern-Ricci flow from ``omega_0`` is ``omega(t) = omega^_t + ddbar phi``
where ``phi' = log((omega^_t + ddbar phi)^n / Omega)``, ``phi(0) = 0``.  The
torus uses the standard complex structure and the coordinate frame
``e_j = d/dz_j``, so every bracket term drops.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import chern
from .chern import hermitian_det, hermitian_min_eig
from .fiber import StructureCoefficients
from .grid import GridBackend, TorusGrid

log = logging.getLogger(__name__)

TOL_CONVERGE = 1e-6
SAMPLE_EVERY = 50
MAX_REJECTIONS = 20


class PositivityError(ArithmeticError):
    """``omega^ + ddbar phi`` is not positive at some grid point."""

    def __init__(self, index, min_eigenvalue):
        self.index = tuple(int(i) for i in index)
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(f"metric not positive at grid index {self.index} (min eigenvalue {self.min_eigenvalue:.6g})")


class FlowAbort(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


# -- positivity guard -----------------------------------------------------------------


def check_positive(g):
    """Minimum eigenvalue over the grid; raises PositivityError if it is not positive."""
    lam = hermitian_min_eig(g)
    if not np.all(np.isfinite(lam)):
        bad = np.argwhere(~np.isfinite(lam))[0]
        raise PositivityError(bad, math.nan)
    idx = np.unravel_index(np.argmin(lam), lam.shape)
    if lam[idx] <= 0:
        raise PositivityError(idx, lam[idx])
    return float(lam[idx])


# -- complex Hessians ---------------------------------------------------------------


def ddbar_fd(grid: TorusGrid, phi, backend: GridBackend | None = None):
    """``phi_{z_i zbar_j}`` with second-order central stencils."""
    backend = backend or GridBackend(grid)
    n = grid.n
    P = backend.pad(phi)
    out = np.empty(grid.shape + (n, n), dtype=complex)
    for i in range(n):
        out[..., i, i] = backend.dd(phi, i, i, P)
        for j in range(i + 1, n):
            out[..., i, j] = backend.dd(phi, i, j, P)
            out[..., j, i] = np.conj(out[..., i, j])
    return out


def ddbar_spectral(grid: TorusGrid, phi):
    """``phi_{z_i zbar_j}`` by Fourier differentiation (reference for FD errors)."""
    n = grid.n
    k = 2j * np.pi * np.fft.fftfreq(grid.N, d=grid.h)
    if grid.N % 2 == 0:
        k[grid.N // 2] = 0.0
    ph = np.fft.fftn(phi)
    K = np.meshgrid(*([k] * grid.dim), indexing="ij")

    def d2(a, b):
        return np.fft.ifftn(K[a] * K[b] * ph).real

    out = np.empty(grid.shape + (n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
            out[..., i, j] = 0.25 * ((d2(xi, xj) + d2(yi, yj)) + 1j * (d2(xi, yj) - d2(yi, xj)))
    return out


# -- initial metrics -----------------------------------------------------------------


def _sine_product(grid, frequency, axes):
    X = grid.coords()
    out = np.ones(grid.shape)
    for ax in axes:
        out = out * np.sin(2 * np.pi * frequency * X[ax])
    return out


def flat_metric(grid: TorusGrid, scale: float = 1.0):
    return np.broadcast_to(scale * np.eye(grid.n, dtype=complex), grid.shape + (grid.n, grid.n)).copy()


def conformal_metric(grid: TorusGrid, amplitude: float, frequency: int = 1, axes=(0, 1)):
    """``(1 + a prod_k sin(2 pi f x_k)) Id``."""
    if not abs(amplitude) < 1:
        raise ValueError(f"conformal amplitude must satisfy |a| < 1, got {amplitude}")
    if any(not 0 <= ax < grid.dim for ax in axes):
        raise ValueError(f"axes out of range for dimension {grid.dim}: {axes}")
    u = 1 + amplitude * _sine_product(grid, frequency, axes)
    return u[..., None, None] * np.eye(grid.n)


def diagonal_metric(grid: TorusGrid, entries):
    """Diagonal metric with entries ``1 + a_j prod sin(...)`` given as dicts."""
    if len(entries) != grid.n:
        raise ValueError(f"need {grid.n} diagonal entries, got {len(entries)}")
    g = np.zeros(grid.shape + (grid.n, grid.n), dtype=complex)
    for j, e in enumerate(entries):
        a = float(e.get("amplitude", 0.0))
        if not abs(a) < 1:
            raise ValueError(f"diagonal amplitude must satisfy |a| < 1, got {a}")
        g[..., j, j] = 1 + a * _sine_product(grid, int(e.get("frequency", 1)), e.get("axes", (2 * j, 2 * j + 1)))
    return g


def torus_structure(grid: TorusGrid) -> StructureCoefficients:
    return StructureCoefficients.zeros(grid.n)


# -- reference metrics -----------------------------------------------------------------


@dataclass(eq=False)
class Reference:
    """Reference metrics ``omega^_t = alpha_t + (t/T0) ddbar phi_T0`` and volume ``Omega``."""

    grid: TorusGrid
    g0: np.ndarray
    T0: float
    phi_T0: np.ndarray
    log_omega: np.ndarray
    _ddbar_arg: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        logdet = np.log(hermitian_det(self.g0))
        self._ddbar_arg = ddbar_fd(self.grid, logdet + self.phi_T0 / self.T0)
        self._static = not np.any(self._ddbar_arg)

    def g_hat(self, t: float):
        """On a torus ``cric(omega_0) = -ddbar log det g_0`` so ``omega^_t = omega_0 + t ddbar(log det g_0 + phi_T0/T0)``."""
        if self._static:
            return self.g0
        g = self.g0 + t * self._ddbar_arg
        check_positive(g)
        return g

    def alpha(self, t: float):
        """``omega_0 - t cric(omega_0)`` with cric from the Chern connection."""
        rc = chern.ricci_traces(self.g0, torus_structure(self.grid), GridBackend(self.grid))
        return self.g0 - t * 0.5 * (rc.R11 + np.conj(np.swapaxes(rc.R11, -1, -2)))

    def equivalence_constant(self, t: float) -> float:
        """Smallest ``C0`` with ``C0^{-1} omega_0 <= omega^_t <= C0 omega_0`` on the grid."""
        gh = self.g_hat(t)
        L = np.linalg.cholesky(self.g0)
        Li = np.linalg.inv(L)
        M = Li @ gh @ np.conj(np.swapaxes(Li, -1, -2))
        lam = np.linalg.eigvalsh(M)
        return float(max(lam.max(), 1.0 / lam.min()))


def build_reference(grid: TorusGrid, g0, T0: float = 1.0, phi_T0=None) -> Reference:
    """Reference data for the flow from ``g0``.

    The default ``phi_T0 = -T0 log det g0`` makes ``omega^_t = omega_0`` and
    ``Omega`` the flat density exactly.
    """
    g0 = np.asarray(g0, dtype=complex)
    check_positive(g0)
    if T0 <= 0:
        raise ValueError("T0 must be positive")
    logdet = np.log(hermitian_det(g0))
    if phi_T0 is None:
        phi_T0 = -T0 * logdet
    phi_T0 = np.asarray(phi_T0, dtype=float)
    log_omega = logdet + phi_T0 / T0
    return Reference(grid, g0, float(T0), phi_T0, log_omega)


# -- the flow ----------------------------------------------------------------------------


def ma_rhs(grid: TorusGrid, g_hat, log_omega, phi, backend=None):
    """``log det(g^ + ddbar phi) - log Omega``; also returns the minimum eigenvalue."""
    g = g_hat + ddbar_fd(grid, phi, backend)
    lam = check_positive(g)
    return np.log(hermitian_det(g)) - log_omega, lam


def stable_dt(grid: TorusGrid, min_eig: float, sigma: float) -> float:
    """``sigma h^2 / (n max eig g^{-1})``; puts the fastest mode at ``2 sigma`` on the real axis."""
    return sigma * grid.h**2 * min_eig / grid.n


@dataclass
class FlowConfig:
    t_end: float = math.inf
    sigma: float = 0.5
    tol_converge: float = TOL_CONVERGE
    sample_every: int = SAMPLE_EVERY
    max_steps: int = 10**7
    max_rejections: int = MAX_REJECTIONS
    reconstruct: bool = False


@dataclass
class MonitorRecord:
    t: float
    sup_phi: float
    sup_phidot: float
    vol_ratio_min: float
    vol_ratio_max: float
    min_eig: float
    osc_phidot: float
    mean_phidot: float
    volume: float

    FIELDS = (
        "t",
        "sup_phi",
        "sup_phidot",
        "vol_ratio_min",
        "vol_ratio_max",
        "min_eig",
        "osc_phidot",
        "mean_phidot",
        "volume",
    )

    def row(self):
        return [getattr(self, k) for k in self.FIELDS]


@dataclass
class TorusFlowTrace:
    grid: TorusGrid
    records: list = field(default_factory=list)
    phi: np.ndarray | None = None
    phidot: np.ndarray | None = None
    t: float = 0.0
    steps: int = 0
    rejections: int = 0
    converged: bool = False
    phi_reconstructed: np.ndarray | None = None
    rejection_log: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def b_measured(self) -> float:
        return float(self.grid.mean(self.phidot))


class TorusFlow:
    def __init__(self, grid: TorusGrid, g0, config: FlowConfig | None = None, reference: Reference | None = None):
        self.grid = grid
        self.backend = GridBackend(grid)
        self.config = config or FlowConfig()
        self.ref = reference or build_reference(grid, g0)
        self.g0 = self.ref.g0
        self.logdet0 = np.log(hermitian_det(self.g0))

    def rhs(self, t, phi):
        return ma_rhs(self.grid, self.ref.g_hat(t), self.ref.log_omega, phi, self.backend)

    def step(self, t, phi, dt, k1=None):
        """One classical RK4 step; every stage is positivity-checked."""
        if k1 is None:
            k1, _ = self.rhs(t, phi)
        k2, _ = self.rhs(t + dt / 2, phi + dt / 2 * k1)
        k3, _ = self.rhs(t + dt / 2, phi + dt / 2 * k2)
        k4, _ = self.rhs(t + dt, phi + dt * k3)
        new = phi + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(new)):
            raise PositivityError((0,) * self.grid.dim, math.nan)
        return new

    def _record(self, trace, t, phi, phidot):
        g = self.ref.g_hat(t) + ddbar_fd(self.grid, phi, self.backend)
        logdet = np.log(hermitian_det(g))
        ratio = np.exp(logdet - self.logdet0)
        trace.records.append(
            MonitorRecord(
                t=float(t),
                sup_phi=float(np.max(np.abs(phi))),
                sup_phidot=float(np.max(np.abs(phidot))),
                vol_ratio_min=float(ratio.min()),
                vol_ratio_max=float(ratio.max()),
                min_eig=float(hermitian_min_eig(g).min()),
                osc_phidot=float(phidot.max() - phidot.min()),
                mean_phidot=float(self.grid.mean(phidot)),
                volume=float(self.grid.mean(np.exp(logdet))),
            )
        )

    def run(self, phi0=None, t0: float = 0.0) -> TorusFlowTrace:
        cfg = self.config
        grid = self.grid
        phi = np.zeros(grid.shape) if phi0 is None else np.array(phi0, dtype=float)
        t = float(t0)
        trace = TorusFlowTrace(grid)
        phidot, lam = self.rhs(t, phi)
        recon = np.zeros(grid.shape) if cfg.reconstruct else None
        self._record(trace, t, phi, phidot)
        since_sample = 0
        while True:
            osc = float(phidot.max() - phidot.min())
            if osc < cfg.tol_converge:
                trace.converged = True
                break
            if t >= cfg.t_end or trace.steps >= cfg.max_steps:
                break
            dt = min(stable_dt(grid, lam, cfg.sigma), cfg.t_end - t)
            while True:
                try:
                    new = self.step(t, phi, dt, k1=phidot)
                    new_dot, new_lam = self.rhs(t + dt, new)
                    break
                except PositivityError as err:
                    trace.rejections += 1
                    trace.rejection_log.append((t, dt, err.index, err.min_eigenvalue))
                    log.debug("step rejected at t=%g dt=%g: %s", t, dt, err)
                    if trace.rejections > cfg.max_rejections:
                        trace.phi, trace.phidot, trace.t = phi, phidot, t
                        raise FlowAbort(
                            f"aborted at t = {t!r} after {trace.rejections} step rejections: {err}", trace
                        ) from err
                    dt /= 2
            if recon is not None:
                recon += 0.5 * dt * (phidot + new_dot)
            phi, phidot, lam = new, new_dot, new_lam
            t += dt
            trace.steps += 1
            since_sample += 1
            if since_sample >= cfg.sample_every:
                self._record(trace, t, phi, phidot)
                since_sample = 0
        if trace.records[-1].t != t:
            self._record(trace, t, phi, phidot)
        trace.phi, trace.phidot, trace.t = phi, phidot, t
        trace.phi_reconstructed = recon
        return trace


def run_flow(grid: TorusGrid, g0, **kwargs) -> TorusFlowTrace:
    return TorusFlow(grid, g0, FlowConfig(**kwargs)).run()


# -- diagnostics ---------------------------------------------------------------------------


def volume_constant(ref: Reference) -> float:
    """``log(int omega_0^n / int Omega)``: the limit of ``phi'`` for n = 1."""
    g = ref.grid
    return float(math.log(g.mean(hermitian_det(ref.g0)) / g.mean(np.exp(ref.log_omega))))


@dataclass(frozen=True)
class StationaryResidual:
    monge_ampere: float
    chern_ricci: float


def stationary_residual(ref: Reference, phi, b: float, spectral: bool = False) -> StationaryResidual:
    """``sup |(omega_0 + ddbar phi)^n - e^b Omega|`` and ``sup |cric(omega_inf)|``."""
    grid = ref.grid
    hess = ddbar_spectral(grid, phi) if spectral else ddbar_fd(grid, phi)
    g = ref.g0 + hess
    ma = float(np.max(np.abs(hermitian_det(g) - math.exp(b) * np.exp(ref.log_omega))))
    rc = chern.ricci_traces(g, torus_structure(grid), GridBackend(grid))
    return StationaryResidual(ma, float(np.max(np.abs(rc.R11))))


def reconstruction_error(ref: Reference, trace: TorusFlowTrace) -> float:
    """``sup |omega^_t + ddbar phi~ - omega(t)|`` with ``phi~`` the trapezoid integral of ``phi'``."""
    if trace.phi_reconstructed is None:
        raise ValueError("run with reconstruct=True")
    grid = ref.grid
    gt = ref.g_hat(trace.t)
    return float(np.max(np.abs(gt + ddbar_fd(grid, trace.phi_reconstructed) - (gt + ddbar_fd(grid, trace.phi)))))


@dataclass(frozen=True)
class BoundsReport:
    sup_phi: float
    sup_phidot: float
    pinching: float
    min_eig: float

    @property
    def ok(self) -> bool:
        vals = (self.sup_phi, self.sup_phidot, self.pinching)
        return all(math.isfinite(v) for v in vals) and self.min_eig > 0


def monitor_bounds(trace: TorusFlowTrace) -> BoundsReport:
    return BoundsReport(
        sup_phi=float(trace.column("sup_phi").max()),
        sup_phidot=float(trace.column("sup_phidot").max()),
        pinching=float(trace.column("vol_ratio_max").max() / trace.column("vol_ratio_min").min()),
        min_eig=float(trace.column("min_eig").min()),
    )


def linearized_decay_rate(grid: TorusGrid, amplitude: float = 1e-3, t_end: float = 0.25, sigma: float = 0.5) -> float:
    """Decay rate of ``phi0 = a sin(2 pi x_0)`` under the flow from the flat metric.

    Near the flat metric ``phi' ~ (1/4) Delta phi``, so the mode decays at ``pi^2``.
    The rate is read off the sine coefficient at ``t_end``.
    """
    X = grid.coords()
    mode = np.sin(2 * np.pi * X[0])
    cfg = FlowConfig(t_end=t_end, sigma=sigma, tol_converge=0.0)
    trace = TorusFlow(grid, flat_metric(grid), cfg).run(phi0=amplitude * mode)
    coeff = grid.mean(trace.phi * mode) / grid.mean(mode * mode)
    return float(-math.log(coeff / amplitude) / trace.t)


# -- checkpoints ------------------------------------------------------------------------------


def save_checkpoint(path, phi, grid: TorusGrid, t: float):
    with open(path, "wb") as fh:
        np.savez(fh, phi=np.asarray(phi, dtype=np.float64), n=grid.n, N=grid.N, t=np.float64(t))


def load_checkpoint(path):
    """Returns ``(phi, grid, t)``."""
    with np.load(path) as data:
        grid = TorusGrid(int(data["n"]), int(data["N"]))
        phi = data["phi"]
        if phi.shape != grid.shape:
            raise ValueError(f"checkpoint array shape {phi.shape} does not match grid {grid.shape}")
        return phi, grid, float(data["t"])
