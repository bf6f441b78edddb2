"""Identity suite: every structural identity the library relies on, evaluated
on a model and reported as (identity, residual, tolerance) rows."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import chern, homogeneous as hom, torus
from .fiber import (
    DTheta,
    LieAlgebraModel,
    anti_part,
    build_complex_frame,
    djd_from_jet,
    dtheta_coefficients,
    extract_structure_coefficients,
    jacobiator,
    nijenhuis,
    nijenhuis_identities,
    nijenhuis_table,
    random_jet,
    reconstruct_brackets,
    trace_against,
)
from .grid import ConstantBackend, GridBackend, JetBackend, TorusGrid
from .registry import EXAMPLES, TorusModel, model_from_dict

SEED = 20240611
RATIO_BAND = (3.2, 4.8)


@dataclass(frozen=True)
class CheckRow:
    model: str
    identity: str
    residual: float
    tol: float
    passed: bool
    note: str = ""


def _row(model, identity, residual, tol, note=""):
    residual = float(residual)
    return CheckRow(model, identity, residual, tol, bool(residual <= tol), note)


def _rel(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b), initial=0.0) / max(1.0, float(np.max(np.abs(b), initial=0.0))))


# -- invariant data ---------------------------------------------------------------------


def validation_rows(m: LieAlgebraModel):
    f, J, W = m.structure_constants, m.J, m.omega0
    G = W @ J
    return [
        _row(m.name, "bracket antisymmetry", np.max(np.abs(f + f.transpose(0, 2, 1)), initial=0.0), 1e-12),
        _row(m.name, "Jacobi identity", np.max(np.abs(jacobiator(f)), initial=0.0), 1e-12),
        _row(m.name, "J^2 = -Id", np.max(np.abs(J @ J + np.eye(m.dim))), 1e-12),
        _row(m.name, "omega0 skew", np.max(np.abs(W + W.T)), 1e-12),
        _row(m.name, "omega0 J-compatible", np.max(np.abs(J.T @ W @ J - W)), 1e-12),
        _row(
            m.name,
            "omega0 positive (-min eig of g0)",
            -np.linalg.eigvalsh(0.5 * (G + G.T))[0],
            0.0,
            note="must be negative",
        ),
    ]


def algebra_rows(m: LieAlgebraModel, rng):
    name = m.name
    rows = []
    d = m.dim
    X = rng.standard_normal((200, d))
    Y = rng.standard_normal((200, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    Y /= np.linalg.norm(Y, axis=1, keepdims=True)
    for ident, r in nijenhuis_identities(m, X, Y).items():
        rows.append(_row(name, f"Nijenhuis {ident}", r, 1e-12))
    Nt = nijenhuis_table(m)
    rows.append(
        _row(name, "Nijenhuis table = bracket formula", np.max(np.abs(np.einsum("cab,ka,kb->kc", Nt, X, Y) - nijenhuis(m, X, Y))), 1e-12)
    )
    fr = build_complex_frame(m.J)
    sc = extract_structure_coefficients(m, fr)
    E = fr.frame_matrix
    n = fr.n
    Nee = np.einsum("cab,ai,bj->cij", Nt, E, E)
    bee = np.einsum("cab,ai,bj->cij", m.structure_constants, E, E)
    part01 = bee - np.einsum("ck,kij->cij", E, np.einsum("kc,cij->kij", fr.theta, bee))
    rows.append(_row(name, "N(e_i,e_j) = -4 [e_i,e_j]^(0,1)", np.max(np.abs(Nee + 4 * part01)), 1e-12))
    rows.append(
        _row(name, "N(e_i,ebar_j) = 0", np.max(np.abs(np.einsum("cab,ai,bj->cij", Nt, E, E.conj()))), 1e-12)
    )
    rows.append(
        _row(
            name,
            "Nbar = theta(N(ebar_i,ebar_j)) / 4",
            np.max(np.abs(np.einsum("kc,cab,ai,bj->kij", fr.theta, Nt, E.conj(), E.conj()) / 4 - sc.Nbar)),
            1e-12,
        )
    )
    rows.append(
        _row(name, "structure coefficient round trip", np.max(np.abs(reconstruct_brackets(sc, fr) - m.structure_constants)), 1e-12)
    )
    # d theta^i(X, Y) = -theta^i([X, Y]) on every pair of complex frame vectors
    B = fr.basis
    direct = -np.einsum("ic,cab,am,bn->imn", fr.theta, m.structure_constants, B, B)
    dt: DTheta = dtheta_coefficients(sc)
    formed = np.stack([dt.form(i).block() for i in range(n)])
    rows.append(_row(name, "d theta^i frame values", np.max(np.abs(direct - formed)), 1e-12))
    # dJd on frame pairs, and its failure to be (1,1)
    worst_djd = worst_anti = 0.0
    for _ in range(20):
        grad, hess = random_jet(m, rng)
        full = djd_from_jet(m, grad, hess)
        half = chern.half_djd(0.0, sc, JetBackend(fr, grad, hess))
        worst_djd = max(worst_djd, np.max(np.abs(half.to_real(fr) - 0.5 * full)))
        JdJ = np.einsum("ca,cd,db->ab", m.J, full, m.J)
        rhs = -np.einsum("c,cd,dab->ab", grad, m.J, Nt)
        worst_anti = max(worst_anti, np.max(np.abs(full - JdJ - rhs)))
    rows.append(_row(name, "dJd frame components", worst_djd, 1e-12))
    rows.append(_row(name, "dJd(X,Y) - dJd(JX,JY) = -(J N(X,Y)) phi", worst_anti, 1e-12))
    return rows


def connection_rows(name, g, sc, backend, tol=1e-10):
    rows = []
    gam = chern.chern_christoffels(g, sc, backend)
    rows.append(_row(name, "metric compatibility", chern.metric_compatibility_residual(g, sc, backend, gam), tol))
    rows.append(_row(name, "(1,1) torsion S = 0", np.max(np.abs(chern.torsion_11(gam, sc))), 1e-12))
    rows.append(_row(name, "Gamma trace = e_i log det g - C^qbar_(i qbar)", chern.gamma_trace_residual(g, sc, backend, gam), tol))
    tors = chern.torsion_components(gam, sc, g)
    rows.append(
        _row(name, "lowered torsion expansion", np.max(np.abs(tors.lowered - chern.torsion_lowered_explicit(g, sc, backend))), tol)
    )
    A = chern.dbar_omega(g, sc, backend)
    rows.append(
        _row(name, "dbar omega = conj(T_(ji kbar)) pattern", np.max(np.abs(A - np.conj(np.einsum("...jik->...kij", tors.lowered)))), tol)
    )
    rc = chern.ricci_traces(g, sc, backend)
    rows.append(_row(name, "Ric reality R02 = -conj(R20)", rc.reality_defect, tol))
    return rows, rc


def invariant_rows(m: LieAlgebraModel, rng):
    name = m.name
    fr = build_complex_frame(m.J)
    sc = extract_structure_coefficients(m, fr)
    g = chern.form_to_hermitian(m.omega0, fr)
    be = ConstantBackend(fr.n)
    rows, rc = connection_rows(name, g, sc, be)
    rows.append(_row(name, "R_(k lbar) Hermitian", rc.hermitian_defect, 1e-10))
    ric = chern.chern_ricci_form(rc, fr)
    sigma = -sc.trace10 @ fr.theta + sc.trace01 @ fr.dual[fr.n :]
    oracle = -1j * np.einsum("c,cab->ab", sigma, m.structure_constants)
    rows.append(_row(name, "Ric = -i sigma([X,Y]) (invariant oracle)", np.max(np.abs(ric - oracle)), 1e-10))
    icr = hom.invariant_chern_ricci(m)
    rows.append(_row(name, "Ric from connection = p (trace formula)", np.max(np.abs(ric - icr.p)), 1e-10))
    if np.max(np.abs(nijenhuis_table(m))) <= 1e-14:
        rows.append(_row(name, "integrable J: Ric is (1,1)", np.max(np.abs(anti_part(ric, m.J))), 1e-10))
    cric = chern.cric_form(rc, fr)
    R = chern.scalar_curvature(g, rc)
    rows.append(_row(name, "tr Ric = tr cric = g^(jbar i) R_(i jbar)", max(abs(trace_against(ric, m.omega0) - R), abs(trace_against(cric, m.omega0) - R)), 1e-10))
    # Ricci of a second invariant metric: the log volume ratio is constant
    T = hom.maximal_time(icr)
    t1 = 0.25 if not math.isfinite(T) else 0.25 * T
    for label, other in (("3 omega0", 3.0 * m.omega0), ("omega_t", hom.flow_at(icr, t1))):
        g2 = chern.form_to_hermitian(other, fr)
        rows.append(_row(name, f"diffric residual, pair ({label}, omega0)", chern.diffric_check(g2, g, sc, be).sup_norm(), 1e-12))
    rows.append(_row(name, "Laplacian comparison (invariant function)", np.max(np.abs(chern.laplace_compare(g, sc, be, 0.0))), 0.0))
    k, resid = hom.proportionality(cric, icr.p11)
    if math.isnan(k):
        rows.append(_row(name, "kappa: cric = 0 = p11 (flat)", np.max(np.abs(cric)) + np.max(np.abs(icr.p11)), 1e-12))
    else:
        rows.append(_row(name, "kappa: cric proportional to p11", resid, 1e-10, note=f"kappa = {k!r}; cric / (2 p11) = {k / 2!r}"))
    return rows


def flow_rows(m: LieAlgebraModel):
    name = m.name
    icr = hom.invariant_chern_ricci(m)
    rows = [_row(name, f"P0 {k}", v, 1e-10) for k, v in icr.defect().items()]
    T = hom.maximal_time(icr)
    t_max = min(10.0, 0.9 * T)
    rows.append(_row(name, "closed form vs RK4", hom.ode_crosscheck(icr, t_max, 1e-2), 1e-10))
    ts = np.linspace(0.0, t_max, 101)
    w_p = w_r = w_tr = 0.0
    R_eig, R_chern = [], []
    for t in ts:
        om = hom.flow_at(icr, t)
        P = hom.operator_at(icr, t)
        w_p = max(w_p, np.max(np.abs(P.T @ om - icr.p11)))
        Re = hom.scalar_curvature_at(icr, t)
        w_tr = max(w_tr, abs(Re - np.trace(P)) / max(1.0, abs(Re)))
        R_eig.append(Re)
        R_chern.append(hom.connection_chern_ricci(m, om)[2])
    R_eig, R_chern = np.array(R_eig), np.array(R_chern)
    rows.append(_row(name, "omega_t(P_t X, Y) = p11", w_p, 1e-10))
    rows.append(_row(name, "R = sum p/(1-2tp) = tr P_t", w_tr, 1e-12))
    rows.append(_row(name, "R nondecreasing", max(0.0, -np.min(np.diff(R_eig))), 1e-12))
    nz = np.abs(R_eig) > 1e-12
    if nz.any():
        ratio = R_chern[nz] / R_eig[nz]
        rows.append(
            _row(name, "Chern scalar curvature / tr P_t constant", np.ptp(ratio), 1e-8, note=f"ratio = {ratio[0]!r}")
        )
    else:
        rows.append(_row(name, "Chern scalar curvature = 0 (flat)", np.max(np.abs(R_chern)), 1e-12))
    if math.isfinite(T):
        for r in hom.blowup_diagnostics(icr, [1e-2, 1e-3, 1e-4]):
            rows.append(_row(name, f"blow-up integral closed form vs quadrature, eps={r.eps:g}", abs(r.integral - r.integral_quad), 1e-6))
        last = hom.blowup_diagnostics(icr, [1e-4])[0]
        m2 = icr.multiplicity / 2
        rows.append(_row(name, "R(T-eps) eps -> m/2 (relative, eps=1e-4)", abs(last.r_times_eps - m2) / m2, 1e-2))
    # normalized flow
    tn = np.linspace(0.0, 10.0, 51)
    ode = max(np.max(np.abs(hom.normalized_flow_rate(icr, t) + 2 * icr.p11 + hom.normalized_flow_at(icr, t))) for t in tn)
    rows.append(_row(name, "normalized flow ODE residual", ode, 1e-10))
    rows.append(_row(name, "normalized closed form vs RK4", hom.ode_crosscheck(icr, 5.0, 1e-3, normalized=True), 1e-10))
    t_rep = np.linspace(0.0, 5.0 if not math.isfinite(T) else math.log1p(0.9 * T), 51)
    rep = max(np.max(np.abs(hom.normalized_flow_at(icr, t) - hom.normalized_from_unnormalized(icr, t))) for t in t_rep)
    rows.append(_row(name, "reparametrization t = log(s+1)", rep, 1e-10))
    return rows


# -- grid data -----------------------------------------------------------------------------


def _test_functions(grid: TorusGrid):
    X = grid.coords()
    two_pi = 2 * np.pi
    u = 0.3 * np.sin(two_pi * X[0]) * np.cos(two_pi * X[-1])
    phi = np.sin(two_pi * X[0]) * np.cos(two_pi * X[-1]) + 0.5 * np.cos(two_pi * X[1])
    return u, phi


def _refine(model: TorusModel, fn):
    """``fn(grid, g0)`` at N and 2N; returns the two residuals."""
    vals = []
    for N in (model.N, 2 * model.N):
        mm = model.with_resolution(N)
        vals.append(float(fn(mm.grid, mm.initial_metric())))
    return vals


def _refinement_row(name, identity, vals, floor=1e-9):
    coarse, fine = vals
    if coarse <= floor:
        return _row(name, identity + " (at rounding level)", coarse, floor)
    ratio = coarse / fine if fine > 0 else math.inf
    lo, hi = RATIO_BAND
    ok = lo <= ratio <= hi
    return CheckRow(name, identity + " refinement ratio", coarse, floor, ok, note=f"N->2N residuals {coarse:.3e} -> {fine:.3e}, ratio {ratio:.3f}")


def torus_rows(model: TorusModel, run_flow: bool | None = None):
    name = model.name
    grid = model.grid
    g0 = model.initial_metric()
    sc = torus.torus_structure(grid)
    be = GridBackend(grid)
    rows, _ = connection_rows(name, g0, sc, be)

    def herm(grid, g0):
        return chern.ricci_traces(g0, sc, GridBackend(grid)).hermitian_defect

    rows.append(_refinement_row(name, "R_(k lbar) Hermitian defect", _refine(model, herm)))
    u, phi = _test_functions(grid)
    H = torus.ddbar_fd(grid, phi)
    rows.append(_row(name, "ddbar Hermitian", np.max(np.abs(H - np.conj(np.swapaxes(H, -1, -2)))), 1e-12))
    rows.append(_row(name, "ddbar diagonal mean zero", np.max(np.abs(grid.mean(np.einsum("...ii->...i", H)))), 1e-12))
    flat = torus.flat_metric(grid)
    rows.append(_row(name, "flat metric: Laplacian comparison", np.max(np.abs(chern.laplace_compare(flat, sc, be, phi))), 1e-9))

    def lap(grid, g0):
        _, phi = _test_functions(grid)
        return np.max(np.abs(chern.laplace_compare(g0, sc, GridBackend(grid), phi)))

    rows.append(_refinement_row(name, "Laplacian comparison", _refine(model, lap)))

    def diffric(grid, g0):
        u, _ = _test_functions(grid)
        return chern.diffric_check(np.exp(u)[..., None, None] * g0, g0, sc, GridBackend(grid)).sup_norm()

    rows.append(_refinement_row(name, "diffric residual (e^u omega0, omega0)", _refine(model, diffric)))

    def volume(grid, g0):
        u, _ = _test_functions(grid)
        logdet = np.log(torus.hermitian_det(g0))
        return chern.volume_ricci_check(g0, logdet + u, sc, GridBackend(grid)).sup_norm()

    rows.append(_refinement_row(name, "Ric(Omega) identity (Omega = e^u det g0)", _refine(model, volume)))

    def reference(grid, g0):
        ref = torus.build_reference(grid, g0)
        logdet = np.log(torus.hermitian_det(g0))
        worst = 0.0
        for t in (0.0, 1.0, 10.0):
            worst = max(worst, np.max(np.abs(ref.alpha(t) + torus.ddbar_fd(grid, -t * logdet) - g0)))
        return worst

    rows.append(_refinement_row(name, "reference alpha_t + ddbar(-t log det g0) = omega0", _refine(model, reference)))
    ref = torus.build_reference(grid, g0)
    rows.append(_row(name, "reference omega^_t = omega0", max(np.max(np.abs(ref.g_hat(t) - g0)) for t in (0.0, 1.0, 10.0)), 0.0))
    if grid.n == 1 and model.metric == "flat":
        rate = torus.linearized_decay_rate(grid)
        rows.append(_row(name, "linearized decay rate / pi^2 - 1", abs(rate / np.pi**2 - 1), 0.05, note=f"rate = {rate!r}"))
    if run_flow is None:
        # full n = 2 runs belong to the torus command; they are too slow for a check
        run_flow = grid.n == 1
    if run_flow:
        trace = torus.TorusFlow(grid, g0, reference=ref).run()
        rows.append(CheckRow(name, "flow converged (osc phidot < 1e-6)", trace.records[-1].osc_phidot, 1e-6, trace.converged, note=f"t = {trace.t:.4g}, steps = {trace.steps}"))
        b = trace.b_measured
        if grid.n == 1:
            rows.append(_row(name, "b = log(int omega0 / int Omega)", abs(b - torus.volume_constant(ref)), 1e-6, note=f"b = {b!r}"))
        st = torus.stationary_residual(ref, trace.phi, b)
        rows.append(_row(name, "stationary Monge-Ampere residual", st.monge_ampere, 1e-5))
        bounds = torus.monitor_bounds(trace)
        rows.append(
            CheckRow(name, "a priori monitors finite, positivity kept", bounds.min_eig, 0.0, bounds.ok, note=f"sup|phi| = {bounds.sup_phi:.4g}, sup|phidot| = {bounds.sup_phidot:.4g}, pinching = {bounds.pinching:.4g}")
        )
    return rows


# -- drivers --------------------------------------------------------------------------------


def check_model(model, rng=None, expect_invalid: bool = False, run_flow: bool | None = None):
    rng = rng if rng is not None else np.random.default_rng(SEED)
    if isinstance(model, TorusModel):
        return torus_rows(model, run_flow=run_flow)
    rows = validation_rows(model)
    invalid = [r for r in rows if not r.passed]
    if expect_invalid:
        return [CheckRow(model.name, "invalid model rejected", float(max((r.residual for r in invalid), default=0.0)), 0.0, bool(invalid), note=", ".join(r.identity for r in invalid))]
    if invalid:
        return rows
    return rows + algebra_rows(model, rng) + invariant_rows(model, rng) + flow_rows(model)


def kappa_rows(models):
    """Across-model agreement of the measured proportionality constant."""
    ks = []
    for m in models:
        k, _ = hom.measure_kappa(m)
        if not math.isnan(k):
            ks.append((m.name, k))
    if len(ks) < 3:
        return [CheckRow("registry", "kappa: >= 3 non-flat models", float(len(ks)), 3.0, False)]
    vals = np.array([k for _, k in ks])
    return [_row("registry", f"kappa spread across {len(ks)} non-flat models", np.ptp(vals), 1e-8, note=f"kappa = {vals[0]!r}")]


def run_registry(run_flow: bool | None = None):
    rng = np.random.default_rng(SEED)
    rows = []
    lie = []
    for ex in EXAMPLES:
        model = model_from_dict(dict(ex.doc, name=ex.name), allow_non_lie=not ex.valid)
        rows += check_model(model, rng, expect_invalid=not ex.valid, run_flow=run_flow)
        if ex.valid and isinstance(model, LieAlgebraModel):
            lie.append(model)
    return rows + kappa_rows(lie)



def format_rows(rows) -> str:
    out = []
    for r in rows:
        status = "PASS" if r.passed else "FAIL"
        line = f"{status}  {r.model:<28} {r.identity:<58} {r.residual:.3e}  (tol {r.tol:.1e})"
        if r.note:
            line += f"  [{r.note}]"
        out.append(line)
    return "\n".join(out)
