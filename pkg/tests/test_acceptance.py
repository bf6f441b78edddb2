"""Acceptance criteria; each test prints one PASS/FAIL line (collected in the summary)."""

import math
import time

import numpy as np
import scipy.integrate

from chernflow import chern, homogeneous as hom, torus
from chernflow.fiber import (
    build_complex_frame,
    extract_structure_coefficients,
    nijenhuis_identities,
    nijenhuis_table,
    random_almost_abelian,
    reconstruct_brackets,
)
from chernflow.grid import GridBackend, TorusGrid
from chernflow.registry import EXAMPLES, example_model
from oracles import p0_eigenvalues as p0_eigenvalues_oracle, sparse_bracket

NONPOSITIVE = ("abelian", "heisenberg_kt_integrable", "heisenberg_kt_nonintegrable", "affine_solvable", "solvable_6")


def t_max(m):
    return hom.maximal_time(hom.invariant_chern_ricci(m))


# -- 1 -------------------------------------------------------------------------------


def test_criterion_01_nijenhuis_identities(acceptance):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    count = 0
    for dim in (4, 6):
        for _ in range(20):
            m = random_almost_abelian(dim, rng)
            X = rng.standard_normal((200, dim))
            Y = rng.standard_normal((200, dim))
            X /= np.linalg.norm(X, axis=1, keepdims=True)
            Y /= np.linalg.norm(Y, axis=1, keepdims=True)
            res = nijenhuis_identities(m, X, Y)
            assert len(res) == 5
            worst = max(worst, max(res.values()))
            count += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 5.0 and count == 40
    acceptance(1, ok, f"5 Nijenhuis identities on {count} structures x 200 pairs: max residual {worst:.2e} (tol 1e-12), {elapsed:.2f} s (< 5 s)")
    assert ok


# -- 2 -------------------------------------------------------------------------------


def test_criterion_02_integrability(acceptance):
    zero = {name: float(np.max(np.abs(nijenhuis_table(example_model(name))))) for name in ("abelian", "heisenberg_kt_integrable")}
    m = example_model("heisenberg_kt_nonintegrable")
    table = nijenhuis_table(m)
    N12 = table[:, 0, 1]
    # oracle: the bracket formula evaluated with a hand-written bracket
    br = sparse_bracket([[3, 1, 2, 1.0]], 4)
    J = m.J
    v1, v2 = np.eye(4)[0], np.eye(4)[1]
    oracle = br(J @ v1, J @ v2) - J @ br(J @ v1, v2) - J @ br(v1, J @ v2) - br(v1, v2)
    expected = -np.eye(4)[2]
    norm = float(np.linalg.norm(table))
    ok = (
        all(v <= 1e-14 for v in zero.values())
        and norm > 0.5
        and np.allclose(N12, expected, atol=1e-14, rtol=0)
        and np.allclose(oracle, expected, atol=0, rtol=0)
    )
    acceptance(2, ok, f"|N| abelian {zero['abelian']:.1e}, integrable {zero['heisenberg_kt_integrable']:.1e} (<= 1e-14); nonintegrable |N| = {norm:.3f} (> 0.5), N(v1,v2) = {N12.tolist()}")
    assert ok


# -- 3 -------------------------------------------------------------------------------


def test_criterion_03_round_trip(acceptance):
    worst = {}
    for ex in EXAMPLES:
        if ex.doc["kind"] != "lie_algebra":
            continue
        m = example_model(ex.name)
        fr = build_complex_frame(m.J)
        f = reconstruct_brackets(extract_structure_coefficients(m, fr), fr)
        worst[ex.name] = float(np.max(np.abs(f - m.structure_constants)))
    top = max(worst.values())
    ok = top < 1e-12 and len(worst) >= 8
    acceptance(3, ok, f"bracket reconstruction on {len(worst)} registry algebras: max error {top:.2e} (< 1e-12)")
    assert ok


# -- 4 -------------------------------------------------------------------------------


def test_criterion_04_closed_form_vs_integrator(acceptance, lie_models):
    dev_rk4 = dev_ivp = dev_P = 0.0
    for name, m in lie_models.items():
        icr = hom.invariant_chern_ricci(m)
        t_end = min(10.0, 0.9 * hom.maximal_time(icr))
        dev_rk4 = max(dev_rk4, hom.ode_crosscheck(icr, t_end, 1e-2))
        # oracle: an adaptive integrator on the raw ODE omega' = -2 p11 with p11 from ad traces
        _, p11 = p0_eigenvalues_oracle(m)
        ts = np.linspace(0.0, t_end, 21)
        sol = scipy.integrate.solve_ivp(
            lambda t, y: (-2.0 * p11).ravel(), (0.0, t_end), m.omega0.ravel(), method="DOP853", t_eval=ts, rtol=1e-13, atol=1e-14
        )
        for k, t in enumerate(ts):
            dev_ivp = max(dev_ivp, float(np.max(np.abs(sol.y[:, k].reshape(m.dim, m.dim) - hom.flow_at(icr, t)))))
            P = hom.operator_at(icr, t)
            dev_P = max(dev_P, float(np.max(np.abs(P.T @ hom.flow_at(icr, t) - icr.p11))))
    ok = dev_rk4 < 1e-10 and dev_ivp < 1e-10 and dev_P < 1e-10
    acceptance(4, ok, f"closed form vs RK4 {dev_rk4:.2e}, vs DOP853 {dev_ivp:.2e}; omega_t(P_t.,.) - p11 {dev_P:.2e} (all < 1e-10)")
    assert ok


# -- 5 -------------------------------------------------------------------------------


def test_criterion_05_maximal_time(acceptance, lie_models):
    infinite = {name: t_max(lie_models[name]) for name in NONPOSITIVE}
    for name in NONPOSITIVE:
        evals, _ = p0_eigenvalues_oracle(lie_models[name])
        assert evals[-1] <= 1e-12
    m = lie_models["expanding"]
    evals, _ = p0_eigenvalues_oracle(m)
    T_oracle = float(1.0 / (2.0 * evals[-1]))
    T = t_max(m)
    ok = all(math.isinf(v) for v in infinite.values()) and abs(T - T_oracle) <= 4 * np.finfo(float).eps and abs(T - 0.5) <= 4 * np.finfo(float).eps
    acceptance(5, ok, f"T = inf on {len(infinite)} models with P0 <= 0; expanding T = {T!r} vs 1/(2 p+) = {T_oracle!r}")
    assert ok


# -- 6 -------------------------------------------------------------------------------


def test_criterion_06_scalar_curvature_law(acceptance, lie_models):
    law = mono = 0.0
    conn = 0.0
    blowup = []
    kappa, _ = hom.measure_kappa(lie_models["expanding"])
    for name, m in lie_models.items():
        icr = hom.invariant_chern_ricci(m)
        T = hom.maximal_time(icr)
        ts = np.linspace(0.0, 0.9 * T if math.isfinite(T) else 10.0, 100)
        evals, _ = p0_eigenvalues_oracle(m)
        R = np.array([hom.scalar_curvature_at(icr, t) for t in ts])
        oracle = np.array([np.sum(evals / (1.0 - 2.0 * t * evals)) for t in ts])
        law = max(law, float(np.max(np.abs(R - oracle) / np.maximum(1.0, np.abs(oracle)))))
        mono = max(mono, float(np.max(-np.diff(R), initial=0.0)))
        for t in ts[::20]:
            # the flow is driven by 2 p11 = (2 / kappa) cric, so R is (2 / kappa) tr_omega cric
            _, _, R_conn = hom.connection_chern_ricci(m, hom.flow_at(icr, t))
            conn = max(conn, abs(2.0 / kappa * R_conn - hom.scalar_curvature_at(icr, t)) / max(1.0, abs(R_conn)))
        if math.isfinite(T):
            eps = 1e-4
            row = hom.blowup_diagnostics(icr, [eps])[0]
            quad, _ = scipy.integrate.quad(
                lambda s: float(np.trace(np.linalg.solve(np.eye(m.dim) - 2 * s * icr.P0, icr.P0))), 0.0, T - eps, limit=400, epsabs=0.0, epsrel=1e-10
            )
            closed = -0.5 * float(np.sum(np.log(1.0 - 2.0 * (T - eps) * evals)))
            blowup.append((name, row.r_times_eps, icr.multiplicity / 2, abs(row.integral - quad), abs(row.integral - closed)))
    rel = max(abs(r - half) / half for _, r, half, _, _ in blowup)
    integ = max(max(a, b) for *_, a, b in blowup)
    ok = law <= 1e-12 and mono <= 1e-12 and conn <= 1e-12 and len(blowup) >= 1 and rel < 0.01 and integ < 1e-6
    details = ", ".join(f"{n}: R*eps {r:.6f} vs m/2 = {h:g}" for n, r, h, _, _ in blowup)
    acceptance(6, ok, f"R law {law:.1e} (1e-12), connection R {conn:.1e}, max decrease {mono:.1e}; {details}; integral error {integ:.1e} (1e-6)")
    assert ok


# -- 7 -------------------------------------------------------------------------------


def test_criterion_07_kappa(acceptance, lie_models):
    ks = {}
    for name, m in lie_models.items():
        if np.max(np.abs(hom.invariant_chern_ricci(m).p11)) < 1e-12:
            continue
        k, resid = hom.measure_kappa(m)
        assert resid < 1e-10
        ks[name] = k
    spread = float(np.ptp(list(ks.values())))
    ok = len(ks) >= 3 and spread < 1e-8
    kappa = next(iter(ks.values()))
    acceptance(7, ok, f"cric = kappa p11 on {len(ks)} non-flat models, kappa = {kappa!r}, spread {spread:.1e} (< 1e-8)")
    assert ok


# -- 8 -------------------------------------------------------------------------------


def _bump(N, n=1, axes=(0, 1)):
    grid = TorusGrid(n, N)
    return grid, torus.conformal_metric(grid, 0.5, 1, axes)


def _smooth(grid):
    X = grid.coords()
    tp = 2 * np.pi
    u = 0.3 * np.sin(tp * X[0]) * np.cos(tp * X[-1])
    phi = np.sin(tp * X[0]) * np.cos(tp * X[-1]) + 0.5 * np.cos(tp * X[1])
    return u, phi


def test_criterion_08_diffric_refinement(acceptance):
    res = []
    for N in (32, 64):
        grid, g0 = _bump(N)
        u, _ = _smooth(grid)
        r = chern.diffric_check(np.exp(u)[..., None, None] * g0, g0, torus.torus_structure(grid), GridBackend(grid))
        res.append(r.sup_norm())
    ratio = res[0] / res[1]
    ok = 3.2 <= ratio <= 4.8
    acceptance(8, ok, f"diffric residual N=32 {res[0]:.3e} -> N=64 {res[1]:.3e}, ratio {ratio:.3f} (in [3.2, 4.8])")
    assert ok


# -- 9 -------------------------------------------------------------------------------


def test_criterion_09_laplacian(acceptance):
    res = []
    for N in (16, 32):
        grid, g0 = _bump(N, n=2, axes=(0, 1))
        _, phi = _smooth(grid)
        res.append(float(np.max(np.abs(chern.laplace_compare(g0, torus.torus_structure(grid), GridBackend(grid), phi)))))
    ratio = res[0] / res[1]
    flat = 0.0
    for n, N in ((1, 32), (2, 16)):
        grid = TorusGrid(n, N)
        _, phi = _smooth(grid)
        flat = max(flat, float(np.max(np.abs(chern.laplace_compare(torus.flat_metric(grid), torus.torus_structure(grid), GridBackend(grid), phi)))))
    ok = 3.2 <= ratio <= 4.8 and flat <= 1e-10
    acceptance(9, ok, f"Laplacian comparison n=2 conformal N=16 {res[0]:.3e} -> N=32 {res[1]:.3e}, ratio {ratio:.3f}; flat {flat:.1e}")
    assert ok


# -- 10 ------------------------------------------------------------------------------


def test_criterion_10_bump_convergence(acceptance, bump64):
    flow, trace, elapsed = bump64
    osc = float(trace.phidot.max() - trace.phidot.min())
    b = trace.b_measured
    b_exact = torus.volume_constant(flow.ref)
    # independent value of log(int omega0 / int Omega) by quadrature of the bump density
    grid = flow.grid
    X = grid.coords()
    density = 1.0 + 0.5 * np.sin(2 * np.pi * X[0]) * np.sin(2 * np.pi * X[1])
    b_oracle = math.log(grid.mean(density) / grid.mean(np.ones(grid.shape)))
    st = torus.stationary_residual(flow.ref, trace.phi, b)
    ok = trace.converged and osc < 1e-6 and abs(b - b_exact) < 1e-6 and abs(b_exact - b_oracle) < 1e-12 and st.monge_ampere < 1e-5 and elapsed < 300
    acceptance(10, ok, f"bump N=64: osc(phidot) {osc:.1e} after {trace.steps} steps in {elapsed:.1f} s; b = {b:.2e} vs {b_oracle:.1e}; Monge-Ampere residual {st.monge_ampere:.1e} (< 1e-5)")
    assert ok


# -- 11 ------------------------------------------------------------------------------


def test_criterion_11_decay_rate(acceptance):
    rate = torus.linearized_decay_rate(TorusGrid(1, 32), amplitude=1e-3)
    rel = abs(rate / np.pi**2 - 1)
    ok = rel <= 0.05
    acceptance(11, ok, f"mode 1e-3 sin(2 pi x) at N=32 decays at {rate:.4f} = {rate / np.pi**2:.4f} pi^2 (within 5%)")
    assert ok


# -- 12 ------------------------------------------------------------------------------


def test_criterion_12_monitors(acceptance, bump64):
    traces = {"bump N=64": bump64[1]}
    for name, N in (("torus_flat", 16), ("torus_bump", 32), ("torus_anisotropic", 8)):
        m = example_model(name).with_resolution(N)
        traces[f"{name} N={N}"] = torus.TorusFlow(m.grid, m.initial_metric()).run()
    grid, g0 = _bump(16)
    try:
        torus.TorusFlow(grid, g0, torus.FlowConfig(sigma=2.0)).run()
    except torus.FlowAbort as err:
        traces["bump N=16 sigma=2 (aborted)"] = err.trace
    assert len(traces) == 5
    worst_eig = math.inf
    ok = True
    for trace in traces.values():
        bounds = torus.monitor_bounds(trace)
        ok &= bounds.ok
        worst_eig = min(worst_eig, bounds.min_eig)
    pinch = max(torus.monitor_bounds(t).pinching for t in traces.values())
    acceptance(12, ok, f"{len(traces)} runs: monitors finite, max pinching {pinch:.3f}, smallest accepted eigenvalue {worst_eig:.3f} (> 0)")
    assert ok


# -- 13 ------------------------------------------------------------------------------


def test_criterion_13_normalized_flow(acceptance, lie_models):
    ident = ode = rep = 0.0
    used = []
    for name in ("affine_solvable", "solvable_6"):
        m = lie_models[name]
        icr = hom.invariant_chern_ricci(m)
        assert icr.p_plus <= 1e-12
        used.append(name)
        n0 = np.linalg.norm(m.omega0)
        for s in np.geomspace(1e-3, 1e3, 25):
            lhs = np.linalg.norm(hom.flow_at(icr, s) / s + 2 * icr.p11)
            ident = max(ident, abs(lhs - n0 / s) / (n0 / s))
        for t in np.linspace(0.0, 10.0, 41):
            w = hom.normalized_flow_at(icr, t)
            h = 1e-4
            if t > h:
                fd = (hom.normalized_flow_at(icr, t + h) - hom.normalized_flow_at(icr, t - h)) / (2 * h)
                assert np.max(np.abs(fd - (-2 * icr.p11 - w))) < 1e-6
            exact_rate = -2 * icr.p11 - w
            ode = max(ode, float(np.max(np.abs(hom.normalized_flow_rate(icr, t) - exact_rate))))
            rep = max(rep, float(np.max(np.abs(hom.normalized_from_unnormalized(icr, t) - w))))
        ode = max(ode, hom.ode_crosscheck(icr, 10.0, 1e-3, normalized=True))
    ok = ident <= 1e-12 and ode < 1e-10 and rep < 1e-10
    acceptance(13, ok, f"{', '.join(used)}: |w~(s)/s + 2p11| = |w0|/s to {ident:.1e}; ODE residual {ode:.1e}; t = log(s+1) {rep:.1e}")
    assert ok
