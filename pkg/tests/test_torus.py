import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from chernflow import torus
from chernflow.grid import TorusGrid


@pytest.fixture(scope="module")
def bump32():
    grid = TorusGrid(1, 32)
    g0 = torus.conformal_metric(grid, 0.5)
    flow = torus.TorusFlow(grid, g0, torus.FlowConfig(reconstruct=True))
    return flow, flow.run()


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(3, 16)
    with pytest.raises(ValueError):
        TorusGrid(1, 4)
    grid = TorusGrid(2, 8)
    assert grid.shape == (8, 8, 8, 8)
    assert grid.h == 0.125


def test_conformal_metric_amplitude_guard():
    with pytest.raises(ValueError):
        torus.conformal_metric(TorusGrid(1, 16), 1.0)


def test_positivity_guard():
    g = torus.flat_metric(TorusGrid(1, 8)).copy()
    g[3, 5, 0, 0] = -0.1
    with pytest.raises(torus.PositivityError) as info:
        torus.check_positive(g)
    assert info.value.index == (3, 5)
    assert info.value.min_eigenvalue == pytest.approx(-0.1)


def test_reference_is_static_by_default():
    grid = TorusGrid(1, 16)
    g0 = torus.conformal_metric(grid, 0.3)
    ref = torus.build_reference(grid, g0)
    assert np.array_equal(ref.g_hat(5.0), g0)
    assert ref.equivalence_constant(5.0) == pytest.approx(1.0)
    # Omega is the flat density, so b = log of the mean of det g0
    assert torus.volume_constant(ref) == pytest.approx(math.log(grid.mean(g0[..., 0, 0].real)), abs=1e-15)


def test_nonstatic_reference():
    grid = TorusGrid(1, 16)
    g0 = torus.conformal_metric(grid, 0.3)
    ref = torus.build_reference(grid, g0, T0=2.0, phi_T0=np.zeros(grid.shape))
    # omega^_t = omega_0 + t ddbar log det g0, the reference path of the unnormalized flow
    expected = g0 + 0.05 * torus.ddbar_fd(grid, np.log(g0[..., 0, 0].real))
    assert_allclose(ref.g_hat(0.05), expected, atol=1e-14)
    assert ref.equivalence_constant(0.05) > 1.0
    # far enough along the path the reference itself stops being a metric
    with pytest.raises(torus.PositivityError):
        ref.g_hat(0.5)


def test_stable_dt_scaling():
    grid = TorusGrid(2, 16)
    assert torus.stable_dt(grid, 1.0, 0.5) == pytest.approx(0.5 * grid.h**2 / 2)


def test_flat_metric_is_stationary():
    trace = torus.run_flow(TorusGrid(1, 16), torus.flat_metric(TorusGrid(1, 16)))
    assert trace.converged
    assert trace.steps == 0
    assert trace.b_measured == 0.0


def test_bump_converges(bump32):
    flow, trace = bump32
    assert trace.converged
    assert trace.records[-1].osc_phidot < 1e-6
    assert abs(trace.b_measured - torus.volume_constant(flow.ref)) < 1e-6
    st = torus.stationary_residual(flow.ref, trace.phi, trace.b_measured)
    assert st.monge_ampere < 1e-5
    # the limit is Ricci flat
    assert st.chern_ricci < 1e-3


def test_spectral_residual_refines(bump32):
    # the FD fixed point differs from the spectral one at O(h^2)
    flow, trace = bump32
    coarse = torus.stationary_residual(flow.ref, trace.phi, trace.b_measured, spectral=True).monge_ampere
    grid = TorusGrid(1, 16)
    t16 = torus.TorusFlow(grid, torus.conformal_metric(grid, 0.5))
    tr16 = t16.run()
    cc = torus.stationary_residual(t16.ref, tr16.phi, tr16.b_measured, spectral=True).monge_ampere
    assert 3.2 <= cc / coarse <= 4.8


def test_limit_metric_is_flat_volume(bump32):
    # omega_inf = omega_0 + ddbar phi has constant density e^b
    flow, trace = bump32
    g = flow.ref.g0 + torus.ddbar_fd(flow.grid, trace.phi)
    assert_allclose(g[..., 0, 0].real, math.exp(trace.b_measured), atol=1e-5)


def test_monitors(bump32):
    _, trace = bump32
    bounds = torus.monitor_bounds(trace)
    assert bounds.ok
    assert bounds.min_eig > 0
    assert bounds.pinching == pytest.approx(3.0, rel=1e-3)  # max/min of 1 +- 1/2
    phidot = trace.column("sup_phidot")
    assert np.all(np.diff(trace.column("osc_phidot")) <= 1e-12)
    assert np.all(np.diff(phidot) <= 0)
    assert phidot[0] == pytest.approx(math.log(2.0), rel=1e-12)


def test_reconstruction_error(bump32):
    flow, trace = bump32
    assert torus.reconstruction_error(flow.ref, trace) < 1e-4


def test_decay_rate_n1():
    rate = torus.linearized_decay_rate(TorusGrid(1, 16))
    # discrete symbol of the compact stencil: 4 sin^2(pi h) / h^2 / 4
    h = 1 / 16
    assert rate == pytest.approx(math.sin(math.pi * h) ** 2 / h**2, rel=1e-3)


def test_abort_after_repeated_rejections():
    grid = TorusGrid(1, 16)
    flow = torus.TorusFlow(grid, torus.conformal_metric(grid, 0.5), torus.FlowConfig(sigma=2.0))
    with pytest.raises(torus.FlowAbort) as info:
        flow.run()
    trace = info.value.trace
    assert trace.rejections == torus.MAX_REJECTIONS + 1
    assert len(trace.rejection_log) == trace.rejections
    assert torus.monitor_bounds(trace).min_eig > 0


def test_t_end_stops_run():
    grid = TorusGrid(1, 16)
    trace = torus.run_flow(grid, torus.conformal_metric(grid, 0.5), t_end=0.05)
    assert not trace.converged
    assert trace.t == pytest.approx(0.05, abs=1e-15)


def test_checkpoint_round_trip(tmp_path):
    grid = TorusGrid(1, 8)
    phi = np.random.default_rng(0).standard_normal(grid.shape)
    path = tmp_path / "state.npz"
    torus.save_checkpoint(path, phi, grid, 1.25)
    phi2, grid2, t = torus.load_checkpoint(path)
    assert np.array_equal(phi, phi2)
    assert grid2 == grid
    assert t == 1.25
