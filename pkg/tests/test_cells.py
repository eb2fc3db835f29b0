"""Weight-cell behavior: circuit-law residuals, analytic oracle, fit study."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capnn.cells import (
    CASCADE_DT,
    CASCADE_STIMULUS,
    CASCADE_WINDOW,
    CellParams,
    FitSearch,
    NetworkTopology,
    cascade_netlist,
    compose_classifier,
    eq3_residual,
    input_cap_names,
    module1_step_netlist,
    run_cascade,
    single_cell_response,
    single_layer_fit_residual,
)
from capnn.engine import (
    Capacitor,
    CurrentProbe,
    Diode,
    Resistor,
    TransientConfig,
    transient_solve,
)
from capnn.errors import EmptySearchRange, WindowNotForwardConducting


def cell_tau(p: CellParams) -> float:
    """Charging time constant: storage branch behind the input divider."""
    return (p.r2 + p.r1 * p.r3 / (p.r1 + p.r3)) * p.c1


def test_default_cell_circuit_coefficients():
    p = CellParams()
    assert p.eq3_a == pytest.approx(350.0)
    assert p.eq3_b == pytest.approx(2.0e5)


def test_circuit_relation_holds_on_engine_trace():
    p = CellParams()
    cfg = TransientConfig(dt=2e-6, t_end=5e-3, integrator="trapezoidal")
    trace = transient_solve(module1_step_netlist(p, 5.0), cfg)
    assert eq3_residual(trace, p) < 1e-3


@settings(max_examples=30, deadline=None)
@given(r1=st.floats(50, 2e3), r2=st.floats(1, 100), r3=st.floats(50, 2e3),
       c1=st.floats(5e-7, 5e-5))
def test_circuit_relation_random_cells(r1, r2, r3, c1):
    p = CellParams(r1=r1, r2=r2, r3=r3, c1=c1)
    tau = cell_tau(p)
    cfg = TransientConfig(dt=tau / 200, t_end=tau, integrator="trapezoidal")
    trace = transient_solve(module1_step_netlist(p, 5.0), cfg)
    assert eq3_residual(trace, p) < 1e-2


def test_engine_matches_analytic_single_cell():
    p = CellParams()
    cfg = TransientConfig(dt=5e-6, t_end=10e-3, integrator="trapezoidal")
    trace = transient_solve(module1_step_netlist(p, 5.0), cfg)
    stim = np.full_like(trace.times, 5.0)
    i_src, i_sto, _ = single_cell_response(p, trace.times, stim)
    assert np.max(np.abs(trace.probe("isrc") - i_src)) < 1e-6 * np.max(i_src)
    assert np.max(np.abs(trace.probe("i1") - i_sto)) < 1e-5 * np.max(i_sto)


def test_analytic_cell_cuts_off_when_stimulus_drops():
    p = CellParams()
    times = np.arange(0, 40e-3, 50e-6)
    stim = np.where((times % 20e-3) < 10e-3, 5.0, 0.0)
    _, i_sto, v_cap = single_cell_response(p, times, stim)
    assert np.min(i_sto) >= 0.0          # diode never discharges the cap
    assert np.all(np.diff(v_cap) >= -1e-15)
    # exact retention across the whole off interval
    k_off = np.searchsorted(times, 10e-3)
    k_on = np.searchsorted(times, 20e-3)
    assert v_cap[k_on - 1] == pytest.approx(v_cap[k_off + 1], abs=1e-15)


def test_forward_conduction_guard_raises():
    p = CellParams()
    cfg = TransientConfig(dt=CASCADE_DT, t_end=CASCADE_WINDOW)
    # linear control: the wire-diode storage branch swings negative off-pulse
    net = cascade_netlist(p, p, CASCADE_STIMULUS, diode_as_wire=True)
    trace = transient_solve(net, cfg)
    with pytest.raises(WindowNotForwardConducting):
        eq3_residual(trace, p)


# ---------------------------------------------------------------------------
# Fit study
# ---------------------------------------------------------------------------

def test_fit_recovers_single_cell_exactly():
    p = CellParams(r1=470.0, r2=22.0, r3=220.0, c1=4.7e-6)
    times = np.arange(0, CASCADE_WINDOW, CASCADE_DT)
    stim = np.where((times % 10e-3) < 5e-3, 5.0, 0.0)
    i_src, _, _ = single_cell_response(p, times, stim, linear=True)
    resid, fit = single_layer_fit_residual(times, stim, i_src,
                                           FitSearch(grid_points=8),
                                           return_params=True)
    assert resid < 1e-3
    assert fit.c1 == pytest.approx(p.c1, rel=0.05)


def test_cascade_beats_linear_control_even_on_coarse_grid():
    search = FitSearch(grid_points=12)
    p = CellParams()
    cfg = TransientConfig(dt=CASCADE_DT, t_end=CASCADE_WINDOW)
    residuals = {}
    for wire in (False, True):
        trace, stim = run_cascade(p, p, CASCADE_STIMULUS, cfg,
                                  diode_as_wire=wire)
        residuals[wire] = single_layer_fit_residual(trace.times, stim,
                                                    trace.probe("isrc"), search)
    assert residuals[False] > 3 * residuals[True]


def test_empty_search_range_rejected():
    with pytest.raises(EmptySearchRange):
        FitSearch(r_min=100.0, r_max=10.0)


# ---------------------------------------------------------------------------
# Network composition
# ---------------------------------------------------------------------------

def test_classifier_composition_element_count():
    topo = NetworkTopology()
    net = compose_classifier(topo)
    resistors = [e for e in net.elements if isinstance(e, Resistor)]
    diodes = [e for e in net.elements if isinstance(e, Diode)]
    caps = [e for e in net.elements if isinstance(e, Capacitor)]
    probes = [e for e in net.elements if isinstance(e, CurrentProbe)]
    # 3 resistors per cell (25 inputs + 1 output) + sense resistor
    assert len(resistors) == 3 * 26 + 1
    # 1 diode per cell + 25 summing diodes
    assert len(diodes) == 26 + 25
    assert len(caps) == 26
    assert len(probes) == 1
    net.validate()


def test_classifier_weight_initialization():
    topo = NetworkTopology(n_inputs=3)
    names = input_cap_names(topo)
    assert names == ["u00_c1", "u01_c1", "u02_c1"]
    net = compose_classifier(topo, weights={"u01_c1": 2.5})
    caps = {e.name: e for e in net.elements if isinstance(e, Capacitor)}
    assert caps["u01_c1"].initial_voltage == 2.5
    assert caps["u00_c1"].initial_voltage == 0.0
