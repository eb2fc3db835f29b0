"""Weight-cell and classifier-network construction plus circuit-law checks.

The building blocks are three cell types: an RC-diode weight cell (10 uF
storage cap), the same cell with a 1 uF cap used at the output, and a diode
summing stage that joins many weight-cell outputs at one node.  A full
one-vs-all classifier chains 25 weight cells through the summing stage into
the output cell and a sense resistor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.optimize import minimize

from .engine import (
    IDEAL_DIODE,
    Capacitor,
    CurrentProbe,
    Diode,
    DiodeModel,
    Netlist,
    Resistor,
    Trace,
    TransientConfig,
    VoltageSource,
    Waveform,
    pulse_waveform,
    transient_solve,
    waveform_value,
)
from .errors import EmptySearchRange, WindowNotForwardConducting


@dataclass(frozen=True)
class CellParams:
    r1: float = 330.0
    r2: float = 10.0
    r3: float = 330.0
    c1: float = 10e-6
    diode: DiodeModel = IDEAL_DIODE

    def __post_init__(self):
        if min(self.r1, self.r2, self.r3, self.c1) <= 0:
            raise ValueError("cell parameters must be positive")

    @property
    def eq3_a(self) -> float:
        """Ohmic coefficient of the cell's V / storage-current relation."""
        return (self.r1 * self.r3 + self.r1 * self.r2 + self.r2 * self.r3) / self.r1

    @property
    def eq3_b(self) -> float:
        """Integral-term coefficient of the same relation, 1/s."""
        return (self.r3 + self.r1) / (self.r1 * self.c1)


INPUT_CELL = CellParams()                 # 10 uF storage
OUTPUT_CELL = CellParams(c1=1e-6)         # faster 1 uF cell at the output


@dataclass(frozen=True)
class NetworkTopology:
    n_inputs: int = 25
    input_cell: CellParams = INPUT_CELL
    summing_diode: DiodeModel = IDEAL_DIODE
    output_cell: CellParams = OUTPUT_CELL
    sense_resistor: float = 10.0
    supply: float = 5.0

    def __post_init__(self):
        if self.n_inputs < 1:
            raise ValueError("need at least one input")
        if self.sense_resistor <= 0:
            raise ValueError("sense resistor must be positive")

    def input_cells(self):
        return [self.input_cell] * self.n_inputs


# ---------------------------------------------------------------------------
# Cell fragments
# ---------------------------------------------------------------------------

def build_module1(params: CellParams, input_node: str, output_node: str,
                  prefix: str, initial_voltage: float = 0.0,
                  diode_as_wire: bool = False) -> list:
    """Weight cell: series R3 into the cell, R1 toward the output, and a
    diode-gated R2+C1 storage branch to ground.

    The diode's anode faces the input side so the cap charges only while the
    internal node sits above the stored voltage; otherwise the charge (the
    weight) is retained.  `diode_as_wire` drops the diode for linear controls.
    """
    m = f"{prefix}.m"
    c = f"{prefix}.c"
    frag = [
        Resistor(f"{prefix}_r3", input_node, m, params.r3),
        Resistor(f"{prefix}_r1", m, output_node, params.r1),
    ]
    if diode_as_wire:
        frag.append(Resistor(f"{prefix}_r2", m, c, params.r2))
    else:
        d = f"{prefix}.d"
        frag.append(Diode(f"{prefix}_d", m, d, params.diode))
        frag.append(Resistor(f"{prefix}_r2", d, c, params.r2))
    frag.append(Capacitor(f"{prefix}_c1", c, "0", params.c1, initial_voltage))
    return frag


def build_module2(params: CellParams | None = None, input_node: str = "sum",
                  output_node: str = "out", prefix: str = "oc",
                  initial_voltage: float = 0.0,
                  diode_as_wire: bool = False) -> list:
    """Output cell; same wiring as the weight cell with a 1 uF default cap."""
    return build_module1(params or OUTPUT_CELL, input_node, output_node,
                         prefix, initial_voltage, diode_as_wire)


def build_module3(input_nodes, output_node: str,
                  diode: DiodeModel = IDEAL_DIODE, prefix: str = "sumd") -> list:
    """Summing stage: one diode per input, anodes at the cell outputs, shared
    cathode at `output_node` so the stage passes the max-like combination."""
    if not input_nodes:
        raise ValueError("need at least one input node")
    return [Diode(f"{prefix}{k:02d}", n, output_node, diode)
            for k, n in enumerate(input_nodes)]


def compose_classifier(topology: NetworkTopology,
                       weights: dict | None = None,
                       diode_as_wire: bool = False) -> Netlist:
    """Full one-vs-all circuit: n weight cells -> diode summing -> output cell
    -> sense resistor to ground, with a current probe on the sense resistor.

    Input nodes are named in00..inNN; the summing node is `sum`, the output
    node `out`.  `weights` maps storage-cap element names to initial voltages.
    """
    weights = weights or {}
    elements = []
    cell_outputs = []
    for k, params in enumerate(topology.input_cells()):
        inp = f"in{k:02d}"
        outp = f"u{k:02d}.o"
        iv = weights.get(f"u{k:02d}_c1", 0.0)
        elements += build_module1(params, inp, outp, f"u{k:02d}",
                                  initial_voltage=iv,
                                  diode_as_wire=diode_as_wire)
        cell_outputs.append(outp)
    elements += build_module3(cell_outputs, "sum", topology.summing_diode)
    elements += build_module2(topology.output_cell, "sum", "out", "oc",
                              initial_voltage=weights.get("oc_c1", 0.0),
                              diode_as_wire=diode_as_wire)
    elements.append(Resistor("rsense", "out", "0", topology.sense_resistor))
    elements.append(CurrentProbe("sense", "rsense"))
    return Netlist(elements)


def input_cap_names(topology: NetworkTopology) -> list:
    return [f"u{k:02d}_c1" for k in range(topology.n_inputs)]


# ---------------------------------------------------------------------------
# Canonical verification circuits
# ---------------------------------------------------------------------------

def module1_step_netlist(params: CellParams, level: float = 5.0,
                         initial_voltage: float = 0.0) -> Netlist:
    """Single weight cell, output grounded, driven by a constant source, with
    the storage-branch current probed as `i1`."""
    elements = [VoltageSource("vin", "in", "0", level)]
    elements += build_module1(params, "in", "0", "cell", initial_voltage)
    elements.append(CurrentProbe("i1", "cell_r2"))
    elements.append(CurrentProbe("isrc", "vin"))
    return Netlist(elements)


def cascade_netlist(first: CellParams, second: CellParams,
                    waveform: Waveform, diode_as_wire: bool = False) -> Netlist:
    """Two weight cells in series (second fed from the first's output), with
    probes on the source current and both storage branches."""
    elements = [VoltageSource("vin", "in", "0", waveform)]
    elements += build_module1(first, "in", "mid", "a", diode_as_wire=diode_as_wire)
    elements += build_module1(second, "mid", "0", "b", diode_as_wire=diode_as_wire)
    elements.append(CurrentProbe("isrc", "vin"))
    elements.append(CurrentProbe("i1", "a_r2"))
    elements.append(CurrentProbe("i3", "b_r2"))
    return Netlist(elements)


# ---------------------------------------------------------------------------
# Circuit-law checks
# ---------------------------------------------------------------------------

def eq3_residual(trace: Trace, params: CellParams,
                 probe: str = "i1", source_node: str = "in") -> float:
    """Max relative violation of V = a*I1 + b*int(I1 dt) over the trace.

    Requires the storage branch to be forward-conducting for the whole trace;
    the integral is taken by trapezoid on the trace grid.
    """
    i1 = trace.probe(probe)
    v = trace.voltage(source_node)
    if np.min(i1) < -1e-9:
        raise WindowNotForwardConducting(
            f"storage current goes negative (min {np.min(i1):.3e} A)")
    integ = cumulative_trapezoid(i1, trace.times, initial=0.0)
    resid = v - params.eq3_a * i1 - params.eq3_b * integ
    vmax = float(np.max(np.abs(v)))
    if vmax == 0.0:
        return float(np.max(np.abs(resid)))
    return float(np.max(np.abs(resid)) / vmax)


# ---------------------------------------------------------------------------
# Single-cell analytic response (independent of the MNA engine)
# ---------------------------------------------------------------------------

def single_cell_response(params: CellParams, times: np.ndarray,
                         stimulus: np.ndarray, linear: bool = False):
    """Exact piecewise-exponential solution of one weight cell driven by a
    piecewise-constant source with its output grounded.

    Returns (source_current, storage_current, cap_voltage) sampled on `times`.
    With `linear=True` the diode is treated as a wire (storage current may go
    negative); otherwise the branch is cut off whenever it would discharge.
    """
    r1, r2, r3, c = params.r1, params.r2, params.r3, params.c1
    k_div = r1 / (r1 + r3)
    r_th = r2 + r1 * r3 / (r1 + r3)
    tau = r_th * c
    n = len(times)
    i_src = np.empty(n)
    i_sto = np.empty(n)
    v_cap = np.empty(n)
    vc = 0.0
    for k in range(n):
        v = stimulus[k]
        v_th = v * k_div
        conducting = linear or (v_th > vc)
        if conducting:
            i1 = (v_th - vc) / r_th
            vm = vc + r2 * i1
        else:
            i1 = 0.0
            vm = v_th
        i_src[k] = (v - vm) / r3
        i_sto[k] = i1
        v_cap[k] = vc
        if k + 1 < n:
            dt = times[k + 1] - times[k]
            if conducting:
                vc = v_th + (vc - v_th) * np.exp(-dt / tau)
            # cut off: charge is retained exactly
    return i_src, i_sto, v_cap


def _grid(lo, hi, n):
    return np.exp(np.linspace(np.log(lo), np.log(hi), n))


@dataclass(frozen=True)
class FitSearch:
    r_min: float = 1.0
    r_max: float = 10e3
    c_min: float = 0.1e-6
    c_max: float = 100e-6
    grid_points: int = 20
    polish: bool = True

    def __post_init__(self):
        if self.r_min >= self.r_max or self.c_min >= self.c_max \
                or self.grid_points < 1:
            raise EmptySearchRange("empty or inverted search range")


def _grid_source_currents(r1, r2, r3, c1, times, stimulus):
    """Always-conducting single-cell source currents for a whole candidate
    batch at once; parameters are broadcastable arrays."""
    k_div = r1 / (r1 + r3)
    r_th = r2 + r1 * r3 / (r1 + r3)
    tau = r_th * c1
    n = len(times)
    out = np.empty((n,) + np.broadcast(r1, r2, r3, c1).shape)
    vc = np.zeros_like(out[0])
    for k in range(n):
        v_th = stimulus[k] * k_div
        i1 = (v_th - vc) / r_th
        vm = vc + r2 * i1
        out[k] = (stimulus[k] - vm) / r3
        if k + 1 < n:
            dt = times[k + 1] - times[k]
            vc = v_th + (vc - v_th) * np.exp(-dt / tau)
    return out


def single_layer_fit_residual(times: np.ndarray, stimulus: np.ndarray,
                              cascade_current: np.ndarray,
                              search: FitSearch = FitSearch(),
                              return_params: bool = False):
    """Best normalized-RMS fit of a single weight cell's source current to a
    recorded cascade source current.

    The fit model is the cell's single-layer circuit equation (storage branch
    always conducting, i.e. the diode replaced by a wire), which is the form a
    one-layer equivalent would have to take.  Grid search over (r1, r3, c1)
    with r2 pinned at its default, refined by Nelder-Mead over all four
    parameters.  The residual is the RMS difference normalized by the cascade
    signal's RMS.
    """
    target = np.asarray(cascade_current, float)
    norm = float(np.sqrt(np.mean(target ** 2)))
    if norm == 0.0:
        raise ValueError("cascade signal is identically zero")

    def rms_for(r1, r2, r3, c1):
        if min(r1, r2, r3, c1) <= 0:
            return np.inf
        p = CellParams(r1=r1, r2=r2, r3=r3, c1=c1)
        i_src, _, _ = single_cell_response(p, times, stimulus, linear=True)
        return float(np.sqrt(np.mean((i_src - target) ** 2))) / norm

    n = search.grid_points
    r_grid = _grid(search.r_min, search.r_max, n)
    c_grid = _grid(search.c_min, search.c_max, n)
    r1g, r3g, c1g = (a.ravel() for a in np.meshgrid(r_grid, r_grid, c_grid,
                                                    indexing="ij"))
    cand = _grid_source_currents(r1g, 10.0, r3g, c1g, times,
                                 np.asarray(stimulus, float))
    rmses = np.sqrt(np.mean((cand - target[:, None]) ** 2, axis=0)) / norm
    k_best = int(np.argmin(rmses))
    best = (float(rmses[k_best]), (r1g[k_best], 10.0, r3g[k_best], c1g[k_best]))
    if search.polish:
        x0 = np.log(np.array(best[1]))
        res = minimize(lambda x: rms_for(*np.exp(x)), x0,
                       method="Nelder-Mead",
                       options={"maxiter": 400, "xatol": 1e-4, "fatol": 1e-8})
        if res.fun < best[0]:
            best = (float(res.fun), tuple(np.exp(res.x)))
    if return_params:
        r1, r2, r3, c1 = best[1]
        return best[0], CellParams(r1=r1, r2=r2, r3=r3, c1=c1)
    return best[0]


def run_cascade(first: CellParams, second: CellParams, waveform: Waveform,
                config: TransientConfig, diode_as_wire: bool = False):
    """Simulate the two-cell cascade; returns (trace, stimulus samples)."""
    net = cascade_netlist(first, second, waveform, diode_as_wire=diode_as_wire)
    trace = transient_solve(net, config)
    stim = np.array([waveform_value(waveform, t) for t in trace.times])
    return trace, stim


# Canonical stimulus for the non-reducibility study: a square pulse train.  A
# monotone step never reverse-biases the ideal diodes, so under a plain step
# the diode cascade is indistinguishable from its wire-diode control; the off
# phases are what latch charge and expose the two-layer memory.
CASCADE_STIMULUS = pulse_waveform(5.0, 10e-3, 0.5)
CASCADE_WINDOW = 50e-3
CASCADE_DT = 50e-6


def nonreducibility_residuals(first: CellParams = INPUT_CELL,
                              second: CellParams = INPUT_CELL,
                              search: FitSearch = FitSearch()):
    """Fit floors for the diode cascade and its wire-diode linear control under
    the canonical pulsed stimulus.  Returns (rms_cascade, rms_linear_control).
    """
    config = TransientConfig(dt=CASCADE_DT, t_end=CASCADE_WINDOW)
    out = []
    for wire in (False, True):
        trace, stim = run_cascade(first, second, CASCADE_STIMULUS, config,
                                  diode_as_wire=wire)
        out.append(single_layer_fit_residual(trace.times, stim,
                                             trace.probe("isrc"), search))
    return tuple(out)
