"""Transient circuit engine: netlists, modified nodal analysis, implicit integration.

Supports resistors, capacitors (with initial voltage), diodes (ideal switch or
Shockley), independent voltage sources and branch current probes.  Systems here
are small (< 100 nodes) so everything is dense numpy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import (
    DisconnectedNode,
    NetlistError,
    NewtonDivergence,
    NoGround,
    NonFiniteState,
    ShapeMismatch,
    SingularTopology,
)

Waveform = Union[float, Callable[[float], float]]


def waveform_value(w: Waveform, t: float) -> float:
    if callable(w):
        return float(w(t))
    return float(w)


def step_waveform(level: float, t_on: float = 0.0) -> Callable[[float], float]:
    return lambda t: level if t >= t_on else 0.0


def pulse_waveform(level: float, period: float, duty: float = 0.5) -> Callable[[float], float]:
    """Square pulse train: `level` for the first `duty` fraction of each period."""
    def w(t: float) -> float:
        return level if (t % period) < duty * period else 0.0
    return w


# ---------------------------------------------------------------------------
# Elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiodeModel:
    kind: str = "ideal"  # "ideal" | "shockley"
    saturation_current: float = 1e-9
    emission_coefficient: float = 1.0
    thermal_voltage: float = 0.02585
    on_conductance: float = 1e6
    off_conductance: float = 1e-12  # reverse shunt, keeps the system full-rank

    def __post_init__(self):
        if self.kind not in ("ideal", "shockley"):
            raise ValueError(f"unknown diode kind {self.kind!r}")
        if self.kind == "shockley":
            if self.saturation_current <= 0 or self.emission_coefficient <= 0 \
                    or self.thermal_voltage <= 0:
                raise ValueError("Shockley parameters must be positive")
        if self.on_conductance <= 0 or self.off_conductance <= 0:
            raise ValueError("switch conductances must be positive")


IDEAL_DIODE = DiodeModel()
SHOCKLEY_1N4148 = DiodeModel(kind="shockley", saturation_current=4.35e-9,
                             emission_coefficient=1.906)


@dataclass(frozen=True)
class Resistor:
    name: str
    n1: str
    n2: str
    ohms: float


@dataclass(frozen=True)
class Capacitor:
    name: str
    n1: str
    n2: str
    farads: float
    initial_voltage: float = 0.0


@dataclass(frozen=True)
class Diode:
    name: str
    anode: str
    cathode: str
    model: DiodeModel = IDEAL_DIODE


@dataclass(frozen=True)
class VoltageSource:
    name: str
    npos: str
    nneg: str
    waveform: Waveform = 0.0


@dataclass(frozen=True)
class CurrentProbe:
    label: str
    element: str  # name of the element whose branch current is recorded


Element = Union[Resistor, Capacitor, Diode, VoltageSource, CurrentProbe]


# ---------------------------------------------------------------------------
# Netlist
# ---------------------------------------------------------------------------

def _endpoints(e: Element):
    if isinstance(e, Resistor) or isinstance(e, Capacitor):
        return (e.n1, e.n2)
    if isinstance(e, Diode):
        return (e.anode, e.cathode)
    if isinstance(e, VoltageSource):
        return (e.npos, e.nneg)
    return ()


@dataclass(frozen=True)
class Netlist:
    elements: tuple
    ground: str = "0"

    def __init__(self, elements, ground: str = "0"):
        object.__setattr__(self, "elements", tuple(elements))
        object.__setattr__(self, "ground", ground)

    def nodes(self) -> list[str]:
        seen = {self.ground}
        out = [self.ground]
        for e in self.elements:
            for n in _endpoints(e):
                if n not in seen:
                    seen.add(n)
                    out.append(n)
        return out

    def conducting_elements(self):
        return [e for e in self.elements if not isinstance(e, CurrentProbe)]

    def probes(self):
        return [e for e in self.elements if isinstance(e, CurrentProbe)]

    def validate(self) -> None:
        names = set()
        node_refs = set()
        for e in self.conducting_elements():
            if e.name in names:
                raise NetlistError(f"duplicate element label {e.name!r}")
            names.add(e.name)
            node_refs.update(_endpoints(e))
            if isinstance(e, Resistor) and e.ohms <= 0:
                raise NetlistError(f"{e.name}: resistance must be > 0")
            if isinstance(e, Capacitor) and e.farads <= 0:
                raise NetlistError(f"{e.name}: capacitance must be > 0")
        labels = set()
        for p in self.probes():
            if p.label in labels:
                raise NetlistError(f"duplicate probe label {p.label!r}")
            labels.add(p.label)
            if p.element not in names:
                raise NetlistError(
                    f"probe {p.label!r} references unknown element {p.element!r}")
        if self.ground not in node_refs:
            raise NoGround(f"ground node {self.ground!r} is not connected")
        self._check_connected(node_refs)
        self._check_source_loops()

    def _check_connected(self, node_refs) -> None:
        adj: dict[str, set[str]] = {n: set() for n in node_refs}
        for e in self.conducting_elements():
            pts = _endpoints(e)
            if len(pts) == 2:
                adj[pts[0]].add(pts[1])
                adj[pts[1]].add(pts[0])
        reached = {self.ground}
        stack = [self.ground]
        while stack:
            for nb in adj[stack.pop()]:
                if nb not in reached:
                    reached.add(nb)
                    stack.append(nb)
        missing = sorted(node_refs - reached)
        if missing:
            raise DisconnectedNode(f"nodes not connected to ground: {missing}")

    def _check_source_loops(self) -> None:
        # cycle among voltage-source (and zero-impedance) edges only
        parent: dict[str, str] = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in self.conducting_elements():
            if isinstance(e, VoltageSource):
                a, b = find(e.npos), find(e.nneg)
                if a == b:
                    raise SingularTopology(
                        f"voltage-source loop involving {e.name!r}")
                parent[a] = b


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

@dataclass
class SystemDescriptor:
    """Opaque product of :func:`assemble`; node ordering and element index maps."""
    netlist: Netlist
    nodes: tuple            # non-ground nodes in deterministic order
    node_index: dict        # node name -> row (ground -> -1)
    vsources: tuple         # VoltageSource elements in order
    vsrc_index: dict        # source name -> branch row
    n_unknowns: int
    resistors: tuple
    capacitors: tuple
    ideal_diodes: tuple
    shockley_diodes: tuple

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def assemble(netlist: Netlist) -> SystemDescriptor:
    netlist.validate()
    ground = netlist.ground
    nodes = tuple(sorted(n for n in netlist.nodes() if n != ground))
    node_index = {n: i for i, n in enumerate(nodes)}
    node_index[ground] = -1
    resistors, capacitors, ideal, shockley, vsources = [], [], [], [], []
    for e in netlist.conducting_elements():
        if isinstance(e, Resistor):
            resistors.append(e)
        elif isinstance(e, Capacitor):
            capacitors.append(e)
        elif isinstance(e, Diode):
            (ideal if e.model.kind == "ideal" else shockley).append(e)
        elif isinstance(e, VoltageSource):
            vsources.append(e)
    n = len(nodes)
    vsrc_index = {e.name: n + k for k, e in enumerate(vsources)}
    return SystemDescriptor(
        netlist=netlist, nodes=nodes, node_index=node_index,
        vsources=tuple(vsources), vsrc_index=vsrc_index,
        n_unknowns=n + len(vsources),
        resistors=tuple(resistors), capacitors=tuple(capacitors),
        ideal_diodes=tuple(ideal), shockley_diodes=tuple(shockley))


# ---------------------------------------------------------------------------
# Transient configuration and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TransientConfig:
    dt: float = 1e-6
    t_end: float = 1e-2
    integrator: str = "trapezoidal"  # "backward_euler" | "trapezoidal"
    newton_tol: float = 1e-9         # amperes
    newton_max_iter: int = 50
    rng_seed: int = 0

    def __post_init__(self):
        if not (0 < self.dt <= self.t_end):
            raise ValueError("require 0 < dt <= t_end")
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be > 0")
        if self.newton_max_iter < 1:
            raise ValueError("newton_max_iter must be >= 1")
        if self.integrator not in ("backward_euler", "trapezoidal"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


@dataclass
class Trace:
    times: np.ndarray
    nodes: tuple
    voltages: np.ndarray        # (nt, n_nodes)
    probe_labels: tuple
    probe_currents: np.ndarray  # (nt, n_probes)
    element_currents: dict      # element name -> (nt,) array
    ground: str
    dt: float
    integrator: str

    def voltage(self, node: str) -> np.ndarray:
        if node == self.ground:
            return np.zeros(len(self.times))
        return self.voltages[:, self.nodes.index(node)]

    def probe(self, label: str) -> np.ndarray:
        return self.probe_currents[:, self.probe_labels.index(label)]

    def to_csv(self) -> str:
        header = ",".join(["t", *self.nodes, *self.probe_labels])
        lines = [header]
        for k in range(len(self.times)):
            vals = [self.times[k], *self.voltages[k], *self.probe_currents[k]]
            lines.append(",".join(f"{v:.17g}" for v in vals))
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

_MAX_STATE_TOGGLES = 100
_EXP_CLAMP = 40.0


def _shockley_iv(model: DiodeModel, v: float):
    """Diode current and conductance, linearly extended above the exp clamp."""
    nvt = model.emission_coefficient * model.thermal_voltage
    x = v / nvt
    isat = model.saturation_current
    if x > _EXP_CLAMP:
        e = math.exp(_EXP_CLAMP)
        i = isat * (e * (1.0 + x - _EXP_CLAMP) - 1.0)
        g = isat * e / nvt
    else:
        e = math.exp(x)
        i = isat * (e - 1.0)
        g = isat * e / nvt
    return i, g


class TransientSession:
    """Stateful fixed-step transient solver over an assembled netlist.

    Capacitor voltages persist across :meth:`run` calls, which is what lets a
    caller present a sequence of stimuli against accumulated charge.  Source
    waveforms can be swapped between runs with :meth:`set_source`.
    """

    def __init__(self, netlist: Netlist, config: TransientConfig):
        self.sd = assemble(netlist)
        self.config = config
        self.t = 0.0
        sd = self.sd
        self._sources = {e.name: e.waveform for e in sd.vsources}
        self.cap_v = np.array([c.initial_voltage for c in sd.capacitors], float)
        self.cap_i = np.zeros(len(sd.capacitors))
        self.ideal_on = np.zeros(len(sd.ideal_diodes), bool)
        self._cap_idx = np.array(
            [(sd.node_index[c.n1], sd.node_index[c.n2]) for c in sd.capacitors],
            int).reshape(-1, 2)
        self._ideal_idx = np.array(
            [(sd.node_index[d.anode], sd.node_index[d.cathode])
             for d in sd.ideal_diodes], int).reshape(-1, 2)
        self._shock_idx = np.array(
            [(sd.node_index[d.anode], sd.node_index[d.cathode])
             for d in sd.shockley_diodes], int).reshape(-1, 2)
        self._base = self._build_base(config.dt)
        self._lu_cache: dict = {}
        self._x = np.zeros(sd.n_unknowns)
        self._dc_operating_point()

    # -- matrix construction ------------------------------------------------

    def _stamp_g(self, A, i, j, g):
        if i >= 0:
            A[i, i] += g
            if j >= 0:
                A[i, j] -= g
        if j >= 0:
            A[j, j] += g
            if i >= 0:
                A[j, i] -= g

    def _build_base(self, dt):
        """Linear matrix: resistors + source incidence + capacitor companions."""
        sd = self.sd
        A = np.zeros((sd.n_unknowns, sd.n_unknowns))
        for r in sd.resistors:
            self._stamp_g(A, sd.node_index[r.n1], sd.node_index[r.n2], 1.0 / r.ohms)
        mult = 1.0 if self.config.integrator == "backward_euler" else 2.0
        self._cap_geq = np.array([mult * c.farads / dt for c in sd.capacitors])
        for (i, j), g in zip(self._cap_idx, self._cap_geq):
            self._stamp_g(A, i, j, g)
        for e in sd.vsources:
            p, m = sd.node_index[e.npos], sd.node_index[e.nneg]
            br = sd.vsrc_index[e.name]
            if p >= 0:
                A[p, br] += 1.0
                A[br, p] += 1.0
            if m >= 0:
                A[m, br] -= 1.0
                A[br, m] -= 1.0
        return A

    def _matrix_for_state(self, state_key):
        A = self._base.copy()
        for k, d in enumerate(self.sd.ideal_diodes):
            g = d.model.on_conductance if state_key[k] else d.model.off_conductance
            i, j = self._ideal_idx[k]
            self._stamp_g(A, i, j, g)
        return A

    def _lu_for_state(self, state_key):
        lu = self._lu_cache.get(state_key)
        if lu is None:
            A = self._matrix_for_state(state_key)
            try:
                lu = lu_factor(A)
            except Exception as exc:
                raise SingularTopology(str(exc)) from exc
            with np.errstate(invalid="ignore"):
                if not np.all(np.isfinite(lu[0])):
                    raise SingularTopology("singular system matrix")
            self._lu_cache[state_key] = lu
        return lu

    # -- right-hand side ------------------------------------------------------

    def _rhs(self, t):
        sd = self.sd
        b = np.zeros(sd.n_unknowns)
        if self.config.integrator == "backward_euler":
            ieq = self._cap_geq * self.cap_v
        else:
            ieq = self._cap_geq * self.cap_v + self.cap_i
        for (i, j), cur in zip(self._cap_idx, ieq):
            if i >= 0:
                b[i] += cur
            if j >= 0:
                b[j] -= cur
        for e in sd.vsources:
            b[sd.vsrc_index[e.name]] = waveform_value(self._sources[e.name], t)
        return b

    # -- nonlinear solve ------------------------------------------------------

    def _solve_given_states(self, b, t):
        """Solve with current ideal-diode states; Newton over Shockley diodes."""
        sd = self.sd
        state_key = tuple(bool(s) for s in self.ideal_on)
        if not sd.shockley_diodes:
            x = lu_solve(self._lu_for_state(state_key), b)
            return x, 0.0
        A_lin = self._matrix_for_state(state_key)
        x = self._x.copy()
        tol = self.config.newton_tol
        last_res = math.inf
        for _ in range(self.config.newton_max_iter):
            A = A_lin.copy()
            bn = b.copy()
            for k, d in enumerate(sd.shockley_diodes):
                i, j = self._shock_idx[k]
                va = x[i] if i >= 0 else 0.0
                vc = x[j] if j >= 0 else 0.0
                cur, g = _shockley_iv(d.model, va - vc)
                g += d.model.off_conductance
                cur += d.model.off_conductance * (va - vc)
                self._stamp_g(A, i, j, g)
                ieq = g * (va - vc) - cur
                if i >= 0:
                    bn[i] += ieq
                if j >= 0:
                    bn[j] -= ieq
            try:
                x_new = np.linalg.solve(A, bn)
            except np.linalg.LinAlgError as exc:
                raise SingularTopology(str(exc)) from exc
            # residual of the exact (non-linearized) KCL at x_new, amps
            r = A_lin @ x_new - b
            for k, d in enumerate(sd.shockley_diodes):
                i, j = self._shock_idx[k]
                va = x_new[i] if i >= 0 else 0.0
                vc = x_new[j] if j >= 0 else 0.0
                cur, _ = _shockley_iv(d.model, va - vc)
                cur += d.model.off_conductance * (va - vc)
                if i >= 0:
                    r[i] += cur
                if j >= 0:
                    r[j] -= cur
            last_res = float(np.max(np.abs(r[:sd.n_nodes]))) if sd.n_nodes else 0.0
            x = x_new
            if last_res < tol:
                return x, last_res
        raise NewtonDivergence(t, last_res)

    def _ideal_violation(self, x):
        """Index and magnitude of the worst inconsistent ideal-diode state."""
        worst_k, worst_v = -1, 0.0
        for k in range(len(self.sd.ideal_diodes)):
            i, j = self._ideal_idx[k]
            va = x[i] if i >= 0 else 0.0
            vc = x[j] if j >= 0 else 0.0
            dv = va - vc
            if self.ideal_on[k]:
                viol = -dv - 1e-9
            else:
                viol = dv - 1e-6
            if viol > worst_v:
                worst_v, worst_k = viol, k
        return worst_k, worst_v

    def _solve_step(self, b, t):
        for _ in range(_MAX_STATE_TOGGLES):
            x, res = self._solve_given_states(b, t)
            k, _ = self._ideal_violation(x)
            if k < 0:
                return x
            self.ideal_on[k] = not self.ideal_on[k]
        raise NewtonDivergence(t, math.nan,
                               f"ideal-diode states did not settle at t={t:.6g}s")

    # -- operating point ------------------------------------------------------

    def _dc_operating_point(self):
        """Consistent t=0 solution with capacitors pinned at their stored voltage."""
        sd = self.sd
        n = sd.n_unknowns
        nc = len(sd.capacitors)
        for _ in range(_MAX_STATE_TOGGLES):
            A = np.zeros((n + nc, n + nc))
            A[:n, :n] = self._matrix_for_state(tuple(bool(s) for s in self.ideal_on))
            # undo the capacitor companion stamps; caps act as voltage sources here
            for (i, j), g in zip(self._cap_idx, self._cap_geq):
                self._stamp_g(A, i, j, -g)
            b = np.zeros(n + nc)
            for e in sd.vsources:
                b[sd.vsrc_index[e.name]] = waveform_value(self._sources[e.name], 0.0)
            for k, (i, j) in enumerate(self._cap_idx):
                br = n + k
                if i >= 0:
                    A[i, br] += 1.0
                    A[br, i] += 1.0
                if j >= 0:
                    A[j, br] -= 1.0
                    A[br, j] -= 1.0
                b[br] = self.cap_v[k]
            if sd.shockley_diodes:
                x = self._newton_dense(A, b, n)
            else:
                try:
                    x = np.linalg.solve(A, b)
                except np.linalg.LinAlgError as exc:
                    raise SingularTopology(str(exc)) from exc
            k, _ = self._ideal_violation(x)
            if k < 0:
                break
            self.ideal_on[k] = not self.ideal_on[k]
        else:
            raise NewtonDivergence(0.0, math.nan,
                                   "ideal-diode states did not settle at t=0")
        if not np.all(np.isfinite(x)):
            raise NonFiniteState("non-finite operating point")
        self._x = x[:n]
        # branch current = current entering the cap from n1 (charging positive)
        self.cap_i = x[n:n + nc].copy()
        # lock cap_v to the actual node difference (exact here by construction)
        for k, (i, j) in enumerate(self._cap_idx):
            va = x[i] if i >= 0 else 0.0
            vc = x[j] if j >= 0 else 0.0
            self.cap_v[k] = va - vc

    def _newton_dense(self, A_lin, b, n):
        sd = self.sd
        x = np.zeros(len(b))
        for _ in range(self.config.newton_max_iter):
            A = A_lin.copy()
            bn = b.copy()
            for k, d in enumerate(sd.shockley_diodes):
                i, j = self._shock_idx[k]
                va = x[i] if i >= 0 else 0.0
                vc = x[j] if j >= 0 else 0.0
                cur, g = _shockley_iv(d.model, va - vc)
                g += d.model.off_conductance
                cur += d.model.off_conductance * (va - vc)
                self._stamp_g(A, i, j, g)
                ieq = g * (va - vc) - cur
                if i >= 0:
                    bn[i] += ieq
                if j >= 0:
                    bn[j] -= ieq
            x_new = np.linalg.solve(A, bn)
            if np.max(np.abs(x_new - x)) < 1e-12:
                return x_new
            x = x_new
        return x

    # -- stepping -------------------------------------------------------------

    def set_source(self, name: str, waveform: Waveform) -> None:
        if name not in self._sources:
            raise KeyError(f"unknown voltage source {name!r}")
        self._sources[name] = waveform

    def set_capacitor_state(self, voltages: dict, reset_time: bool = True) -> None:
        """Install stored capacitor voltages (e.g. trained weights) and re-init."""
        for k, c in enumerate(self.sd.capacitors):
            if c.name in voltages:
                self.cap_v[k] = float(voltages[c.name])
        self.cap_i[:] = 0.0
        if reset_time:
            self.t = 0.0
        self._dc_operating_point()

    def capacitor_state(self) -> dict:
        return {c.name: float(v) for c, v in zip(self.sd.capacitors, self.cap_v)}

    def _advance(self, dt):
        t_next = self.t + dt
        if dt != self.config.dt:
            saved_base, saved_geq = self._base, self._cap_geq
            saved_cache = self._lu_cache
            self._base = self._build_base(dt)
            self._lu_cache = {}
            try:
                self._advance_fixed(t_next)
            finally:
                self._base, self._cap_geq = saved_base, saved_geq
                self._lu_cache = saved_cache
        else:
            self._advance_fixed(t_next)
        self.t = t_next

    def _advance_fixed(self, t_next):
        b = self._rhs(t_next)
        x = self._solve_step(b, t_next)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite solution at t={t_next:.6g}s")
        i1 = self._cap_idx[:, 0]
        i2 = self._cap_idx[:, 1]
        va = np.where(i1 >= 0, x[np.maximum(i1, 0)], 0.0)
        vb = np.where(i2 >= 0, x[np.maximum(i2, 0)], 0.0)
        v_new = va - vb
        if self.config.integrator == "backward_euler":
            self.cap_i = self._cap_geq * (v_new - self.cap_v)
        else:
            self.cap_i = self._cap_geq * (v_new - self.cap_v) - self.cap_i
        self.cap_v = v_new
        self._x = x

    def step(self) -> None:
        """Advance one dt; on Newton divergence retry once with dt/10 substeps."""
        state = (self.t, self.cap_v.copy(), self.cap_i.copy(),
                 self.ideal_on.copy(), self._x.copy())
        try:
            self._advance(self.config.dt)
        except NewtonDivergence:
            self.t, self.cap_v, self.cap_i, self.ideal_on, self._x = state
            sub = self.config.dt / 10.0
            for _ in range(10):
                self._advance(sub)

    # -- element currents -------------------------------------------------------

    def _node_v(self, idx):
        return self._x[idx] if idx >= 0 else 0.0

    def element_current(self, name: str) -> float:
        """Branch current from the element's constitutive relation.

        Sign convention: current flowing from the first listed node (n1, anode,
        n+) through the element.  For voltage sources this is the current
        delivered out of the positive terminal.
        """
        sd = self.sd
        for r in sd.resistors:
            if r.name == name:
                return (self._node_v(sd.node_index[r.n1])
                        - self._node_v(sd.node_index[r.n2])) / r.ohms
        for k, c in enumerate(sd.capacitors):
            if c.name == name:
                return float(self.cap_i[k])
        for k, d in enumerate(sd.ideal_diodes):
            if d.name == name:
                i, j = self._ideal_idx[k]
                g = d.model.on_conductance if self.ideal_on[k] \
                    else d.model.off_conductance
                return g * (self._node_v(i) - self._node_v(j))
        for k, d in enumerate(sd.shockley_diodes):
            if d.name == name:
                i, j = self._shock_idx[k]
                dv = self._node_v(i) - self._node_v(j)
                cur, _ = _shockley_iv(d.model, dv)
                return cur + d.model.off_conductance * dv
        for e in sd.vsources:
            if e.name == name:
                return -float(self._x[sd.vsrc_index[e.name]])
        raise KeyError(f"unknown element {name!r}")

    def node_voltages(self) -> np.ndarray:
        return self._x[:self.sd.n_nodes].copy()

    # -- recording ----------------------------------------------------------

    def run(self, duration: float, record: bool = True) -> Trace | None:
        n_steps = int(round(duration / self.config.dt))
        sd = self.sd
        probes = sd.netlist.probes()
        elem_names = [e.name for e in sd.netlist.conducting_elements()]
        if record:
            times = np.empty(n_steps + 1)
            volts = np.empty((n_steps + 1, sd.n_nodes))
            pcur = np.empty((n_steps + 1, len(probes)))
            ecur = {nm: np.empty(n_steps + 1) for nm in elem_names}

            def snap(k):
                times[k] = self.t
                volts[k] = self._x[:sd.n_nodes]
                for nm in elem_names:
                    ecur[nm][k] = self.element_current(nm)
                for p_i, p in enumerate(probes):
                    pcur[k, p_i] = ecur[p.element][k]

            snap(0)
            for k in range(n_steps):
                self.step()
                snap(k + 1)
            return Trace(times=times, nodes=sd.nodes, voltages=volts,
                         probe_labels=tuple(p.label for p in probes),
                         probe_currents=pcur, element_currents=ecur,
                         ground=sd.netlist.ground, dt=self.config.dt,
                         integrator=self.config.integrator)
        for _ in range(n_steps):
            self.step()
        return None


def transient_solve(netlist: Netlist, config: TransientConfig) -> Trace:
    """One-shot transient simulation from the netlist's initial conditions."""
    return TransientSession(netlist, config).run(config.t_end)


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def kcl_residual(trace: Trace, netlist: Netlist) -> float:
    """Max node-current imbalance over the trace.

    Resistor, capacitor and Shockley currents are recomputed from the recorded
    node voltages; source and ideal-switch branch currents (the balancing
    unknowns) are taken from the trace's element accounting.
    """
    sd = assemble(netlist)
    if tuple(sd.nodes) != tuple(trace.nodes):
        raise ShapeMismatch("trace node set does not match netlist")
    nt = len(trace.times)
    if trace.voltages.shape != (nt, sd.n_nodes):
        raise ShapeMismatch("voltage array shape mismatch")

    def v_of(node):
        return trace.voltage(node)

    imbalance = np.zeros((nt, sd.n_nodes))

    def add(node, current):
        i = sd.node_index[node]
        if i >= 0:
            imbalance[:, i] += current

    for r in sd.resistors:
        cur = (v_of(r.n1) - v_of(r.n2)) / r.ohms
        add(r.n1, cur)
        add(r.n2, -cur)
    dt = trace.dt
    for c in sd.capacitors:
        dv = v_of(c.n1) - v_of(c.n2)
        cur = np.zeros(nt)
        if c.name in trace.element_currents:
            cur[0] = trace.element_currents[c.name][0]
        if trace.integrator == "backward_euler":
            cur[1:] = c.farads * np.diff(dv) / dt
        else:
            ddv = 2.0 * c.farads * np.diff(dv) / dt
            for k in range(1, nt):
                cur[k] = ddv[k - 1] - cur[k - 1]
        add(c.n1, cur)
        add(c.n2, -cur)
    for d in sd.shockley_diodes:
        dv = v_of(d.anode) - v_of(d.cathode)
        cur = np.array([_shockley_iv(d.model, float(v))[0] for v in dv])
        cur += d.model.off_conductance * dv
        add(d.anode, cur)
        add(d.cathode, -cur)
    for d in sd.ideal_diodes:
        cur = trace.element_currents[d.name]
        add(d.anode, cur)
        add(d.cathode, -cur)
    for e in sd.vsources:
        cur = -trace.element_currents[e.name]  # stored as delivered current
        add(e.npos, cur)
        add(e.nneg, -cur)
    # row 0 comes from the DC init where capacitor currents are branch unknowns;
    # they are recorded in element_currents, so row 0 balances like the rest.
    return float(np.max(np.abs(imbalance))) if imbalance.size else 0.0


# ---------------------------------------------------------------------------
# Netlist text format
# ---------------------------------------------------------------------------

def format_netlist(netlist: Netlist) -> str:
    lines = []
    if netlist.ground != "0":
        lines.append(f".ground {netlist.ground}")
    for e in netlist.elements:
        if isinstance(e, Resistor):
            lines.append(f"R {e.name} {e.n1} {e.n2} {e.ohms:.17g}")
        elif isinstance(e, Capacitor):
            lines.append(f"C {e.name} {e.n1} {e.n2} {e.farads:.17g} "
                         f"iv={e.initial_voltage:.17g}")
        elif isinstance(e, Diode):
            lines.append(f"D {e.name} {e.anode} {e.cathode} {_format_model(e.model)}")
        elif isinstance(e, VoltageSource):
            if callable(e.waveform):
                raise ValueError(
                    f"source {e.name!r} has a non-constant waveform; "
                    "only DC sources are expressible in the text format")
            lines.append(f"V {e.name} {e.npos} {e.nneg} {float(e.waveform):.17g}")
        elif isinstance(e, CurrentProbe):
            lines.append(f"PROBE {e.label} {e.element}")
    return "\n".join(lines) + "\n"


def _format_model(m: DiodeModel) -> str:
    if m.kind == "ideal":
        return "ideal"
    return (f"shockley is={m.saturation_current:.17g} "
            f"n={m.emission_coefficient:.17g} vt={m.thermal_voltage:.17g}")


def _parse_model(fields) -> DiodeModel:
    kind = fields[0]
    if kind == "ideal":
        return IDEAL_DIODE
    if kind == "shockley":
        kv = dict(f.split("=", 1) for f in fields[1:])
        return DiodeModel(kind="shockley",
                          saturation_current=float(kv.get("is", 1e-9)),
                          emission_coefficient=float(kv.get("n", 1.0)),
                          thermal_voltage=float(kv.get("vt", 0.02585)))
    raise NetlistError(f"unknown diode model {kind!r}")


def parse_netlist(text: str) -> Netlist:
    elements = []
    ground = "0"
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0].upper()
        try:
            if kind == ".GROUND":
                ground = fields[1]
            elif kind == "R":
                elements.append(Resistor(fields[1], fields[2], fields[3],
                                         float(fields[4])))
            elif kind == "C":
                iv = 0.0
                for f in fields[5:]:
                    if f.startswith("iv="):
                        iv = float(f[3:])
                elements.append(Capacitor(fields[1], fields[2], fields[3],
                                          float(fields[4]), iv))
            elif kind == "D":
                elements.append(Diode(fields[1], fields[2], fields[3],
                                      _parse_model(fields[4:])))
            elif kind == "V":
                elements.append(VoltageSource(fields[1], fields[2], fields[3],
                                              float(fields[4])))
            elif kind == "PROBE":
                elements.append(CurrentProbe(fields[1], fields[2]))
            else:
                raise NetlistError(f"line {lineno}: unknown card {fields[0]!r}")
        except (IndexError, ValueError) as exc:
            raise NetlistError(f"line {lineno}: {exc}") from exc
    return Netlist(elements, ground=ground)
