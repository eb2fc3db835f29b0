"""One-vs-all training with reverse-EMF feedback, inference, metrics, baseline.

Each digit class gets its own copy of the analog circuit.  Training presents
dataset rows on the input pins while a target rail behind a feedback diode
clamps the output for negative examples, slowing weight-capacitor charging.
The stored capacitor voltages are the trained weights.  A small numpy
feed-forward network trained on the same 5x5 data provides the comparison
baseline.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cells import NetworkTopology, compose_classifier, input_cap_names
from .engine import (
    IDEAL_DIODE,
    Diode,
    DiodeModel,
    Netlist,
    TransientConfig,
    TransientSession,
    VoltageSource,
)
from .errors import NonFiniteLoss, SaturationWarning, ShapeMismatch
from .harness import SensorModel, decode_counts, sense_current
from .pipeline import Sample


@dataclass(frozen=True)
class FeedbackRule:
    # The clamp attaches at the summing node: behind the 10-ohm sense shunt a
    # clamp at the final output has no authority over the weight cells (the
    # shunt already holds that node within ~0.1 V of ground).
    point_a: str = "sum"          # network node the feedback diode taps
    point_b: str = "fb"           # target-rail node
    target_low_voltage: float = 0.0
    target_high_voltage: float = 5.0
    feedback_diode: DiodeModel = IDEAL_DIODE

    def __post_init__(self):
        if self.target_low_voltage >= self.target_high_voltage:
            raise ValueError("target_low must be below target_high")


@dataclass(frozen=True)
class WeightState:
    class_id: int
    supply: float
    voltages: tuple  # 25 input-cell cap voltages + 1 output-cell cap voltage

    def __post_init__(self):
        # n_inputs weight caps plus the output-cell cap; 26 on the stock net
        if len(self.voltages) < 2:
            raise ValueError(f"expected >= 2 voltages, got {len(self.voltages)}")
        for v in self.voltages:
            if not -1e-9 <= v <= self.supply + 1e-9:
                raise ValueError(f"weight voltage {v} outside [0, supply]")

    @property
    def saturated_flags(self) -> tuple:
        # the drive asymptote sits below the supply (the summing stage loads
        # the cell), so saturation is called at 90% of the supply
        return tuple(v >= 0.9 * self.supply for v in self.voltages)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(f"class={self.class_id} supply={self.supply:g} format=1\n")
            for k, v in enumerate(self.voltages):
                fh.write(f"{k},{v:.17g}\n")

    @classmethod
    def load(cls, path) -> "WeightState":
        with open(path) as fh:
            header = fh.readline().split()
            kv = dict(f.split("=", 1) for f in header)
            if kv.get("format") != "1":
                raise ValueError(f"unsupported weight file format {kv.get('format')!r}")
            by_index = {}
            for line in fh:
                idx, v = line.strip().split(",")
                by_index[int(idx)] = float(v)
        voltages = tuple(by_index[k] for k in range(len(by_index)))
        return cls(int(kv["class"]), float(kv["supply"]), voltages)


# ---------------------------------------------------------------------------
# Circuit rig
# ---------------------------------------------------------------------------

class ClassifierRig:
    """A live classifier circuit: pin sources, optional feedback stage, and a
    persistent transient session whose capacitor charge carries across rows."""

    def __init__(self, topology: NetworkTopology, transient: TransientConfig,
                 rule: FeedbackRule | None = None):
        self.topology = topology
        self.rule = rule
        base = compose_classifier(topology)
        elements = list(base.elements)
        for k in range(topology.n_inputs):
            elements.append(VoltageSource(f"vin{k:02d}", f"in{k:02d}", "0", 0.0))
        if rule is not None:
            elements.append(Diode("fb_d", rule.point_a, rule.point_b,
                                  rule.feedback_diode))
            elements.append(VoltageSource("vtarget", rule.point_b, "0",
                                          rule.target_high_voltage))
        self.session = TransientSession(Netlist(elements), transient)
        self._cap_names = input_cap_names(topology) + ["oc_c1"]

    def set_weights(self, voltages) -> None:
        state = dict(zip(self._cap_names, voltages))
        self.session.set_capacitor_state(state)

    def weights(self) -> np.ndarray:
        state = self.session.capacitor_state()
        return np.array([state[n] for n in self._cap_names])

    def present(self, levels, duration: float, target: float | None = None,
                readout: str = "final") -> float:
        """Drive the pins for `duration` seconds; returns the sensed output
        current in amperes.  Capacitor charge persists afterwards.

        `readout` selects the reading: "final" samples the current at the end
        of the window (one ADC read), "mean" averages it over the window
        (repeated reads).  Near steady state the stored charge is masked by
        the blocking diodes, so the mean reading carries far more weight
        information: uncharged cells divert drive current all window long.
        """
        if len(levels) != self.topology.n_inputs:
            raise ShapeMismatch(
                f"{len(levels)} pin levels for {self.topology.n_inputs} inputs")
        if readout not in ("final", "mean"):
            raise ValueError(f"unknown readout {readout!r}")
        for k, v in enumerate(levels):
            self.session.set_source(f"vin{k:02d}", float(v))
        if target is not None:
            if self.rule is None:
                raise ValueError("rig was built without a feedback stage")
            self.session.set_source("vtarget", float(target))
        if readout == "final":
            self.session.run(duration, record=False)
            return self.session.element_current("rsense")
        n_steps = int(round(duration / self.session.config.dt))
        acc = 0.0
        for _ in range(n_steps):
            self.session.step()
            acc += self.session.element_current("rsense")
        return acc / n_steps


# ---------------------------------------------------------------------------
# Training and inference
# ---------------------------------------------------------------------------

DEFAULT_TRAIN_TRANSIENT = TransientConfig(dt=1e-4, t_end=1e-2,
                                          integrator="backward_euler")


def train_class_circuit(class_id: int, samples, topology: NetworkTopology,
                        rule: FeedbackRule,
                        transient: TransientConfig = DEFAULT_TRAIN_TRANSIENT,
                        threshold: int = 128, duration: float = 10e-3,
                        epochs: int = 1) -> WeightState:
    """Single-pass (by default) one-vs-all training of one class circuit."""
    rig = ClassifierRig(topology, transient, rule)
    samples = list(samples)
    n_rows = len(samples) * epochs
    row = 0
    n = topology.n_inputs
    for _ in range(epochs):
        for sample in samples:
            levels = [5.0 if v > threshold else 0.0 for v in sample.values[:n]]
            target = (rule.target_high_voltage if sample.label == class_id
                      else rule.target_low_voltage)
            rig.present(levels, duration, target=target)
            row += 1
            if row < n_rows:
                w = rig.weights()[:-1]
                if np.mean(w >= 0.9 * topology.supply) > 0.8:
                    warnings.warn(
                        f"class {class_id}: {int(np.sum(w >= 0.9 * topology.supply))}"
                        f"/{len(w)} weight capacitors saturated at row {row}",
                        SaturationWarning)
    voltages = tuple(float(max(0.0, min(topology.supply, v)))
                     for v in rig.weights())
    return WeightState(class_id, topology.supply, voltages)


def infer(sample: Sample, weight_states, topology: NetworkTopology,
          sensor: SensorModel,
          transient: TransientConfig = DEFAULT_TRAIN_TRANSIENT,
          threshold: int = 128, duration: float = 10e-3,
          rig: ClassifierRig | None = None,
          quantize: bool = False, readout: str = "mean") -> np.ndarray:
    """Response of every class circuit to one sample, in calibrated amperes.

    Each circuit starts from its stored weights; presenting the sample does
    not leak charge between classes because the state is reinstalled per class.
    With `quantize=True` the readings pass through the full sensor/ADC chain;
    note the ADC step is ~26 mA at the default sensitivity, far coarser than
    the circuit's output range, so quantized responses carry no class signal.
    """
    if rig is None:
        rig = ClassifierRig(topology, transient, rule=None)
    levels = [5.0 if v > threshold else 0.0
              for v in sample.values[:topology.n_inputs]]
    responses = np.empty(len(weight_states))
    for k, ws in enumerate(weight_states):
        rig.set_weights(ws.voltages)
        amps = rig.present(levels, duration, readout=readout)
        if quantize:
            amps = decode_counts(sense_current(amps, sensor), sensor)
        responses[k] = amps
    return responses


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultMatrix:
    values: np.ndarray  # (n_classes, n_classes): row = true class, col = circuit
    units: str = "amperes"

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ShapeMismatch("result matrix must be square")
        if not np.all(np.isfinite(v)):
            raise ValueError("result matrix must be finite")

    def to_csv(self) -> str:
        n = self.values.shape[0]
        lines = ["true_class," + ",".join(str(c) for c in range(n))]
        for r in range(n):
            lines.append(str(r) + "," +
                         ",".join(f"{v:.17g}" for v in self.values[r]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Metrics:
    confusion: np.ndarray  # (n, n) counts, row = true class
    top1: float
    top3: float
    n_eval: int
    tie_break: str = "lowest-index"

    def to_csv(self) -> str:
        n = self.confusion.shape[0]
        lines = [f"top1,{self.top1:.17g}", f"top3,{self.top3:.17g}",
                 f"n_eval,{self.n_eval}", f"tie_break,{self.tie_break}",
                 "confusion_row," + ",".join(str(c) for c in range(n))]
        for r in range(n):
            lines.append(str(r) + "," +
                         ",".join(str(int(v)) for v in self.confusion[r]))
        return "\n".join(lines) + "\n"


def top_k_hit(responses: np.ndarray, true_class: int, k: int) -> bool:
    order = np.argsort(-np.asarray(responses), kind="stable")
    return true_class in order[:k]


def evaluate(labeled_responses, n_classes: int = 10,
             baseline_correction=None):
    """Aggregate per-sample class-circuit responses into the response matrix,
    confusion matrix, and top-1/top-3 accuracy.

    `labeled_responses` is an iterable of (true_label, response-vector) pairs.
    `baseline_correction` optionally subtracts a per-circuit offset before
    scoring; a uniform shift leaves the scores unchanged.
    """
    labeled = [(int(lbl), np.asarray(resp, float)) for lbl, resp in labeled_responses]
    if not labeled:
        raise ShapeMismatch("no responses to evaluate")
    for _, resp in labeled:
        if resp.shape != (n_classes,):
            raise ShapeMismatch(
                f"response vector of shape {resp.shape}, expected ({n_classes},)")
    if baseline_correction is not None:
        baseline_correction = np.asarray(baseline_correction, float)
        if baseline_correction.shape != (n_classes,):
            raise ShapeMismatch("baseline correction has wrong shape")
        labeled = [(lbl, resp - baseline_correction) for lbl, resp in labeled]
    confusion = np.zeros((n_classes, n_classes), int)
    sums = np.zeros((n_classes, n_classes))
    counts = np.zeros(n_classes, int)
    hits1 = hits3 = 0
    for lbl, resp in labeled:
        pred = int(np.argmax(resp))  # first index wins ties
        confusion[lbl, pred] += 1
        sums[lbl] += resp
        counts[lbl] += 1
        hits1 += int(pred == lbl)
        hits3 += int(top_k_hit(resp, lbl, 3))
    n = len(labeled)
    with np.errstate(invalid="ignore"):
        means = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], 0.0)
    matrix = ResultMatrix(means)
    metrics = Metrics(confusion=confusion, top1=hits1 / n, top3=hits3 / n, n_eval=n)
    return matrix, metrics


def measure_baseline_offsets(weight_states, topology: NetworkTopology,
                             sensor: SensorModel,
                             transient: TransientConfig = DEFAULT_TRAIN_TRANSIENT,
                             duration: float = 10e-3) -> np.ndarray:
    """Per-circuit response to the all-zero sample; subtracting this is the
    explicit baseline-correction step."""
    zero = Sample(0, tuple([0] * 25))
    return infer(zero, weight_states, topology, sensor,
                 transient=transient, duration=duration)


# ---------------------------------------------------------------------------
# Software baseline (dense 25 -> hidden -> 10 network, per-sample SGD)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineConfig:
    n_inputs: int = 25
    hidden: int = 100
    n_outputs: int = 10
    learning_rate: float = 0.1
    epochs: int = 5
    rng_seed: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class BaselineModel:
    config: BaselineConfig
    w1: np.ndarray  # (hidden, n_inputs)
    w2: np.ndarray  # (n_outputs, hidden)

    def forward(self, x):
        h = _sigmoid(self.w1 @ x)
        return _sigmoid(self.w2 @ h), h

    def predict(self, x) -> np.ndarray:
        return self.forward(x)[0]


def _scale_inputs(values) -> np.ndarray:
    return np.asarray(values, float) / 255.0 * 0.99 + 0.01


def _target_vector(label: int, n: int) -> np.ndarray:
    t = np.full(n, 0.01)
    t[label] = 0.99
    return t


def baseline_init(config: BaselineConfig) -> BaselineModel:
    rng = np.random.default_rng(config.rng_seed)
    w1 = rng.normal(0.0, config.n_inputs ** -0.5,
                    (config.hidden, config.n_inputs))
    w2 = rng.normal(0.0, config.hidden ** -0.5,
                    (config.n_outputs, config.hidden))
    return BaselineModel(config, w1, w2)


def baseline_gradients(model: BaselineModel, samples):
    """Summed squared-error loss and analytic gradients over a batch."""
    gw1 = np.zeros_like(model.w1)
    gw2 = np.zeros_like(model.w2)
    loss = 0.0
    for s in samples:
        x = _scale_inputs(s.values)
        t = _target_vector(s.label, model.config.n_outputs)
        o, h = model.forward(x)
        loss += 0.5 * float(np.sum((t - o) ** 2))
        delta_o = (o - t) * o * (1.0 - o)
        gw2 += np.outer(delta_o, h)
        delta_h = (model.w2.T @ delta_o) * h * (1.0 - h)
        gw1 += np.outer(delta_h, x)
    return loss, gw1, gw2


def baseline_train(samples, config: BaselineConfig = BaselineConfig()) -> BaselineModel:
    """Per-sample stochastic gradient descent on squared error.

    Rows are visited in a seeded random order each epoch; class-sorted input
    otherwise collapses the network onto the last class seen.
    """
    model = baseline_init(config)
    rng = np.random.default_rng(config.rng_seed)
    lr = config.learning_rate
    xs = [_scale_inputs(s.values) for s in samples]
    ts = [_target_vector(s.label, config.n_outputs) for s in samples]
    for _ in range(config.epochs):
        order = rng.permutation(len(xs))
        for x, t in ((xs[i], ts[i]) for i in order):
            o, h = model.forward(x)
            delta_o = (o - t) * o * (1.0 - o)
            model.w2 -= lr * np.outer(delta_o, h)
            delta_h = (model.w2.T @ delta_o) * h * (1.0 - h)
            model.w1 -= lr * np.outer(delta_h, x)
        probe = float(np.sum((ts[0] - model.predict(xs[0])) ** 2))
        if not np.isfinite(probe):
            raise NonFiniteLoss("training diverged to non-finite loss")
    return model


def baseline_eval(model: BaselineModel, samples) -> Metrics:
    labeled = [(s.label, model.predict(_scale_inputs(s.values)))
               for s in samples]
    _, metrics = evaluate(labeled, n_classes=model.config.n_outputs)
    return metrics


# ---------------------------------------------------------------------------
# Comparison report
# ---------------------------------------------------------------------------

def format_duration(seconds: float) -> str:
    if seconds < 60:
        return f"{seconds:g} s"
    minutes = int(seconds // 60)
    rem = seconds - 60 * minutes
    return f"{minutes} min {rem:.0f} s"


def format_accuracy(top1: float, top3: float | None = None) -> str:
    if top3 is None:
        return f"{top1:g}"
    return f"{top1:g}({top3:g})"


@dataclass(frozen=True)
class RunSummary:
    top1: float
    top3: float | None
    runtime_s: float
    energy_j: float | None = None


def compare_report(analog: RunSummary, baseline: RunSummary | None = None) -> str:
    """Side-by-side comparison table (operation time, top-1/top-3, energy)."""
    rows = [("", "Software baseline", "Analog circuit")]

    def cell(summary, fn):
        return fn(summary) if summary is not None else "-"

    rows.append(("Operation time",
                 cell(baseline, lambda s: format_duration(s.runtime_s)),
                 format_duration(analog.runtime_s)))
    rows.append(("Accuracy",
                 cell(baseline, lambda s: format_accuracy(s.top1, s.top3)),
                 format_accuracy(analog.top1, analog.top3)))
    rows.append(("Energy",
                 cell(baseline, lambda s: "not measured" if s.energy_j is None
                      else f"{s.energy_j:.3g} J"),
                 "not measured" if analog.energy_j is None
                 else f"{analog.energy_j:.3g} J"))
    if baseline is not None:
        rows.append(("Top-1 delta", "",
                     f"{analog.top1 - baseline.top1:+g}"))
        rows.append(("Runtime delta",
                     "", f"{analog.runtime_s - baseline.runtime_s:+g} s"))
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    lines = ["RESULT COMPARISON"]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
