"""Run configuration: flat key=value files, flag overrides, stable hashing.

Every key in `KEY_SPECS` can appear in a config file as `key = value`, one per
line (# comments allowed), and mirrors a CLI flag `--key-with-dashes`.
Precedence is flag > config file > default.  The configuration hash covers the
canonical rendering of all keys, so two runs hash equal iff every effective
value is equal.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .cells import CellParams, NetworkTopology
from .engine import TransientConfig
from .errors import MalformedLine
from .harness import SensorModel, TimingModel, WorkloadSpec
from .learning import BaselineConfig, FeedbackRule


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (type constructor, default, help)
KEY_SPECS = {
    "mnist_train_csv": (str, "", "path to the training CSV (label + 784 pixels per row)"),
    "mnist_test_csv": (str, "", "path to the test CSV"),
    "inputs_path": (str, "inputs.txt", "25-value-per-line sample file (relative to --out)"),
    "labels_path": (str, "labels.txt", "one-label-per-line file (relative to --out)"),
    "test_inputs_path": (str, "test_inputs.txt", "held-out sample file (relative to --out)"),
    "test_labels_path": (str, "test_labels.txt", "held-out label file (relative to --out)"),
    "eval_rows": (int, 0, "cap on evaluated rows, 0 = all"),
    "threshold": (int, 128, "binarization threshold for pin drive, 0..255"),
    "cell_r1": (float, 330.0, "weight-cell output resistor, ohms"),
    "cell_r2": (float, 10.0, "weight-cell storage-branch resistor, ohms"),
    "cell_r3": (float, 330.0, "weight-cell input resistor, ohms"),
    "cell_c1": (float, 10e-6, "weight-cell storage capacitor, farads"),
    "output_c1": (float, 1e-6, "output-cell storage capacitor, farads"),
    "sense_resistor": (float, 10.0, "output sense resistor, ohms"),
    "supply": (float, 5.0, "pin drive level, volts"),
    "n_inputs": (int, 25, "input pins / weight cells per circuit"),
    "n_classes": (int, 10, "number of class circuits"),
    "rows_per_class": (int, 565, "training rows used per class"),
    "epochs": (int, 1, "training passes over the rows"),
    "train_duration": (float, 10e-3, "per-row presentation time while training, seconds"),
    "train_dt": (float, 1e-4, "solver step while training, seconds"),
    "infer_duration": (float, 10e-3, "presentation time while reading out, seconds"),
    "infer_dt": (float, 1e-4, "solver step while reading out, seconds"),
    "readout": (str, "mean", "output reading: 'mean' over the window or 'final' sample"),
    "integrator": (str, "backward_euler", "backward_euler or trapezoidal"),
    "feedback_node": (str, "sum", "node the feedback diode taps"),
    "target_low": (float, 0.0, "feedback rail for negative examples, volts"),
    "target_high": (float, 5.0, "feedback rail for positive examples, volts"),
    "sensor_sensitivity": (float, 0.185, "current sensor gain, volts per ampere"),
    "sensor_zero_offset": (float, 2.5, "current sensor output at 0 A, volts"),
    "sensor_noise_sigma": (float, 0.0, "gaussian noise on the sensor output, volts"),
    "adc_bits": (int, 10, "ADC resolution"),
    "adc_fullscale": (float, 5.0, "ADC reference, volts"),
    "clock_hz": (float, 16e6, "microcontroller clock"),
    "fast_write_cost": (float, 128e-9, "fast pin write, seconds"),
    "slow_write_cost": (float, 5.8e-6, "stock pin write, seconds"),
    "sd_row_latency": (float, 0.4, "storage read per dataset row, seconds"),
    "use_fast_writes": (_parse_bool, True, "model fast pin writes"),
    "baseline_hidden": (int, 100, "baseline network hidden units"),
    "baseline_learning_rate": (float, 0.1, "baseline SGD learning rate"),
    "baseline_epochs": (int, 5, "baseline training epochs"),
    "seed": (int, 0, "run seed (sensor noise, baseline init)"),
}


def parse_config_file(path) -> dict:
    """Read `key = value` lines; unknown keys and malformed lines are errors."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise MalformedLine(lineno, f"expected 'key = value', got {raw!r}")
            key, _, text = line.partition("=")
            key = key.strip()
            if key not in KEY_SPECS:
                raise MalformedLine(lineno, f"unknown key {key!r}")
            ctor = KEY_SPECS[key][0]
            try:
                values[key] = ctor(text.strip())
            except ValueError as exc:
                raise MalformedLine(lineno, str(exc)) from exc
    return values


def merge_config(file_values: dict | None = None,
                 flag_values: dict | None = None) -> dict:
    """Apply precedence flag > file > default over the full key set."""
    merged = {k: spec[1] for k, spec in KEY_SPECS.items()}
    for source in (file_values, flag_values):
        for k, v in (source or {}).items():
            if k not in KEY_SPECS:
                raise KeyError(f"unknown config key {k!r}")
            merged[k] = v
    return merged


def render_config(values: dict) -> str:
    """Canonical text rendering; stable across runs for equal values."""
    lines = []
    for k in sorted(values):
        v = values[k]
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def config_hash(values: dict) -> str:
    return hashlib.sha256(render_config(values).encode()).hexdigest()


@dataclass(frozen=True)
class RunConfig:
    """Typed view over a merged key/value mapping."""

    values: dict

    @classmethod
    def from_sources(cls, config_path=None, flag_values=None) -> "RunConfig":
        file_values = parse_config_file(config_path) if config_path else None
        return cls(merge_config(file_values, flag_values))

    def __getitem__(self, key):
        return self.values[key]

    @property
    def hash(self) -> str:
        return config_hash(self.values)

    def input_cell(self) -> CellParams:
        v = self.values
        return CellParams(r1=v["cell_r1"], r2=v["cell_r2"],
                          r3=v["cell_r3"], c1=v["cell_c1"])

    def output_cell(self) -> CellParams:
        v = self.values
        return CellParams(r1=v["cell_r1"], r2=v["cell_r2"],
                          r3=v["cell_r3"], c1=v["output_c1"])

    def topology(self) -> NetworkTopology:
        v = self.values
        return NetworkTopology(n_inputs=v["n_inputs"],
                               input_cell=self.input_cell(),
                               output_cell=self.output_cell(),
                               sense_resistor=v["sense_resistor"],
                               supply=v["supply"])

    def train_transient(self) -> TransientConfig:
        v = self.values
        return TransientConfig(dt=v["train_dt"], t_end=v["train_duration"],
                               integrator=v["integrator"])

    def infer_transient(self) -> TransientConfig:
        v = self.values
        return TransientConfig(dt=v["infer_dt"], t_end=v["infer_duration"],
                               integrator=v["integrator"])

    def feedback_rule(self) -> FeedbackRule:
        v = self.values
        return FeedbackRule(point_a=v["feedback_node"],
                            target_low_voltage=v["target_low"],
                            target_high_voltage=v["target_high"])

    def sensor(self) -> SensorModel:
        v = self.values
        return SensorModel(sensitivity=v["sensor_sensitivity"],
                           zero_offset=v["sensor_zero_offset"],
                           noise_sigma=v["sensor_noise_sigma"],
                           adc_bits=v["adc_bits"],
                           adc_fullscale=v["adc_fullscale"],
                           rng_seed=v["seed"])

    def timing(self) -> TimingModel:
        v = self.values
        return TimingModel(clock_hz=v["clock_hz"],
                           fast_write_cost=v["fast_write_cost"],
                           slow_write_cost=v["slow_write_cost"],
                           sd_row_latency=v["sd_row_latency"],
                           use_fast_writes=v["use_fast_writes"])

    def workload(self) -> WorkloadSpec:
        v = self.values
        return WorkloadSpec(n_classes=v["n_classes"],
                            rows_per_class=v["rows_per_class"],
                            writes_per_row=v["n_inputs"])

    def baseline(self) -> BaselineConfig:
        v = self.values
        return BaselineConfig(n_inputs=v["n_inputs"], hidden=v["baseline_hidden"],
                              n_outputs=v["n_classes"],
                              learning_rate=v["baseline_learning_rate"],
                              epochs=v["baseline_epochs"],
                              rng_seed=v["seed"] + 1)
