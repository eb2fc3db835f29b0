"""Microcontroller-side emulation: pin encoding, current sensing, runtime accounting.

Models the measurement chain of the hardware rig: 25 digital pins drive the
input cells, the output current passes through a Hall-effect sensor (ACS712
style: 2.5 V zero offset, 185 mV/A) into a 10-bit ADC, and every dataset row
costs SD-card latency plus pin-write and ADC-read time on a 16 MHz part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pipeline import DatasetFiles, Sample, load_sd_text


@dataclass(frozen=True)
class PinWaveform:
    levels: tuple              # 25 voltages, each 0.0 or 5.0
    presentation_duration: float

    def __post_init__(self):
        if any(v not in (0.0, 5.0) for v in self.levels):
            raise ValueError("pin levels must be 0 V or 5 V")
        if self.presentation_duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def pin_count(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class SensorModel:
    sensitivity: float = 0.185   # V/A, 5 A ACS712 variant
    zero_offset: float = 2.5     # V
    noise_sigma: float = 0.0     # V, gaussian on the sensor output
    adc_bits: int = 10
    adc_fullscale: float = 5.0   # V
    rng_seed: int = 0

    def __post_init__(self):
        if self.sensitivity <= 0:
            raise ValueError("sensitivity must be positive")
        if not 0 <= self.zero_offset <= self.adc_fullscale:
            raise ValueError("zero offset outside ADC range")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")

    @property
    def adc_max(self) -> int:
        return (1 << self.adc_bits) - 1


@dataclass(frozen=True)
class TimingModel:
    clock_hz: float = 16e6
    fast_write_cost: float = 128e-9   # digitalWriteFast
    slow_write_cost: float = 5.8e-6   # stock digitalWrite
    sd_row_latency: float = 0.4       # SPI read of one dataset row
    adc_read_cost: float = 0.0
    per_sample_settle: float = 0.0
    use_fast_writes: bool = True

    def __post_init__(self):
        if min(self.clock_hz, self.fast_write_cost, self.slow_write_cost,
               self.sd_row_latency, self.adc_read_cost,
               self.per_sample_settle) < 0:
            raise ValueError("timing constants must be nonnegative")
        if self.fast_write_cost >= self.slow_write_cost:
            raise ValueError("fast write must be faster than slow write")

    @property
    def write_cost(self) -> float:
        return self.fast_write_cost if self.use_fast_writes else self.slow_write_cost


@dataclass(frozen=True)
class WorkloadSpec:
    n_classes: int = 10
    rows_per_class: int = 565
    writes_per_row: int = 25
    reads_per_row: int = 1

    def __post_init__(self):
        if min(self.n_classes, self.rows_per_class, self.writes_per_row,
               self.reads_per_row) < 0:
            raise ValueError("workload counts must be nonnegative")


@dataclass(frozen=True)
class RuntimeBreakdown:
    sd_latency: float
    pin_writes: float
    adc_reads: float
    settle: float

    @property
    def total(self) -> float:
        return self.sd_latency + self.pin_writes + self.adc_reads + self.settle

    def components(self) -> dict:
        return {"sd_latency": self.sd_latency, "pin_writes": self.pin_writes,
                "adc_reads": self.adc_reads, "settle": self.settle}

    def to_csv(self) -> str:
        lines = ["component,seconds"]
        for k, v in self.components().items():
            lines.append(f"{k},{v:.17g}")
        lines.append(f"total,{self.total:.17g}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def encode_sample(sample: Sample, threshold: int = 128,
                  duration: float = 10e-3) -> PinWaveform:
    """Binary pin drive: 5 V where the sample value exceeds the threshold."""
    if not 0 <= threshold <= 255:
        raise ValueError("threshold must be in [0,255]")
    levels = tuple(5.0 if v > threshold else 0.0 for v in sample.values)
    return PinWaveform(levels, duration)


def sense_current(current: float, model: SensorModel,
                  rng: np.random.Generator | None = None) -> int:
    """ADC counts for a branch current through the sensor chain."""
    v = model.zero_offset + model.sensitivity * current
    if model.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(model.rng_seed)
        v += rng.normal(0.0, model.noise_sigma)
    counts = int(np.floor(v / model.adc_fullscale * model.adc_max + 0.5))
    return int(np.clip(counts, 0, model.adc_max))


def decode_counts(counts: int, model: SensorModel) -> float:
    """Invert the sensor transfer function back to amperes (noise ignored)."""
    v = counts / model.adc_max * model.adc_fullscale
    return (v - model.zero_offset) / model.sensitivity


def estimate_runtime(workload: WorkloadSpec, timing: TimingModel) -> RuntimeBreakdown:
    """Per-component runtime for a full training workload; additive in rows."""
    rows = workload.n_classes * workload.rows_per_class
    return RuntimeBreakdown(
        sd_latency=rows * timing.sd_row_latency,
        pin_writes=rows * workload.writes_per_row * timing.write_cost,
        adc_reads=rows * workload.reads_per_row * timing.adc_read_cost,
        settle=rows * timing.per_sample_settle,
    )


@dataclass(frozen=True)
class Measurement:
    row: int
    label: int
    counts: int
    amperes: float
    elapsed_s: float


def measurements_to_csv(measurements) -> str:
    lines = ["row,label,counts,amperes,elapsed_s"]
    for m in measurements:
        lines.append(f"{m.row},{m.label},{m.counts},{m.amperes:.17g},"
                     f"{m.elapsed_s:.17g}")
    return "\n".join(lines) + "\n"


def emulate_run(dataset: DatasetFiles | list, network, sensor: SensorModel,
                timing: TimingModel, threshold: int = 128,
                duration: float = 10e-3, targets=None):
    """Run every dataset row through the network rig and the sensor chain.

    `network` is anything with a ``present(levels, duration, target=None)``
    method returning the probed output current in amperes; capacitor state
    persists inside the rig across rows.  Returns (measurements, total_time).
    `targets` optionally supplies a per-row feedback-rail voltage.
    """
    samples = load_sd_text(dataset) if isinstance(dataset, DatasetFiles) else dataset
    rng = np.random.default_rng(sensor.rng_seed)
    per_row = (timing.sd_row_latency
               + 25 * timing.write_cost
               + timing.adc_read_cost
               + timing.per_sample_settle)
    measurements = []
    elapsed = 0.0
    for row, sample in enumerate(samples):
        wave = encode_sample(sample, threshold, duration)
        target = targets[row] if targets is not None else None
        amps = network.present(wave.levels, duration, target=target)
        counts = sense_current(amps, sensor, rng)
        elapsed += per_row
        measurements.append(Measurement(row, sample.label, counts, amps, elapsed))
    return measurements, elapsed
