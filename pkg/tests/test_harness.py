"""Pin encoding, sensor/ADC chain, and runtime accounting."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capnn.harness import (
    PinWaveform,
    RuntimeBreakdown,
    SensorModel,
    TimingModel,
    WorkloadSpec,
    decode_counts,
    emulate_run,
    encode_sample,
    estimate_runtime,
    measurements_to_csv,
    sense_current,
)
from capnn.pipeline import Sample


def test_encode_sample_threshold():
    values = [0, 128, 129, 255] + [0] * 21
    wave = encode_sample(Sample(0, tuple(values)), threshold=128)
    assert wave.levels[:4] == (0.0, 0.0, 5.0, 5.0)
    assert wave.pin_count == 25


def test_pin_waveform_rejects_intermediate_levels():
    with pytest.raises(ValueError):
        PinWaveform((0.0, 3.3), 1e-3)


def test_sensor_zero_and_one_ampere():
    sensor = SensorModel()
    assert sense_current(0.0, sensor) == 512
    assert sense_current(1.0, sensor) == 549


def test_sensor_clamps_at_rails():
    sensor = SensorModel()
    assert sense_current(100.0, sensor) == 1023
    assert sense_current(-100.0, sensor) == 0


@settings(max_examples=100, deadline=None)
@given(st.floats(-13.0, 13.0), st.floats(-13.0, 13.0))
def test_sensor_monotone(i1, i2):
    sensor = SensorModel()
    lo, hi = sorted((i1, i2))
    assert sense_current(lo, sensor) <= sense_current(hi, sensor)


@settings(max_examples=100, deadline=None)
@given(st.floats(-13.0, 13.0))
def test_decode_within_half_lsb(current):
    # inside the unclamped range, decode(encode(i)) lands within half an
    # ADC step converted to amperes
    sensor = SensorModel()
    counts = sense_current(current, sensor)
    if 0 < counts < sensor.adc_max:
        lsb_amps = sensor.adc_fullscale / sensor.adc_max / sensor.sensitivity
        assert abs(decode_counts(counts, sensor) - current) <= lsb_amps / 2 + 1e-12


def test_sensor_noise_is_seeded():
    sensor = SensorModel(noise_sigma=0.05, rng_seed=3)
    a = [sense_current(0.5, sensor, np.random.default_rng(3)) for _ in range(5)]
    b = [sense_current(0.5, sensor, np.random.default_rng(3)) for _ in range(5)]
    assert a == b


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

def test_write_component_per_row():
    timing = TimingModel()
    assert 25 * timing.write_cost == pytest.approx(3.2e-6)


def test_runtime_estimate_components():
    breakdown = estimate_runtime(WorkloadSpec(), TimingModel())
    rows = 10 * 565
    assert breakdown.sd_latency == pytest.approx(rows * 0.4)
    assert breakdown.pin_writes == pytest.approx(rows * 3.2e-6)
    assert breakdown.total == pytest.approx(breakdown.sd_latency
                                            + breakdown.pin_writes)
    assert breakdown.sd_latency / breakdown.total > 0.99


def test_slow_writes_cost_more():
    fast = estimate_runtime(WorkloadSpec(), TimingModel(use_fast_writes=True))
    slow = estimate_runtime(WorkloadSpec(), TimingModel(use_fast_writes=False))
    assert slow.pin_writes > 40 * fast.pin_writes


def test_timing_validation():
    with pytest.raises(ValueError):
        TimingModel(fast_write_cost=1e-5, slow_write_cost=1e-6)


def test_breakdown_csv():
    csv = RuntimeBreakdown(1.0, 0.25, 0.0, 0.0).to_csv()
    lines = csv.splitlines()
    assert lines[0] == "component,seconds"
    assert lines[-1] == "total,1.25"


# ---------------------------------------------------------------------------
# Emulated run
# ---------------------------------------------------------------------------

class StubNetwork:
    def __init__(self):
        self.presented = []

    def present(self, levels, duration, target=None):
        self.presented.append((levels, duration, target))
        return 1e-3 * sum(1 for v in levels if v > 0)


def test_emulate_run_accounting():
    samples = [Sample(k % 10, tuple([255 * (v == k) for v in range(25)]))
               for k in range(4)]
    network = StubNetwork()
    timing = TimingModel()
    measurements, elapsed = emulate_run(samples, network, SensorModel(), timing)
    assert len(measurements) == 4
    assert len(network.presented) == 4
    per_row = timing.sd_row_latency + 25 * timing.write_cost
    assert elapsed == pytest.approx(4 * per_row)
    assert measurements[-1].elapsed_s == pytest.approx(elapsed)
    csv = measurements_to_csv(measurements)
    assert csv.splitlines()[0] == "row,label,counts,amperes,elapsed_s"
    assert len(csv.splitlines()) == 5


def test_emulate_run_passes_targets():
    samples = [Sample(0, tuple([0] * 25)), Sample(1, tuple([0] * 25))]
    network = StubNetwork()
    emulate_run(samples, network, SensorModel(), TimingModel(),
                targets=[5.0, 0.0])
    assert [t for _, _, t in network.presented] == [5.0, 0.0]
