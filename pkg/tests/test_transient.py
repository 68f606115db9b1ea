import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oectsim.io import DataFormatError
from oracles import rk4_oracle
from oectsim.transient import (
    PulseTrainSpec,
    TransientTrace,
    modulation_depth,
    read_trace,
    simulate_pulse_train,
    spike_count,
    spike_report,
    write_trace,
)


def test_single_pulse_reaches_one_minus_inv_e():
    tau = 1e-4
    spec = PulseTrainSpec(0.2, tau, 1000.0, 1)
    trace = simulate_pulse_train(1e4, tau / 1e4, spec, samples_per_segment=10)
    i = int(np.argmin(np.abs(trace.times - tau)))
    assert trace.times[i] == pytest.approx(tau)
    assert trace.response[i] == pytest.approx(1 - math.exp(-1), rel=1e-12)
    assert trace.response.max() == trace.response[i]


def test_closed_form_matches_rk4():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        tau = 10 ** rng.uniform(-5, -3)
        period = tau * rng.uniform(0.6, 5.0)
        width = period * rng.uniform(0.1, 0.9)
        spec = PulseTrainSpec(0.2, width, 1 / period, int(rng.integers(1, 4)))
        rs = 10 ** rng.uniform(3, 5)
        cp = tau / rs
        trace = simulate_pulse_train(rs, cp, spec, samples_per_segment=8)
        ref = rk4_oracle(rs, cp, spec, 8)
        assert trace.response.shape == ref.shape
        worst = max(worst, float(np.max(np.abs(trace.response - ref))))
    assert worst < 1e-6


def test_trace_layout():
    spec = PulseTrainSpec(0.2, 1e-4, 1000.0, 4)
    trace = simulate_pulse_train(5e3, 1e-8, spec, samples_per_segment=5)
    assert len(trace.times) == 4 * 2 * 5 + 1
    assert trace.times[0] == 0.0
    assert trace.times[-1] == pytest.approx(4e-3)
    assert trace.pulse_boundaries[2] == pytest.approx((2e-3, 2e-3 + 1e-4))


def test_low_frequency_full_recovery():
    # period >> tau: every pulse starts from ~0 and nearly saturates
    spec = PulseTrainSpec(0.2, 1e-4, 1000.0, 20)
    trace = simulate_pulse_train(5e3, 1e-8, spec)
    assert modulation_depth(trace) == pytest.approx(1.0, abs=1e-6)
    # width = 2 tau; per-pulse rise is normalized by the trace maximum
    assert trace.response.max() == pytest.approx(1 - math.exp(-2), rel=1e-6)
    assert spike_report(trace).modulations[0] == pytest.approx(1.0, abs=1e-6)


def test_high_frequency_baseline_rises():
    spec = PulseTrainSpec(0.2, 1e-4, 8000.0, 40)
    trace = simulate_pulse_train(1e5, 19e-9, spec)
    starts = [trace.response[np.searchsorted(trace.times, s)] for s, _ in trace.pulse_boundaries]
    assert np.all(np.diff(starts) > 0)
    assert modulation_depth(trace) < 0.2


def test_cp_ordering_at_default(cfg):
    pre = simulate_pulse_train(cfg.transient_rs, 10e-9, cfg.pulse)
    post = simulate_pulse_train(cfg.transient_rs, 19e-9, cfg.pulse)
    assert modulation_depth(pre) > cfg.threshold > modulation_depth(post)
    assert spike_count(pre, cfg.threshold) == cfg.pulse.n_pulses
    assert spike_count(post, cfg.threshold) == 0


def steady_spec(f, tau):
    # enough pulses for the start-up transient to decay below 1e-15
    return PulseTrainSpec(0.2, 1e-4, f, max(10, math.ceil(40 * tau * f)))


@settings(max_examples=30, deadline=None)
@given(
    f1=st.floats(200.0, 9000.0),
    ratio=st.floats(1.0, 1.5),
    cp=st.floats(1e-9, 5e-8),
)
def test_depth_monotone_in_frequency(f1, ratio, cp):
    f2 = min(f1 * ratio, 9500.0)
    d = [
        modulation_depth(simulate_pulse_train(1e5, cp, steady_spec(f, 1e5 * cp), 4))
        for f in (f1, f2)
    ]
    assert d[1] <= d[0] + 1e-12


@settings(max_examples=30, deadline=None)
@given(
    f=st.floats(200.0, 9000.0),
    cp1=st.floats(1e-9, 5e-8),
    ratio=st.floats(1.0, 3.0),
)
def test_depth_monotone_in_cp(f, cp1, ratio):
    spec = steady_spec(f, 1e5 * cp1 * ratio)
    d = [modulation_depth(simulate_pulse_train(1e5, c, spec, 4)) for c in (cp1, cp1 * ratio)]
    assert d[1] <= d[0] + 1e-12


@settings(max_examples=40, deadline=None)
@given(
    tau=st.floats(1e-6, 1e-2),
    f=st.floats(10.0, 5000.0),
    duty=st.floats(0.01, 0.99),
    n=st.integers(1, 30),
)
def test_normalization(tau, f, duty, n):
    spec = PulseTrainSpec(0.2, duty / f, f, n)
    trace = simulate_pulse_train(1e4, tau / 1e4, spec, 6)
    assert trace.response.min() >= 0.0
    assert trace.response.max() <= 1.0


@pytest.mark.parametrize("s", [0.1, 3.0, 250.0])
def test_time_rescaling(s):
    base = PulseTrainSpec(0.2, 1e-4, 4000.0, 12)
    scaled = PulseTrainSpec(0.2, 1e-4 * s, 4000.0 / s, 12)
    a = simulate_pulse_train(1e5, 1e-8, base)
    b = simulate_pulse_train(1e5, 1e-8 * s, scaled)
    assert np.allclose(b.response, a.response, rtol=1e-12, atol=1e-14)
    assert np.allclose(b.times, a.times * s, rtol=1e-12)


def test_transient_exclusion():
    trace = simulate_pulse_train(5e3, 1e-8, PulseTrainSpec(0.2, 1e-4, 1000.0, 10))
    assert spike_count(trace, 0.5) == 10
    rep = spike_report(trace, 0.5, transient_fraction=0.2)
    assert rep.count == 8
    assert rep.counted[:2] == (False, False)
    assert rep.to_dict()["count"] == 8


@pytest.mark.parametrize("threshold", [0.0, 1.0, 1.5, -0.1])
def test_threshold_range(threshold):
    trace = simulate_pulse_train(5e3, 1e-8, PulseTrainSpec(0.2, 1e-4, 1000.0, 3))
    with pytest.raises(ValueError):
        spike_report(trace, threshold)


def test_spec_validation():
    with pytest.raises(ValueError):
        PulseTrainSpec(0.2, 1e-3, 1000.0, 5)  # width == period
    with pytest.raises(ValueError):
        PulseTrainSpec(0.2, 1e-4, 1000.0, 0)
    with pytest.raises(ValueError):
        simulate_pulse_train(0.0, 1e-8, PulseTrainSpec(0.2, 1e-4, 1000.0, 3))


def test_depth_needs_three_pulses():
    trace = simulate_pulse_train(5e3, 1e-8, PulseTrainSpec(0.2, 1e-4, 1000.0, 2))
    with pytest.raises(ValueError):
        modulation_depth(trace)


def test_trace_validation():
    with pytest.raises(ValueError):
        TransientTrace(np.array([0.0, 1.0]), np.array([0.0, 1.2]), ())
    with pytest.raises(ValueError):
        TransientTrace(np.array([0.0, 0.0]), np.array([0.0, 0.5]), ())


def test_trace_csv_round_trip(tmp_path):
    trace = simulate_pulse_train(5e3, 1e-8, PulseTrainSpec(0.2, 1e-4, 1000.0, 3))
    t, v = read_trace(write_trace(tmp_path / "t.csv", trace))
    assert np.allclose(t, trace.times, rtol=1e-8, atol=1e-20)
    assert np.allclose(v, trace.response, rtol=1e-8, atol=1e-20)
    (tmp_path / "t.csv").write_text("time,value\n0,0\n")
    with pytest.raises(DataFormatError):
        read_trace(tmp_path / "t.csv")
