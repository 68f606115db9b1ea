"""Gate pulse-train response of the lumped RC channel and spike counting.

The normalized response is the charging fraction of the channel capacitance
through the series resistance: it relaxes toward 1 while a pulse is applied
and toward 0 between pulses, with time constant ``tau = rs * cp``. Gm scales
drain-current modulation linearly, so it cancels after normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import read_csv, write_csv

TRACE_HEADER = ("time_s", "response")


@dataclass(frozen=True)
class PulseTrainSpec:
    amplitude: float  # V
    width: float  # s
    frequency: float  # Hz
    n_pulses: int

    def __post_init__(self) -> None:
        if not self.amplitude > 0:
            raise ValueError("pulse amplitude must be positive")
        if not (self.width > 0 and self.frequency > 0):
            raise ValueError("pulse width and frequency must be positive")
        if not self.width < 1.0 / self.frequency:
            raise ValueError(
                f"pulse width {self.width!r} s does not fit the period {1.0 / self.frequency!r} s"
            )
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 1:
            raise ValueError("n_pulses must be a positive integer")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency


@dataclass(frozen=True)
class TransientTrace:
    times: np.ndarray
    response: np.ndarray
    pulse_boundaries: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.response, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and response must be 1-D arrays of equal length")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("sample times must be strictly increasing")
        if v.size and (v.min() < 0 or v.max() > 1 + 1e-9):
            raise ValueError("normalized response must lie in [0, 1]")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "response", v)
        object.__setattr__(self, "pulse_boundaries", tuple(tuple(b) for b in self.pulse_boundaries))


def simulate_pulse_train(
    rs: float, cp: float, spec: PulseTrainSpec, samples_per_segment: int = 50
) -> TransientTrace:
    """Piecewise closed-form first-order response to a rectangular pulse train.

    Pulse k occupies ``[k/f, k/f + width]``; the trace ends one period after
    the last pulse starts. Every pulse and every gap is sampled at
    ``samples_per_segment`` evenly spaced points starting at the segment
    edge, plus a final sample at the end of the trace.
    """
    if not (rs > 0 and cp > 0):
        raise ValueError("rs and cp must be positive")
    if samples_per_segment < 1:
        raise ValueError("samples_per_segment must be >= 1")
    tau = rs * cp
    period = spec.period
    frac = np.arange(samples_per_segment) / samples_per_segment

    times, values, bounds = [], [], []
    v = 0.0
    for k in range(spec.n_pulses):
        start = k * period
        end = start + spec.width
        stop = (k + 1) * period
        bounds.append((start, end))
        for t0, t1, target in ((start, end, 1.0), (end, stop, 0.0)):
            dt = frac * (t1 - t0)
            times.append(t0 + dt)
            values.append(target + (v - target) * np.exp(-dt / tau))
            v = target + (v - target) * math.exp(-(t1 - t0) / tau)
    times.append(np.array([spec.n_pulses * period]))
    values.append(np.array([v]))
    return TransientTrace(np.concatenate(times), np.concatenate(values), tuple(bounds))


def _steady_window(trace: TransientTrace, fraction: float = 0.2) -> np.ndarray:
    n = len(trace.pulse_boundaries)
    if n < 3:
        raise ValueError(f"trace holds {n} pulses; steady state needs >= 3")
    k = max(1, math.ceil(fraction * n))
    t_start = trace.pulse_boundaries[n - k][0]
    return trace.response[trace.times >= t_start]


def modulation_depth(trace: TransientTrace) -> float:
    """(max - min) / max of the response over the final 20% of pulses."""
    window = _steady_window(trace)
    top = float(window.max())
    if top <= 0:
        return 0.0
    return (top - float(window.min())) / top


@dataclass(frozen=True)
class SpikeReport:
    threshold: float
    modulations: tuple[float, ...]  # per-pulse (peak - floor) / trace max
    crossings: tuple[bool, ...]
    counted: tuple[bool, ...]  # False for pulses skipped as initial transient

    @property
    def count(self) -> int:
        return sum(c and k for c, k in zip(self.crossings, self.counted))

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "count": self.count,
            "n_pulses": len(self.crossings),
            "pulses": [
                {"index": i, "modulation": m, "crossed": c, "counted": k}
                for i, (m, c, k) in enumerate(zip(self.modulations, self.crossings, self.counted))
            ],
        }


def spike_report(
    trace: TransientTrace, threshold: float = 0.5, transient_fraction: float = 0.0
) -> SpikeReport:
    """Per-pulse threshold crossings.

    A pulse crosses when its rise from the pre-pulse floor, relative to the
    trace maximum, reaches ``threshold``. The first ``transient_fraction`` of
    pulses can be left out of the count.
    """
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold!r}")
    if not 0 <= transient_fraction < 1:
        raise ValueError("transient_fraction must lie in [0, 1)")
    top = float(trace.response.max()) if trace.response.size else 0.0
    n = len(trace.pulse_boundaries)
    skip = math.ceil(transient_fraction * n)
    mods, crossed = [], []
    for start, end in trace.pulse_boundaries:
        inside = (trace.times >= start) & (trace.times <= end)
        seg = trace.response[inside]
        if seg.size == 0 or top <= 0:
            m = 0.0
        else:
            m = (float(seg.max()) - float(seg[0])) / top
        mods.append(m)
        crossed.append(m >= threshold)
    counted = tuple(i >= skip for i in range(n))
    return SpikeReport(threshold, tuple(mods), tuple(crossed), counted)


def spike_count(trace: TransientTrace, threshold: float = 0.5, transient_fraction: float = 0.0) -> int:
    return spike_report(trace, threshold, transient_fraction).count


def write_trace(path: Path, trace: TransientTrace) -> Path:
    return write_csv(Path(path), TRACE_HEADER, zip(trace.times, trace.response))


def read_trace(path: Path) -> tuple[np.ndarray, np.ndarray]:
    _, rows = read_csv(Path(path), TRACE_HEADER)
    data = np.array(rows)
    return data[:, 0], data[:, 1]
