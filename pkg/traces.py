#!/usr/bin/env python3
"""
ABR/RTT traces that drive the simulated access networks.

Traces are CSV files with header t_s,abr_kbps,rtt_ms sampled every couple of
seconds. Synthetic traces come from an AR(1)-smoothed Gaussian process; the
named profiles below mimic a wired link and two WLAN generations.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

TRACE_HEADER = ['t_s', 'abr_kbps', 'rtt_ms']
AR_COEFFICIENT = 0.9
MIN_SYNTH_FRACTION = 0.05

NETWORK_PROFILES: Dict[str, Dict[str, float]] = {
    'ethernet': {'mean_abr': 30e6, 'abr_std': 3e6, 'mean_rtt': 0.020, 'rtt_std': 0.002},
    'wlan_g': {'mean_abr': 18e6, 'abr_std': 2e6, 'mean_rtt': 0.040, 'rtt_std': 0.005},
    'wlan_b': {'mean_abr': 5e6, 'abr_std': 0.5e6, 'mean_rtt': 0.060, 'rtt_std': 0.008},
}


class TraceParseError(ValueError):
    """A trace file line could not be parsed."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class TraceValidationError(ValueError):
    """Trace samples violate ordering or positivity."""


def _canonical(t: float, abr: float, rtt: float) -> Tuple[float, float, float]:
    return round(float(t), 6), float(round(abr)), round(float(rtt), 9)


@dataclass(frozen=True)
class TraceSeries:
    """Immutable (t, abr bit/s, rtt s) samples with zero-order hold between them."""
    samples: Tuple[Tuple[float, float, float], ...]
    sample_period: float = 2.0
    _times: np.ndarray = field(init=False, repr=False, compare=False)
    _abr: np.ndarray = field(init=False, repr=False, compare=False)
    _rtt: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        samples = tuple(_canonical(*s) for s in self.samples)
        if not samples:
            raise TraceValidationError("Trace has no samples")
        if self.sample_period <= 0:
            raise TraceValidationError(f"Sample period must be > 0, got {self.sample_period}")
        for i, (t, abr, rtt) in enumerate(samples):
            if abr <= 0:
                raise TraceValidationError(f"Sample {i} at t={t}: abr must be > 0, got {abr}")
            if rtt <= 0:
                raise TraceValidationError(f"Sample {i} at t={t}: rtt must be > 0, got {rtt}")
            if i and t <= samples[i - 1][0]:
                raise TraceValidationError(
                    f"Sample {i}: timestamp {t} not after previous {samples[i - 1][0]}"
                )
        object.__setattr__(self, 'samples', samples)
        object.__setattr__(self, '_times', np.array([s[0] for s in samples]))
        object.__setattr__(self, '_abr', np.array([s[1] for s in samples]))
        object.__setattr__(self, '_rtt', np.array([s[2] for s in samples]))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def start(self) -> float:
        return self.samples[0][0]

    @property
    def end(self) -> float:
        """Time up to which the last sample is held."""
        return self.samples[-1][0] + self.sample_period

    def _index(self, t) -> np.ndarray:
        idx = np.searchsorted(self._times, t, side='right') - 1
        return np.clip(idx, 0, len(self.samples) - 1)

    def capacity_at(self, t):
        """Capacity in bit/s at time(s) t; works on scalars and arrays."""
        return self._abr[self._index(t)]

    def rtt_at(self, t):
        return self._rtt[self._index(t)]

    def mean_capacity(self, start: float, end: float) -> float:
        """Time-average of the held capacity over [start, end)."""
        if end <= start:
            return float(self.capacity_at(start))
        edges = self._times[(self._times > start) & (self._times < end)]
        bounds = np.concatenate(([start], edges, [end]))
        values = self.capacity_at(bounds[:-1])
        return float(np.sum(values * np.diff(bounds)) / (end - start))

    @property
    def mean_abr(self) -> float:
        return float(self._abr.mean())

    @property
    def mean_rtt(self) -> float:
        return float(self._rtt.mean())


def load_trace(path: Path, sample_period: Optional[float] = None) -> TraceSeries:
    """Parse and validate a trace CSV; kbit/s and ms become bit/s and s."""
    path = Path(path)
    samples = []
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise TraceParseError(1, "empty file")
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceParseError(1, f"expected header {','.join(TRACE_HEADER)}, got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise TraceParseError(line_no, f"expected 3 fields, got {len(row)}")
            try:
                t, abr_kbps, rtt_ms = (float(cell) for cell in row)
            except ValueError as e:
                raise TraceParseError(line_no, f"non-numeric field in {row}") from e
            samples.append((t, abr_kbps * 1e3, rtt_ms / 1e3))
    if not samples:
        raise TraceValidationError(f"{path}: trace has no samples")
    if sample_period is None:
        sample_period = round(samples[1][0] - samples[0][0], 6) if len(samples) > 1 else 2.0
        if sample_period <= 0:
            raise TraceValidationError(f"{path}: timestamps must be strictly increasing")
    try:
        trace = TraceSeries(samples=tuple(samples), sample_period=sample_period)
    except TraceValidationError as e:
        raise TraceValidationError(f"{path}: {e}") from e
    logger.debug(f"Loaded trace {path.name}: {len(trace)} samples, mean ABR {trace.mean_abr / 1e6:.2f} Mbit/s")
    return trace


def _format(value: float) -> str:
    return repr(float(value))


def save_trace(trace: TraceSeries, path: Path) -> Path:
    """Write a trace in the CSV format read by load_trace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(TRACE_HEADER)
        for t, abr, rtt in trace.samples:
            writer.writerow([_format(t), _format(abr / 1e3), _format(rtt * 1e3)])
    return path


def synth_trace(mean_abr: float, abr_std: float, mean_rtt: float, rtt_std: float,
                duration: float, period: float = 2.0, seed: int = 0,
                ar_coefficient: float = AR_COEFFICIENT) -> TraceSeries:
    """
    Stationary AR(1) Gaussian trace with the requested mean and marginal std.

    Samples are clamped to a small positive fraction of the mean.
    """
    if mean_abr <= 0 or mean_rtt <= 0:
        raise ValueError("Trace means must be > 0")
    if abr_std < 0 or rtt_std < 0:
        raise ValueError("Trace standard deviations must be >= 0")
    if duration <= 0 or period <= 0:
        raise ValueError("Duration and period must be > 0")
    if not 0 <= ar_coefficient < 1:
        raise ValueError(f"AR coefficient must be in [0, 1), got {ar_coefficient}")

    count = max(1, int(np.ceil(duration / period)))
    rng = np.random.default_rng(seed)
    innovation_scale = np.sqrt(1.0 - ar_coefficient ** 2)

    def series(mean: float, std: float) -> np.ndarray:
        noise = rng.standard_normal(count)
        values = np.empty(count)
        state = noise[0]
        values[0] = state
        for i in range(1, count):
            state = ar_coefficient * state + innovation_scale * noise[i]
            values[i] = state
        return np.maximum(mean + std * values, MIN_SYNTH_FRACTION * mean)

    abr = series(mean_abr, abr_std)
    rtt = series(mean_rtt, rtt_std)
    times = np.arange(count) * period
    return TraceSeries(samples=tuple(zip(times, abr, rtt)), sample_period=period)


def synth_profile_trace(name: str, duration: float, seed: int = 0, period: float = 2.0) -> TraceSeries:
    """Synthetic trace for one of the NETWORK_PROFILES."""
    if name not in NETWORK_PROFILES:
        raise ValueError(f"Unknown network profile '{name}', expected one of {sorted(NETWORK_PROFILES)}")
    return synth_trace(duration=duration, period=period, seed=seed, **NETWORK_PROFILES[name])
