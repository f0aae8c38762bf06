#!/usr/bin/env python3
"""
Trace-driven discrete-event simulator for multi-network video streaming.

Each access network is a FIFO link whose capacity and propagation delay
follow a trace and which also carries on/off or Poisson background traffic. Video
streams emit one GOP of packets every GOP period, spread evenly over the
period and split over the networks by the current allocation. Every epoch
each stream's measurement agent reports ABR and RTT per network and the
stream's policy recomputes its allocation.

The clock and the processes run on simpy. Links are served one GOP window
at a time; a window's departures follow the Lindley recursion carried over
from the previous window, so the result equals per-packet FIFO service.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import simpy

from distortion import StreamProfile, decoder_distortion
from metrics import RunSummary, summarize
from net_model import Observation, RatePolicy, StreamFeedback
from traces import TraceSeries

logger = logging.getLogger(__name__)

TIME_EPSILON = 1e-9
BACKGROUND = -1
ON_OFF = "onoff"
POISSON = "poisson"
BACKGROUND_MODELS = (ON_OFF, POISSON)


class ConfigError(ValueError):
    """Simulation inputs are inconsistent."""


@dataclass
class SimConfig:
    duration: float = 600.0
    epoch: float = 2.0
    packet_size: int = 1500
    gop_duration: float = 0.5
    seed: int = 0
    random_loss_rate: float = 0.0
    measurement_noise: float = 0.0
    measurement_window: Optional[float] = None
    record_packets: bool = False

    def __post_init__(self):
        if self.epoch <= 0:
            raise ConfigError(f"epoch must be > 0, got {self.epoch}")
        if self.duration < self.epoch:
            raise ConfigError(f"duration {self.duration} must be >= epoch {self.epoch}")
        if self.packet_size <= 0:
            raise ConfigError(f"packet_size must be > 0, got {self.packet_size}")
        if self.gop_duration <= 0:
            raise ConfigError(f"gop_duration must be > 0, got {self.gop_duration}")
        if not _is_multiple(self.epoch, self.gop_duration):
            raise ConfigError(f"epoch {self.epoch} must be a multiple of gop_duration {self.gop_duration}")
        if not 0 <= self.random_loss_rate < 1:
            raise ConfigError(f"random_loss_rate must be in [0, 1), got {self.random_loss_rate}")
        if self.measurement_noise < 0:
            raise ConfigError(f"measurement_noise must be >= 0, got {self.measurement_noise}")
        if self.measurement_window is None:
            self.measurement_window = self.epoch
        if not 0 < self.measurement_window <= self.epoch:
            raise ConfigError(f"measurement_window must be in (0, epoch], got {self.measurement_window}")
        if not _is_multiple(self.measurement_window, self.gop_duration):
            raise ConfigError("measurement_window must be a multiple of gop_duration")

    @property
    def gops_per_epoch(self) -> int:
        return int(round(self.epoch / self.gop_duration))

    @property
    def total_gops(self) -> int:
        return int(math.floor(self.duration / self.gop_duration + TIME_EPSILON))

    @property
    def num_epochs(self) -> int:
        return int(math.floor(self.duration / self.epoch + TIME_EPSILON))


def _is_multiple(value: float, step: float) -> bool:
    ratio = value / step
    return abs(ratio - round(ratio)) < 1e-6 and round(ratio) >= 1


@dataclass
class NetworkSpec:
    id: int
    trace: TraceSeries
    background_load: float = 0.0
    name: str = ""
    background_model: str = ON_OFF

    def __post_init__(self):
        if not 0 <= self.background_load < 1:
            raise ConfigError(f"Network {self.name or self.id}: background load must be in [0, 1)")
        if self.background_model not in BACKGROUND_MODELS:
            raise ConfigError(f"Network {self.name or self.id}: background model must be one of "
                              f"{list(BACKGROUND_MODELS)}, got '{self.background_model}'")
        self.name = self.name or str(self.id)


@dataclass
class StreamSpec:
    id: int
    profile: StreamProfile
    policy: RatePolicy
    start: float = 0.0
    stop: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.start < 0:
            raise ConfigError(f"Stream {self.name or self.id}: start must be >= 0")
        if self.stop is not None and self.stop <= self.start:
            raise ConfigError(f"Stream {self.name or self.id}: stop must be after start")
        self.name = self.name or str(self.id)


@dataclass(frozen=True)
class PacketRecord:
    stream: int
    network: int
    seq: int
    send_time: float
    size: int
    arrival: Optional[float]
    dropped: bool
    deadline: float

    @property
    def late(self) -> bool:
        return self.arrival is not None and self.arrival - self.send_time > self.deadline


@dataclass
class EpochReport:
    """Per-epoch allocations and delivery statistics (rates in bit/s, times in s)."""
    index: int
    start: float
    end: float
    stream_ids: Tuple[str, ...]
    network_ids: Tuple[str, ...]
    rates: np.ndarray
    capacity: np.ndarray
    abr: np.ndarray
    video_bits: np.ndarray
    background_bits: np.ndarray
    active: np.ndarray
    sent: np.ndarray
    late: np.ndarray
    dropped: np.ndarray
    delivered: np.ndarray
    delay_sum: np.ndarray
    gop_psnr: List[List[float]] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.end - self.start

    @property
    def utilization(self) -> np.ndarray:
        """r_n over the ABR left by background traffic."""
        return self.rates.sum(axis=0) / self.abr

    @property
    def link_utilization(self) -> np.ndarray:
        return (self.video_bits + self.background_bits) / (self.capacity * self.duration)

    @property
    def mean_delay(self) -> np.ndarray:
        received = self.sent - self.dropped
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(received > 0, self.delay_sum / np.maximum(received, 1), np.nan)

    @property
    def loss_ratio(self) -> np.ndarray:
        return np.where(self.sent > 0, self.late / np.maximum(self.sent, 1), 0.0)

    @property
    def drop_ratio(self) -> np.ndarray:
        return np.where(self.sent > 0, self.dropped / np.maximum(self.sent, 1), 0.0)

    @property
    def psnr(self) -> np.ndarray:
        return np.array([np.mean(values) if values else np.nan for values in self.gop_psnr])


class FixedRatePolicy(RatePolicy):
    """Constant allocation, for physics checks of the simulator itself."""

    name = "fixed"

    def __init__(self, rates: Sequence[float]):
        self.rates = np.asarray(rates, dtype=float)
        if np.any(self.rates < 0):
            raise ValueError("Fixed rates must be >= 0")

    def allocate(self, observations: Sequence[Observation], feedback: Optional[StreamFeedback] = None,
                 now: float = 0.0) -> np.ndarray:
        return self.rates.copy()


def sample_background(load: float, trace: TraceSeries, seed=0, duration: Optional[float] = None,
                      packet_size: int = 1500, mean_period: float = 0.1,
                      peak_factor: float = 2.0, model: str = ON_OFF) -> np.ndarray:
    """
    Send times of a background source averaging load * capacity.

    The on/off model alternates exponential on and off periods with mean
    mean_period; during an on period packets leave back to back at
    peak_factor * load * capacity. The Poisson model draws independent
    exponential gaps at load * capacity.
    """
    if not 0 <= load < 1:
        raise ValueError(f"Background load must be in [0, 1), got {load}")
    if model not in BACKGROUND_MODELS:
        raise ValueError(f"Unknown background model '{model}', expected one of {list(BACKGROUND_MODELS)}")
    horizon = trace.end if duration is None else duration
    if load == 0 or horizon <= 0:
        return np.empty(0)
    rng = np.random.default_rng(seed)
    bits = packet_size * 8
    if model == POISSON:
        return _poisson_background(load, trace, rng, horizon, bits)
    on_fraction = 1.0 / peak_factor
    times: List[np.ndarray] = []
    t = 0.0
    on = rng.random() < on_fraction
    while t < horizon:
        period = rng.exponential(mean_period)
        if on:
            rate = peak_factor * load * float(trace.capacity_at(t))
            spacing = bits / rate
            count = int(period / spacing)
            if count:
                sends = t + spacing * np.arange(count)
                times.append(sends[sends < horizon])
        t += period
        on = not on
    return np.concatenate(times) if times else np.empty(0)


def _poisson_background(load: float, trace: TraceSeries, rng: np.random.Generator, horizon: float,
                        bits: int) -> np.ndarray:
    times: List[np.ndarray] = []
    for k, (start, capacity, _) in enumerate(trace.samples):
        if start >= horizon:
            break
        end = trace.samples[k + 1][0] if k + 1 < len(trace.samples) else trace.end
        end = min(end, horizon)
        count = rng.poisson(load * capacity * (end - start) / bits)
        times.append(np.sort(rng.uniform(start, end, count)))
    return np.concatenate(times) if times else np.empty(0)


@dataclass
class WindowLog:
    """Statistics of one served GOP window on one network, indexed by stream."""
    video_bits: np.ndarray
    sent: np.ndarray
    late: np.ndarray
    dropped: np.ndarray
    delivered: np.ndarray
    delay_sum: np.ndarray
    background_bits: float
    queue_delay_sum: float
    queue_count: int
    backlog: float


class NetworkSim:
    """FIFO link of one access network."""

    def __init__(self, index: int, spec: NetworkSpec, config: SimConfig, background: np.ndarray,
                 loss_rng: np.random.Generator):
        self.index = index
        self.spec = spec
        self.trace = spec.trace
        self.config = config
        self.background = background
        self.loss_rng = loss_rng
        self.last_departure = 0.0
        self.last_arrival = 0.0
        self.pending: Dict[int, List[Tuple[int, np.ndarray, np.ndarray]]] = {}
        self.logs: Dict[int, WindowLog] = {}
        # bits leaving the link per GOP window of departure, by owner (last slot: background)
        self.departed: Dict[int, np.ndarray] = {}
        self.packets: List[PacketRecord] = []

    def enqueue(self, window: int, stream: int, times: np.ndarray, seqs: np.ndarray):
        if len(times):
            self.pending.setdefault(window, []).append((stream, times, seqs))

    def serve(self, window: int, start: float, end: float, deadlines: np.ndarray,
              run_end: float) -> WindowLog:
        """Push every packet offered during [start, end) through the queue."""
        streams = len(deadlines)
        bits = self.config.packet_size * 8
        lo, hi = np.searchsorted(self.background, [start, end], side='left')
        bg_times = self.background[lo:hi]
        chunks = self.pending.pop(window, [])

        times = np.concatenate([c[1] for c in chunks] + [bg_times])
        owner = np.concatenate([np.full(len(c[1]), c[0]) for c in chunks]
                               + [np.full(len(bg_times), streams)]).astype(int)
        seqs = np.concatenate([c[2] for c in chunks] + [np.arange(lo, hi)]).astype(int)
        order = np.lexsort((seqs, owner, times))
        times, owner, seqs = times[order], owner[order], seqs[order]

        if self.config.random_loss_rate > 0 and len(times):
            dropped = self.loss_rng.random(len(times)) < self.config.random_loss_rate
        else:
            dropped = np.zeros(len(times), dtype=bool)
        kept = ~dropped
        sent_at = times[kept]

        service = bits / self.trace.capacity_at(sent_at)
        served = np.cumsum(service)
        departures = served + np.maximum(
            self.last_departure,
            np.maximum.accumulate(sent_at - (served - service)) if len(sent_at) else 0.0,
        )
        arrivals = np.maximum.accumulate(
            np.maximum(departures + self.trace.rtt_at(sent_at) / 2.0, self.last_arrival)
        ) if len(sent_at) else departures
        if len(sent_at):
            self.last_departure = float(departures[-1])
            self.last_arrival = float(arrivals[-1])

        kept_owner = owner[kept]
        delays = arrivals - sent_at
        limits = np.append(deadlines, np.inf)[kept_owner]
        is_late = delays > limits
        is_delivered = arrivals <= run_end + TIME_EPSILON
        slots = streams + 1
        self._count_departures(departures, kept_owner, slots, bits)

        log = WindowLog(
            video_bits=np.bincount(owner, minlength=slots)[:streams] * float(bits),
            sent=np.bincount(owner, minlength=slots)[:streams],
            late=np.bincount(kept_owner[is_late], minlength=slots)[:streams],
            dropped=np.bincount(owner[dropped], minlength=slots)[:streams],
            delivered=np.bincount(kept_owner[is_delivered], minlength=slots)[:streams],
            delay_sum=np.bincount(kept_owner, weights=delays, minlength=slots)[:streams],
            background_bits=float(len(bg_times) * bits),
            queue_delay_sum=float(np.sum(departures - sent_at)),
            queue_count=int(len(sent_at)),
            backlog=max(0.0, self.last_departure - end),
        )
        self.logs[window] = log

        if self.config.record_packets:
            self._record(times, owner, seqs, dropped, kept, arrivals, deadlines, streams)
        return log

    def _count_departures(self, departures: np.ndarray, owners: np.ndarray, slots: int, bits: int):
        if not len(departures):
            return
        windows = np.floor(departures / self.config.gop_duration + TIME_EPSILON).astype(int)
        for window in np.unique(windows):
            mask = windows == window
            acc = self.departed.setdefault(int(window), np.zeros(slots))
            acc += np.bincount(owners[mask], minlength=slots) * float(bits)

    def departed_bits(self, window: int, slots: int) -> np.ndarray:
        """Bits that left the link during a GOP window, by owner."""
        return self.departed.get(window, np.zeros(slots))

    def _record(self, times, owner, seqs, dropped, kept, arrivals, deadlines, streams):
        arrival_of = np.full(len(times), np.nan)
        arrival_of[kept] = arrivals
        for t, s, q, d, a in zip(times, owner, seqs, dropped, arrival_of):
            if s == streams:
                continue
            self.packets.append(PacketRecord(
                stream=int(s), network=self.index, seq=int(q), send_time=float(t),
                size=self.config.packet_size, arrival=None if d else float(a),
                dropped=bool(d), deadline=float(deadlines[s]),
            ))

    def prune(self, before: int):
        for window in [w for w in self.logs if w < before]:
            del self.logs[window]
        for window in [w for w in self.departed if w < before]:
            del self.departed[window]


class StreamSim:
    """Sender side of one stream: allocation, GOP packetization and feedback."""

    def __init__(self, index: int, spec: StreamSpec, networks: int, noise_rng: np.random.Generator):
        self.index = index
        self.spec = spec
        self.noise_rng = noise_rng
        self.row = np.zeros(networks)
        self.carry = np.zeros(networks)
        self.seq = 0

    def apply_floor(self, row: np.ndarray, abrs: np.ndarray) -> np.ndarray:
        """The encoder never runs below the stream's minimum rate."""
        row = np.maximum(np.asarray(row, dtype=float), 0.0)
        floor = self.spec.profile.min_rate
        total = row.sum()
        if total >= floor:
            return row
        if total > 0:
            return row * (floor / total)
        weight = abrs.sum()
        if weight > 0:
            return floor * abrs / weight
        return np.full(len(row), floor / len(row))


class Simulator:
    """One deterministic run of a set of streams over a set of networks."""

    def __init__(self, config: SimConfig, networks: Sequence[NetworkSpec], streams: Sequence[StreamSpec],
                 policy_name: str = ""):
        if not networks:
            raise ConfigError("At least one network is required")
        for spec in networks:
            if spec.trace.start > TIME_EPSILON:
                raise ConfigError(f"Network {spec.name}: trace starts at {spec.trace.start}s, not 0")
            if spec.trace.end + TIME_EPSILON < config.duration:
                raise ConfigError(
                    f"Network {spec.name}: trace covers {spec.trace.end:.1f}s, run needs {config.duration:.1f}s"
                )
        self.config = config
        self.policy_name = policy_name
        self.env = simpy.Environment()
        seeds = np.random.SeedSequence(config.seed).spawn(2 * len(networks) + len(streams))
        horizon = config.total_gops * config.gop_duration
        self.networks = [
            NetworkSim(
                n, spec, config,
                sample_background(spec.background_load, spec.trace, seeds[2 * n], horizon, config.packet_size,
                                  model=spec.background_model),
                np.random.default_rng(seeds[2 * n + 1]),
            )
            for n, spec in enumerate(networks)
        ]
        self.streams = [
            StreamSim(s, spec, len(networks), np.random.default_rng(seeds[2 * len(networks) + s]))
            for s, spec in enumerate(streams)
        ]
        self.deadlines = np.array([spec.profile.deadline for spec in streams], dtype=float)
        self.run_end = config.duration
        self.served_until = 0.0
        self._served = self.env.event()
        self.allocation_log: Dict[int, np.ndarray] = {}
        self.reports: List[EpochReport] = []

    @property
    def packets(self) -> List[PacketRecord]:
        records = [p for net in self.networks for p in net.packets]
        return sorted(records, key=lambda p: (p.send_time, p.network, p.stream, p.seq))

    def _time(self, gop: int) -> float:
        return gop * self.config.gop_duration

    def _wait_served(self, t: float):
        while self.served_until < t - TIME_EPSILON:
            yield self._served

    def _link(self):
        for window in range(self.config.total_gops):
            yield self.env.timeout(self._time(window + 1) - self.env.now)
            for net in self.networks:
                net.serve(window, self._time(window), self._time(window + 1), self.deadlines, self.run_end)
            self.served_until = self._time(window + 1)
            event, self._served = self._served, self.env.event()
            event.succeed()

    def _window_range(self, t: float) -> range:
        g = self.config.gop_duration
        first = int(round(max(0.0, t - self.config.measurement_window) / g))
        return range(first, int(round(t / g)))

    def measure(self, stream: StreamSim, n: int, t: float, epoch_index: int) -> Tuple[Observation, float, bool]:
        """
        Measurement agent of one stream on one network at time t.

        Returns the observation together with the stream's own sending rate
        and loss flag over the same window. The ABR is the capacity minus the
        throughput of all other traffic, so it never counts bits still queued.
        Only dropped packets raise the loss flag; late packets still arrive
        and are acknowledged like any other.
        """
        net = self.networks[n]
        windows = [w for w in self._window_range(t) if w in net.logs]
        prop = float(net.trace.rtt_at(t)) / 2.0
        s = stream.index
        if windows:
            w_start = self._time(windows[0])
            span = t - w_start
            capacity = net.trace.mean_capacity(w_start, t)
            logs = [net.logs[w] for w in windows]
            slots = len(self.streams) + 1
            departed = sum(net.departed_bits(w, slots) for w in windows)
            other_bits = float(departed.sum() - departed[s])
            abr = capacity - other_bits / span
            queued = sum(log.queue_count for log in logs)
            queueing = (sum(log.queue_delay_sum for log in logs) / queued) if queued else logs[-1].backlog
            own_rate = sum(log.video_bits[s] for log in logs) / span
            loss_seen = any(log.dropped[s] > 0 for log in logs)
        else:
            capacity = float(net.trace.capacity_at(t))
            abr = capacity * (1.0 - net.spec.background_load)
            queueing = 0.0
            own_rate = float(stream.row[n])
            loss_seen = False
        rtt = 2.0 * (prop + queueing)
        if self.config.measurement_noise > 0:
            sigma = self.config.measurement_noise
            abr *= max(0.0, 1.0 + sigma * stream.noise_rng.standard_normal())
            rtt *= max(0.1, 1.0 + sigma * stream.noise_rng.standard_normal())
        obs = Observation(network=n, per_stream_abr=max(0.0, abr), rtt=rtt, epoch_index=epoch_index)
        return obs, own_rate, loss_seen

    def _reallocate(self, stream: StreamSim, gop: int):
        t = self._time(gop)
        epoch_index = gop // self.config.gops_per_epoch
        measured = [self.measure(stream, n, t, epoch_index) for n in range(len(self.networks))]
        observations = [m[0] for m in measured]
        feedback = StreamFeedback(
            own_rates=tuple(m[1] for m in measured),
            loss_seen=tuple(m[2] for m in measured),
            gop_index=gop,
        )
        row = stream.spec.policy.allocate(observations, feedback, t)
        abrs = np.array([obs.per_stream_abr for obs in observations])
        stream.row = stream.apply_floor(row, abrs)
        logger.debug(f"t={t:.1f}s stream {stream.spec.name}: "
                     f"{np.round(stream.row / 1e3).tolist()} kbit/s")

    def _emit_gop(self, stream: StreamSim, gop: int):
        g = self.config.gop_duration
        t = self._time(gop)
        bits = self.config.packet_size * 8
        for n, net in enumerate(self.networks):
            budget = stream.row[n] * g + stream.carry[n]
            count = int(budget // bits)
            stream.carry[n] = budget - count * bits
            if count == 0:
                continue
            times = t + np.arange(count) * (g / count)
            seqs = stream.seq + np.arange(count)
            stream.seq += count
            net.enqueue(gop, stream.index, times, seqs)
        alloc = self.allocation_log.setdefault(gop, np.zeros((len(self.streams), len(self.networks))))
        alloc[stream.index] = stream.row

    def _stream(self, stream: StreamSim):
        g = self.config.gop_duration
        first = int(math.ceil(stream.spec.start / g - TIME_EPSILON))
        last = self.config.total_gops
        if stream.spec.stop is not None:
            last = min(last, int(math.floor(stream.spec.stop / g + TIME_EPSILON)))
        if first >= last:
            return
        yield self.env.timeout(self._time(first) - self.env.now)
        logger.info(f"Stream {stream.spec.name} joins at t={self._time(first):.1f}s")
        for gop in range(first, last):
            if gop == first or gop % self.config.gops_per_epoch == 0:
                yield from self._wait_served(self._time(gop))
                self._reallocate(stream, gop)
            self._emit_gop(stream, gop)
            yield self.env.timeout(self._time(gop + 1) - self.env.now)
        stream.row = np.zeros(len(self.networks))
        if stream.spec.stop is not None:
            logger.info(f"Stream {stream.spec.name} leaves at t={self._time(last):.1f}s")

    def _reporter(self):
        gpe = self.config.gops_per_epoch
        keep = int(round(self.config.measurement_window / self.config.gop_duration)) + gpe
        for k in range(self.config.num_epochs):
            end = (k + 1) * gpe
            yield self.env.timeout(self._time(end) - self.env.now)
            yield from self._wait_served(self._time(end))
            self.reports.append(self._build_report(k))
            if not self.config.record_packets:
                for net in self.networks:
                    net.prune(end - keep)
                for gop in [w for w in self.allocation_log if w < end - keep]:
                    del self.allocation_log[gop]

    def _build_report(self, k: int) -> EpochReport:
        gpe = self.config.gops_per_epoch
        windows = range(k * gpe, (k + 1) * gpe)
        S, N = len(self.streams), len(self.networks)
        start, end = self._time(windows[0]), self._time(windows[-1] + 1)
        rates = np.zeros((S, N))
        zeros = np.zeros(S, dtype=int)
        sent, late, dropped, delivered = zeros.copy(), zeros.copy(), zeros.copy(), zeros.copy()
        delay_sum = np.zeros(S)
        video_bits = np.zeros(N)
        background_bits = np.zeros(N)
        gop_psnr: List[List[float]] = [[] for _ in range(S)]

        for w in windows:
            alloc = self.allocation_log.get(w, np.zeros((S, N)))
            rates += alloc
            w_sent, w_lost = np.zeros(S, dtype=int), np.zeros(S, dtype=int)
            for n, net in enumerate(self.networks):
                log = net.logs[w]
                video_bits[n] += log.video_bits.sum()
                background_bits[n] += log.background_bits
                w_sent += log.sent
                w_lost += log.late + log.dropped
                late += log.late
                dropped += log.dropped
                delivered += log.delivered
                delay_sum += log.delay_sum
            sent += w_sent
            for s, stream in enumerate(self.streams):
                total = alloc[s].sum()
                if total <= 0:
                    continue
                p_loss = w_lost[s] / w_sent[s] if w_sent[s] else 0.0
                profile = stream.spec.profile.at_gop(w)
                gop_psnr[s].append(decoder_distortion(profile, total, min(1.0, p_loss)).psnr)

        rates /= len(windows)
        capacity = np.array([net.trace.mean_capacity(start, end) for net in self.networks])
        loads = np.array([net.spec.background_load for net in self.networks])
        report = EpochReport(
            index=k, start=start, end=end,
            stream_ids=tuple(s.spec.name for s in self.streams),
            network_ids=tuple(n.spec.name for n in self.networks),
            rates=rates, capacity=capacity, abr=capacity * (1.0 - loads),
            video_bits=video_bits, background_bits=background_bits,
            active=rates.sum(axis=1) > 0,
            sent=sent, late=late, dropped=dropped, delivered=delivered, delay_sum=delay_sum,
            gop_psnr=gop_psnr,
        )
        logger.debug(f"Epoch {k}: utilization {np.round(report.utilization, 3).tolist()}")
        return report

    def run(self) -> RunSummary:
        self.env.process(self._link())
        for stream in self.streams:
            self.env.process(self._stream(stream))
        self.env.process(self._reporter())
        self.env.run(until=self.config.duration + self.config.gop_duration / 2.0)
        return summarize(self.reports, self.config, policy=self.policy_name)


def run(config: SimConfig, networks: Sequence[NetworkSpec], streams: Sequence[StreamSpec],
        policy_name: str = "") -> RunSummary:
    """Build and run one simulation."""
    return Simulator(config, networks, streams, policy_name).run()
