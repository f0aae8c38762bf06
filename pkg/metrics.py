#!/usr/bin/env python3
"""Aggregate per-epoch simulation reports into run summaries and cross-policy tables."""

from __future__ import annotations

import csv
import math
import os
import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from openpyxl import Workbook

logger = logging.getLogger(__name__)

CONVERGENCE_BAND = 0.05
CONVERGENCE_TAIL_S = 30.0

EPOCH_HEADER = ['epoch', 'stream', 'network', 'rate_kbps', 'util', 'mean_delay_ms', 'loss_ratio', 'psnr_db']
SUMMARY_HEADER = ['policy', 'scope', 'id', 'metric', 'value']
COMPARISON_HEADER = ['policy', 'scope', 'id', 'metric', 'value', 'delta']
CONFIG_FIELDS = ('duration', 'epoch', 'gop_duration', 'packet_size', 'seed',
                 'random_loss_rate', 'measurement_noise', 'measurement_window')


class EmptyRun(ValueError):
    """No epoch reports to summarize."""


class MismatchedConfigs(ValueError):
    """Summaries compared side by side come from different scenarios."""


def _optional(value: float) -> Optional[float]:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return float(value)


@dataclass
class RunSummary:
    policy: str
    stream_ids: Tuple[str, ...]
    network_ids: Tuple[str, ...]
    epochs: int
    utilization: np.ndarray
    link_utilization: np.ndarray
    stream_rate: np.ndarray
    mean_delay: List[Optional[float]]
    loss_ratio: np.ndarray
    drop_ratio: np.ndarray
    psnr: List[Optional[float]]
    fluctuation: np.ndarray
    convergence_time: List[Optional[float]]
    total_fluctuation: float
    run_loss_ratio: float
    packets_sent: int
    packets_delivered: int
    packets_dropped: int
    packets_in_flight: int
    epoch_times: np.ndarray = field(repr=False)
    rate_trace: np.ndarray = field(repr=False)
    config_key: Tuple[Any, ...] = field(default=(), repr=False)

    @property
    def mean_psnr(self) -> Optional[float]:
        values = [p for p in self.psnr if p is not None]
        return float(np.mean(values)) if values else None

    @property
    def psnr_spread(self) -> Optional[float]:
        values = [p for p in self.psnr if p is not None]
        return float(max(values) - min(values)) if values else None

    def rows(self) -> List[Tuple[str, str, str, Optional[float]]]:
        """(scope, id, metric, value) rows in a fixed order."""
        rows: List[Tuple[str, str, str, Optional[float]]] = []
        for n, net in enumerate(self.network_ids):
            rows.append(('network', net, 'utilization', float(self.utilization[n])))
            rows.append(('network', net, 'link_utilization', float(self.link_utilization[n])))
        for s, stream in enumerate(self.stream_ids):
            delay = self.mean_delay[s]
            rows.extend([
                ('stream', stream, 'rate_kbps', float(self.stream_rate[s]) / 1e3),
                ('stream', stream, 'mean_delay_ms', None if delay is None else delay * 1e3),
                ('stream', stream, 'loss_ratio', float(self.loss_ratio[s])),
                ('stream', stream, 'drop_ratio', float(self.drop_ratio[s])),
                ('stream', stream, 'psnr_db', self.psnr[s]),
                ('stream', stream, 'fluctuation_kbps', float(self.fluctuation[s]) / 1e3),
                ('stream', stream, 'convergence_s', self.convergence_time[s]),
            ])
        rows.extend([
            ('run', 'all', 'mean_psnr_db', self.mean_psnr),
            ('run', 'all', 'loss_ratio', self.run_loss_ratio),
            ('run', 'all', 'fluctuation_kbps', self.total_fluctuation / 1e3),
            ('run', 'all', 'packets_sent', float(self.packets_sent)),
            ('run', 'all', 'packets_delivered', float(self.packets_delivered)),
            ('run', 'all', 'packets_dropped', float(self.packets_dropped)),
            ('run', 'all', 'packets_in_flight', float(self.packets_in_flight)),
        ])
        return rows


@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    scope: str
    id: str
    metric: str
    value: Optional[float]
    delta: Optional[float]


def convergence_time(times: Sequence[float], rates: Sequence[float],
                     tail: float = CONVERGENCE_TAIL_S, band: float = CONVERGENCE_BAND) -> Optional[float]:
    """
    Time from the first sample until the rate stays within +-band of its
    mean over the final tail seconds; None if the last sample is outside.

    Args:
        times: epoch start times of the samples, ascending
        rates: allocated rate at each sample
    """
    times = np.asarray(times, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if len(rates) == 0:
        return None
    tail_mask = times >= times[-1] - tail + 1e-9
    target = rates[tail_mask].mean()
    inside = np.abs(rates - target) <= band * abs(target)
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    first_settled = 0 if len(outside) == 0 else outside[-1] + 1
    return float(times[first_settled] - times[0])


def summarize(reports: Sequence, config: Any, policy: str = "") -> RunSummary:
    """Fold epoch reports of one run into its summary."""
    if not reports:
        raise EmptyRun("Run produced no epoch reports")
    first = reports[0]
    S, N = len(first.stream_ids), len(first.network_ids)

    utilization = np.mean([r.utilization for r in reports], axis=0)
    link_utilization = np.mean([r.link_utilization for r in reports], axis=0)
    totals = np.array([r.rates.sum(axis=1) for r in reports]).reshape(len(reports), S)
    active = np.array([r.active for r in reports]).reshape(len(reports), S)
    times = np.array([r.start for r in reports])

    sent = np.sum([r.sent for r in reports], axis=0).reshape(S)
    late = np.sum([r.late for r in reports], axis=0).reshape(S)
    dropped = np.sum([r.dropped for r in reports], axis=0).reshape(S)
    delivered = np.sum([r.delivered for r in reports], axis=0).reshape(S)
    delay_sum = np.sum([r.delay_sum for r in reports], axis=0).reshape(S)
    received = sent - dropped

    stream_rate = np.zeros(S)
    fluctuation = np.zeros(S)
    convergence: List[Optional[float]] = []
    psnr: List[Optional[float]] = []
    mean_delay: List[Optional[float]] = []
    for s in range(S):
        mask = active[:, s]
        if np.any(mask):
            stream_rate[s] = totals[mask, s].mean()
            fluctuation[s] = totals[mask, s].std()
            convergence.append(convergence_time(times[mask], totals[mask, s]))
        else:
            convergence.append(None)
        gops = [value for r in reports for value in r.gop_psnr[s]]
        psnr.append(float(np.mean(gops)) if gops else None)
        mean_delay.append(float(delay_sum[s] / received[s]) if received[s] > 0 else None)

    total_sent = int(sent.sum())
    key = tuple(getattr(config, name, None) for name in CONFIG_FIELDS) + (first.stream_ids, first.network_ids)
    return RunSummary(
        policy=policy,
        stream_ids=tuple(first.stream_ids),
        network_ids=tuple(first.network_ids),
        epochs=len(reports),
        utilization=utilization.reshape(N),
        link_utilization=link_utilization.reshape(N),
        stream_rate=stream_rate,
        mean_delay=mean_delay,
        loss_ratio=np.where(sent > 0, late / np.maximum(sent, 1), 0.0),
        drop_ratio=np.where(sent > 0, dropped / np.maximum(sent, 1), 0.0),
        psnr=psnr,
        fluctuation=fluctuation,
        convergence_time=convergence,
        total_fluctuation=float(totals.sum(axis=1).std()),
        run_loss_ratio=float(late.sum() / total_sent) if total_sent else 0.0,
        packets_sent=total_sent,
        packets_delivered=int(delivered.sum()),
        packets_dropped=int(dropped.sum()),
        packets_in_flight=int(total_sent - dropped.sum() - delivered.sum()),
        epoch_times=times,
        rate_trace=totals,
        config_key=key,
    )


def compare_policies(summaries: Sequence[RunSummary]) -> List[ComparisonRow]:
    """
    One row per (policy, scope, id, metric); delta is taken against the
    first summary, which acts as the reference policy.
    """
    if not summaries:
        return []
    reference = summaries[0]
    for summary in summaries[1:]:
        if summary.config_key != reference.config_key:
            raise MismatchedConfigs(
                f"Policy '{summary.policy}' ran a different scenario than '{reference.policy}'"
            )
    baseline = {(scope, ident, metric): value for scope, ident, metric, value in reference.rows()}
    table: List[ComparisonRow] = []
    for summary in summaries:
        for scope, ident, metric, value in summary.rows():
            base = baseline.get((scope, ident, metric))
            delta = None if value is None or base is None else value - base
            table.append(ComparisonRow(summary.policy, scope, ident, metric, value, delta))
    return table


def _fmt(value: Optional[float]) -> str:
    value = _optional(value)
    return "" if value is None else f"{value:.6f}"


def _atomic_write(path: Path, write: Callable[[Any], None], binary: bool = False) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb' if binary else 'w', **({} if binary else {'newline': ''})) as f:
            write(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_epochs_csv(reports: Sequence, path: Path) -> Path:
    def write(f):
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(EPOCH_HEADER)
        for report in reports:
            util = report.utilization
            delay = report.mean_delay
            loss = report.loss_ratio
            psnr = report.psnr
            for s, stream in enumerate(report.stream_ids):
                for n, net in enumerate(report.network_ids):
                    writer.writerow([
                        report.index, stream, net,
                        _fmt(report.rates[s, n] / 1e3), _fmt(util[n]),
                        _fmt(delay[s] * 1e3), _fmt(loss[s]), _fmt(psnr[s]),
                    ])
    return _atomic_write(path, write)


def write_summary_csv(summary: RunSummary, path: Path) -> Path:
    def write(f):
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(SUMMARY_HEADER)
        for scope, ident, metric, value in summary.rows():
            writer.writerow([summary.policy, scope, ident, metric, _fmt(value)])
    return _atomic_write(path, write)


def write_comparison_csv(rows: Sequence[ComparisonRow], path: Path) -> Path:
    def write(f):
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(COMPARISON_HEADER)
        for row in rows:
            writer.writerow([row.policy, row.scope, row.id, row.metric, _fmt(row.value), _fmt(row.delta)])
    return _atomic_write(path, write)


def write_comparison_workbook(rows: Sequence[ComparisonRow], path: Path) -> Path:
    """Excel view of the comparison: one sheet per metric, policies as columns."""
    workbook = Workbook()
    workbook.remove(workbook.active)
    by_metric: Dict[str, List[ComparisonRow]] = {}
    for row in rows:
        by_metric.setdefault(row.metric, []).append(row)

    for metric, metric_rows in by_metric.items():
        sheet = workbook.create_sheet(metric[:31])
        policies = list(dict.fromkeys(r.policy for r in metric_rows))
        sheet.append(["Scope", "Id"] + policies)
        cells: Dict[Tuple[str, str], Dict[str, Optional[float]]] = {}
        for r in metric_rows:
            cells.setdefault((r.scope, r.id), {})[r.policy] = _optional(r.value)
        for (scope, ident), values in cells.items():
            sheet.append([scope, ident] + [values.get(p) for p in policies])

    return _atomic_write(path, workbook.save, binary=True)


def log_summary(summary: RunSummary):
    """Banner-style summary for the console."""
    logger.info("=" * 60)
    logger.info(f"POLICY: {summary.policy}")
    logger.info("=" * 60)
    for n, net in enumerate(summary.network_ids):
        logger.info(f"Network {net}: utilization {summary.utilization[n]:.3f}, "
                    f"link utilization {summary.link_utilization[n]:.3f}")
    for s, stream in enumerate(summary.stream_ids):
        psnr = summary.psnr[s]
        delay = summary.mean_delay[s]
        logger.info(
            f"Stream {stream}: {summary.stream_rate[s] / 1e3:.0f} kbit/s, "
            f"delay {'n/a' if delay is None else f'{delay * 1e3:.1f} ms'}, "
            f"loss {summary.loss_ratio[s] * 100:.2f}%, "
            f"PSNR {'n/a' if psnr is None else f'{psnr:.2f} dB'}"
        )
    mean_psnr = summary.mean_psnr
    logger.info(f"Mean PSNR: {'n/a' if mean_psnr is None else f'{mean_psnr:.2f} dB'}, "
                f"loss {summary.run_loss_ratio * 100:.2f}%")
