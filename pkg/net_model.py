#!/usr/bin/env python3
"""
Analytic network model shared by every rate allocation policy.

Covers residual bandwidth, per-stream available bandwidth, the rational
congestion-delay law, delay-coefficient estimation from RTT samples and the
exponential late-loss estimate. Units are bit/s and seconds throughout.
"""

import math
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

RHO_SUM_TOLERANCE = 1e-9


class NonPositiveResidual(ValueError):
    """Residual bandwidth is zero or negative; queueing delay is unbounded."""


class InfeasibleRate(ValueError):
    """A rate reaches or exceeds the bandwidth available to it."""


@dataclass(frozen=True)
class NetworkParams:
    """Ground-truth description of one access network."""
    id: int
    capacity: float
    rtt: float
    alpha: float = 0.0

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError(f"Network {self.id}: capacity must be > 0, got {self.capacity}")
        if self.rtt <= 0:
            raise ValueError(f"Network {self.id}: rtt must be > 0, got {self.rtt}")
        if self.alpha < 0:
            raise ValueError(f"Network {self.id}: alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class Observation:
    """What one stream's measurement agent sees for one network at one epoch."""
    network: int
    per_stream_abr: float
    rtt: float
    epoch_index: int = 0

    def __post_init__(self):
        if self.per_stream_abr < 0:
            raise ValueError(f"Observation on network {self.network}: negative ABR {self.per_stream_abr}")
        if self.rtt <= 0:
            raise ValueError(f"Observation on network {self.network}: rtt must be > 0, got {self.rtt}")


@dataclass
class AllocationMatrix:
    """Rates r^s_n with streams as rows and networks as columns."""
    rates: np.ndarray
    feasible: bool = False

    def __post_init__(self):
        self.rates = np.atleast_2d(np.asarray(self.rates, dtype=float))
        if np.any(self.rates < 0):
            raise ValueError("Allocation entries must be >= 0")

    @property
    def num_streams(self) -> int:
        return self.rates.shape[0]

    @property
    def num_networks(self) -> int:
        return self.rates.shape[1]

    def stream_totals(self) -> np.ndarray:
        """r^s, one entry per stream."""
        return self.rates.sum(axis=1)

    def network_totals(self) -> np.ndarray:
        """r_n, one entry per network."""
        return self.rates.sum(axis=0)

    def row(self, stream: int) -> np.ndarray:
        return self.rates[stream].copy()

    def per_stream_abr(self, capacities: Sequence[float], stream: int) -> np.ndarray:
        """c^s_n for every network as seen by one stream."""
        others = self.network_totals() - self.rates[stream]
        return np.asarray(capacities, dtype=float) - others

    def check_feasible(self, capacities: Sequence[float]) -> bool:
        """Mark the matrix feasible when every column stays strictly below capacity."""
        self.feasible = bool(np.all(self.network_totals() < np.asarray(capacities, dtype=float)))
        return self.feasible


@dataclass(frozen=True)
class StreamFeedback:
    """Sender-side feedback handed to a policy together with its observations."""
    own_rates: Tuple[float, ...]
    loss_seen: Tuple[bool, ...]
    gop_index: int = 0


class RatePolicy(ABC):
    """Per-stream allocation policy driven once per measurement epoch."""

    name = "policy"

    @abstractmethod
    def allocate(self, observations: Sequence[Observation], feedback: StreamFeedback,
                 now: float) -> np.ndarray:
        """Return the allocation row r^s_n for the coming epoch."""


def residual_bandwidth(capacity: float, total_rate: float) -> float:
    """e_n = c_n - r_n. The sign is preserved on overload."""
    return capacity - total_rate


def per_stream_abr(capacity: float, rates_other_streams: Sequence[float]) -> float:
    """c^s_n = c_n - sum of the other streams' rates on the same network."""
    return capacity - float(sum(rates_other_streams))


def expected_delay(alpha: float, residual: float) -> float:
    """Rational congestion-delay law t_n = alpha_n / e_n."""
    if residual <= 0:
        raise NonPositiveResidual(f"Residual bandwidth {residual} <= 0, delay is unbounded")
    return alpha / residual


def estimate_alpha(residual: float, rtt: float) -> float:
    """alpha_n = e_n * tau_n / 2, assuming symmetric one-way delays."""
    if residual < 0:
        raise ValueError(f"Residual must be >= 0 for alpha estimation, got {residual}")
    if rtt <= 0:
        raise ValueError(f"RTT must be > 0, got {rtt}")
    return residual * rtt / 2.0


def late_loss_probability(deadline: float, mean_delay: float) -> float:
    """Share of packets later than the deadline under exponential delays."""
    if mean_delay <= 0:
        return 0.0
    if deadline <= 0:
        raise ValueError(f"Deadline must be > 0, got {deadline}")
    return math.exp(-deadline / mean_delay)


def stream_loss(rho: Sequence[float], deadline: float, alphas: Sequence[float],
                abrs: Sequence[float], rates: Sequence[float]) -> float:
    """Expected late loss of one stream, weighted over its networks by rho."""
    rho = np.asarray(rho, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    abrs = np.asarray(abrs, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if not (len(rho) == len(alphas) == len(abrs) == len(rates)):
        raise ValueError("rho, alphas, abrs and rates must have the same length")
    if np.any(rho < 0) or abs(rho.sum() - 1.0) > RHO_SUM_TOLERANCE:
        raise ValueError(f"rho must be non-negative and sum to 1, got {rho.tolist()}")
    residuals = abrs - rates
    if np.any(residuals <= 0):
        bad = [int(i) for i in np.flatnonzero(residuals <= 0)]
        raise InfeasibleRate(f"Rate reaches available bandwidth on networks {bad}")
    return float(np.sum(rho * _late_loss_terms(deadline, alphas, residuals)))


def _late_loss_terms(deadline: float, alphas: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """exp(-t0 * e_n / alpha_n); a zero alpha means no queueing and no late loss."""
    safe_alpha = np.where(alphas > 0, alphas, 1.0)
    return np.where(alphas > 0, np.exp(-deadline * residuals / safe_alpha), 0.0)


@dataclass
class AlphaEstimator:
    """EWMA of per-epoch alpha estimates for one network."""
    smoothing: float = 0.5
    value: Optional[float] = None
    held: int = field(default=0, repr=False)

    def __post_init__(self):
        if not 0 < self.smoothing <= 1:
            raise ValueError(f"alpha smoothing must be in (0, 1], got {self.smoothing}")

    def update(self, residual: float, rtt: float) -> float:
        """Fold in one epoch estimate; a non-positive residual holds the previous value."""
        if residual <= 0:
            self.held += 1
            if self.value is None:
                return 0.0
            logger.warning(f"Residual {residual:.0f} bit/s <= 0, holding alpha at {self.value:.1f}")
            return self.value
        sample = estimate_alpha(residual, rtt)
        if self.value is None:
            self.value = sample
        else:
            self.value = self.smoothing * sample + (1.0 - self.smoothing) * self.value
        return self.value


def alphas_of(estimators: List[AlphaEstimator]) -> np.ndarray:
    return np.array([est.value or 0.0 for est in estimators], dtype=float)
