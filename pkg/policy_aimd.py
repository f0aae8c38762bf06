#!/usr/bin/env python3
"""
AIMD heuristics for multi-network video rate allocation.

A stream searches for bandwidth by adding a fixed increment every interval and
halves the excess above its floor on any network that shows a lost packet or
an RTT above threshold. The greedy variant pushes every increment onto the
network with the largest observed ABR; the proportional variant keeps the
split proportional to the observed ABRs.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from net_model import Observation, RatePolicy, StreamFeedback

logger = logging.getLogger(__name__)

GREEDY = 'greedy'
PROPORTIONAL = 'rate_proportional'
VARIANTS = (GREEDY, PROPORTIONAL)
TIME_EPSILON = 1e-9


@dataclass
class AimdParams:
    r_min: float
    delta_r: float = 100e3
    delta_t: float = 2.0
    rtt_threshold: float = 0.15
    variant: str = GREEDY

    def __post_init__(self):
        if self.delta_r <= 0:
            raise ValueError(f"delta_r must be > 0, got {self.delta_r}")
        if self.delta_t <= 0:
            raise ValueError(f"delta_t must be > 0, got {self.delta_t}")
        if self.r_min <= 0:
            raise ValueError(f"r_min must be > 0, got {self.r_min}")
        if self.rtt_threshold <= 0:
            raise ValueError(f"rtt_threshold must be > 0, got {self.rtt_threshold}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{self.variant}'")

    @classmethod
    def for_deadline(cls, r_min: float, deadline: float, **overrides) -> 'AimdParams':
        """Default RTT threshold is half the playout deadline."""
        overrides.setdefault('rtt_threshold', deadline / 2.0)
        return cls(r_min=r_min, **overrides)


@dataclass
class AimdState:
    rates: Optional[np.ndarray] = None
    initial_split: Optional[np.ndarray] = None
    last_increase: float = 0.0
    congested: List[bool] = field(default_factory=list)


def _split(total: float, abrs: np.ndarray) -> np.ndarray:
    weight = abrs.sum()
    if weight <= 0:
        return np.full(len(abrs), total / len(abrs))
    return total * abrs / weight


def detect_congestion(obs: Observation, loss_seen: bool, params: AimdParams) -> bool:
    return bool(loss_seen) or obs.rtt > params.rtt_threshold


def floor_shares(state: AimdState, params: AimdParams, abrs: np.ndarray) -> np.ndarray:
    """Per-network share of r_min that a decrease never goes below."""
    if params.variant == GREEDY:
        return state.initial_split
    return _split(params.r_min, abrs)


def aimd_step(state: AimdState, params: AimdParams, observations: Sequence[Observation],
              loss_flags: Sequence[bool], now: float) -> np.ndarray:
    """Advance the AIMD state machine by one measurement and return the new row."""
    abrs = np.array([obs.per_stream_abr for obs in observations], dtype=float)
    if state.rates is None or len(state.rates) != len(abrs):
        state.initial_split = _split(params.r_min, abrs)
        state.rates = state.initial_split.copy()
        state.last_increase = now
        state.congested = [False] * len(abrs)
        return state.rates.copy()

    flags = list(loss_flags) if loss_flags else [False] * len(abrs)
    state.congested = [detect_congestion(obs, lost, params) for obs, lost in zip(observations, flags)]
    floors = floor_shares(state, params, abrs)
    rates = state.rates.copy()

    if any(state.congested):
        for n, congested in enumerate(state.congested):
            if congested:
                rates[n] = max(rates[n] - (rates[n] - floors[n]) / 2.0, floors[n])
        logger.debug(f"Congestion on networks {[n for n, c in enumerate(state.congested) if c]}: "
                     f"rates now {np.round(rates / 1e3).tolist()} kbit/s")
    elif now - state.last_increase >= params.delta_t - TIME_EPSILON:
        if params.variant == GREEDY:
            rates[int(np.argmax(abrs))] += params.delta_r
        else:
            rates = _split(rates.sum() + params.delta_r, abrs)
        state.last_increase = now

    state.rates = rates
    return rates.copy()


class AimdPolicy(RatePolicy):
    """Per-stream AIMD allocator driven by measured RTT and loss feedback."""

    def __init__(self, params: AimdParams, stream_id: int = 0):
        self.params = params
        self.stream_id = stream_id
        self.state = AimdState()
        self.name = 'aimd_greedy' if params.variant == GREEDY else 'aimd_proportional'

    def allocate(self, observations: Sequence[Observation], feedback: Optional[StreamFeedback] = None,
                 now: float = 0.0) -> np.ndarray:
        loss = feedback.loss_seen if feedback is not None else ()
        return aimd_step(self.state, self.params, observations, loss, now)
