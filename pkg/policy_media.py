#!/usr/bin/env python3
"""
Media-aware rate allocation.

Each stream splits its rate over the access networks in proportion to the
bandwidth it observes (equal utilization) and picks its total rate by a
one-dimensional convex search that trades encoder distortion against the
expected late loss on every network. A centralized solver over all streams
and the full per-stream objective are provided as reference points.
"""

import math
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from distortion import StreamProfile, encoder_distortion
from net_model import (
    AllocationMatrix,
    AlphaEstimator,
    InfeasibleRate,
    Observation,
    RatePolicy,
    StreamFeedback,
    alphas_of,
)

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2
INV_PHI_SQUARE = (3 - math.sqrt(5)) / 2


class AllZeroAbr(ValueError):
    """No network offers any bandwidth to the stream."""


class EmptyFeasibleRegion(ValueError):
    """The largest feasible rate does not exceed the stream's minimum rate."""


class Infeasible(ValueError):
    """The minimum rates of all streams do not fit into the aggregate capacity."""


@dataclass
class MediaPolicyParams:
    kappa_prime: float = 1000.0
    search_tol: float = 1e3
    alpha_smoothing: float = 0.5
    safety_margin: float = 0.02
    step_size: float = 1.0

    def __post_init__(self):
        if self.kappa_prime < 0:
            raise ValueError(f"kappa_prime must be >= 0, got {self.kappa_prime}")
        if self.search_tol <= 0:
            raise ValueError(f"search_tol must be > 0, got {self.search_tol}")
        if not 0 < self.alpha_smoothing <= 1:
            raise ValueError(f"alpha_smoothing must be in (0, 1], got {self.alpha_smoothing}")
        if not 0 <= self.safety_margin < 1:
            raise ValueError(f"safety_margin must be in [0, 1), got {self.safety_margin}")
        if not 0 < self.step_size <= 1:
            raise ValueError(f"step_size must be in (0, 1], got {self.step_size}")


@dataclass
class MediaPolicyState:
    estimators: List[AlphaEstimator] = field(default_factory=list)
    last_total: float = 0.0
    last_rates: Optional[np.ndarray] = None
    last_rho: Optional[np.ndarray] = None
    fallback_epochs: List[int] = field(default_factory=list)


def golden_section(f, lo: float, hi: float, tol: float) -> float:
    """Minimizer of a unimodal f on [lo, hi] to within tol."""
    a, b = min(lo, hi), max(lo, hi)
    h = b - a
    if h <= tol:
        return (a + b) / 2

    c = a + INV_PHI_SQUARE * h
    d = a + INV_PHI * h
    yc = f(c)
    yd = f(d)
    while h > tol:
        if yc < yd:
            b, d, yd = d, c, yc
            h = INV_PHI * h
            c = a + INV_PHI_SQUARE * h
            yc = f(c)
        else:
            a, c, yc = c, d, yd
            h = INV_PHI * h
            d = a + INV_PHI * h
            yd = f(d)
    return (a + b) / 2


def compute_rho(abrs: Sequence[float]) -> np.ndarray:
    """Equal-utilization split rho_n = c^s_n / sum(c^s)."""
    abrs = np.asarray(abrs, dtype=float)
    if np.any(abrs < 0):
        raise ValueError(f"ABR values must be >= 0, got {abrs.tolist()}")
    total = abrs.sum()
    if total <= 0:
        raise AllZeroAbr("All observed ABR values are zero")
    return abrs / total


def _late_loss_sum(deadline: float, rho: np.ndarray, alphas: np.ndarray,
                   residuals: np.ndarray) -> float:
    active = alphas > 0
    if not np.any(active):
        return 0.0
    return float(np.sum(rho[active] * np.exp(-deadline * residuals[active] / alphas[active])))


def rate_upper_bound(rho: Sequence[float], abrs: Sequence[float]) -> float:
    """min_n c^s_n / rho_n over networks that carry a share."""
    rho = np.asarray(rho, dtype=float)
    abrs = np.asarray(abrs, dtype=float)
    share = rho > 0
    if not np.any(share):
        return 0.0
    return float(np.min(abrs[share] / rho[share]))


def distributed_objective(profile: StreamProfile, params: MediaPolicyParams, rho: Sequence[float],
                          abrs: Sequence[float], alphas: Sequence[float], r_total: float) -> float:
    """Encoder distortion plus kappa' times the rho-weighted late-loss estimate."""
    rho = np.asarray(rho, dtype=float)
    abrs = np.asarray(abrs, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if not (len(rho) == len(abrs) == len(alphas)):
        raise ValueError("rho, abrs and alphas must have the same length")
    upper = rate_upper_bound(rho, abrs)
    if not profile.r0 < r_total < upper:
        raise InfeasibleRate(
            f"Rate {r_total:.0f} bit/s outside ({profile.r0:.0f}, {upper:.0f})"
        )
    residuals = abrs - rho * r_total
    penalty = _late_loss_sum(profile.deadline, rho, alphas, residuals)
    return encoder_distortion(profile, r_total) + params.kappa_prime * penalty


def feasible_interval(profile: StreamProfile, params: MediaPolicyParams, rho: Sequence[float],
                      abrs: Sequence[float]) -> Tuple[float, float]:
    hi = rate_upper_bound(rho, abrs) * (1.0 - params.safety_margin)
    lo = profile.min_rate
    if hi <= lo:
        raise EmptyFeasibleRegion(
            f"Stream {profile.id}: upper bound {hi / 1e3:.0f} kbit/s <= minimum rate {lo / 1e3:.0f} kbit/s"
        )
    return lo, hi


def minimize_distributed(profile: StreamProfile, params: MediaPolicyParams, rho: Sequence[float],
                         abrs: Sequence[float], alphas: Sequence[float]) -> float:
    """Golden-section search of the per-stream objective over [r_min, shrunk upper bound]."""
    lo, hi = feasible_interval(profile, params, rho, abrs)
    best = golden_section(
        lambda r: distributed_objective(profile, params, rho, abrs, alphas, r),
        lo, hi, params.search_tol,
    )
    return float(min(max(best, lo), hi))


def alternating_objective(profile: StreamProfile, rho: Sequence[float], abrs: Sequence[float],
                          alphas: Sequence[float], r_total: float,
                          others: Sequence[Tuple[float, float]] = ()) -> float:
    """
    Full contribution of one stream to the total distortion.

    Args:
        others: (kappa, deadline) of every other stream sharing the networks
    """
    rho = np.asarray(rho, dtype=float)
    abrs = np.asarray(abrs, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    upper = rate_upper_bound(rho, abrs)
    if not profile.r0 < r_total < upper:
        raise InfeasibleRate(
            f"Rate {r_total:.0f} bit/s outside ({profile.r0:.0f}, {upper:.0f})"
        )
    residuals = abrs - rho * r_total
    value = encoder_distortion(profile, r_total)
    value += profile.kappa * _late_loss_sum(profile.deadline, rho, alphas, residuals)
    for kappa, deadline in others:
        value += kappa * _late_loss_sum(deadline, rho, alphas, residuals)
    return value


def minimize_alternating(profile: StreamProfile, params: MediaPolicyParams, rho: Sequence[float],
                         abrs: Sequence[float], alphas: Sequence[float],
                         others: Sequence[Tuple[float, float]] = ()) -> float:
    lo, hi = feasible_interval(profile, params, rho, abrs)
    best = golden_section(
        lambda r: alternating_objective(profile, rho, abrs, alphas, r, others),
        lo, hi, params.search_tol,
    )
    return float(min(max(best, lo), hi))


class MediaAwarePolicy(RatePolicy):
    """Per-stream media-aware allocator; keeps only this stream's state."""

    name = "media_aware"

    def __init__(self, profile: StreamProfile, params: Optional[MediaPolicyParams] = None):
        self.profile = profile
        self.params = params or MediaPolicyParams()
        self.state = MediaPolicyState()

    def _own_rates(self, feedback: Optional[StreamFeedback], count: int) -> np.ndarray:
        if feedback is not None and len(feedback.own_rates) == count:
            return np.asarray(feedback.own_rates, dtype=float)
        if self.state.last_rates is not None and len(self.state.last_rates) == count:
            return self.state.last_rates
        return np.zeros(count)

    def _step_toward(self, best: float, lo: float, hi: float) -> float:
        previous = self.state.last_total if self.state.last_total > 0 else lo
        total = previous + self.params.step_size * (best - previous)
        return float(min(max(total, lo), hi))

    def _back_off(self, profile: StreamProfile, count: int) -> np.ndarray:
        rho = self.state.last_rho
        if rho is None or len(rho) != count:
            rho = np.full(count, 1.0 / count)
        rates = profile.min_rate * rho
        self.state.last_total = profile.min_rate
        self.state.last_rates = rates
        return rates.copy()

    def allocate(self, observations: Sequence[Observation], feedback: Optional[StreamFeedback] = None,
                 now: float = 0.0) -> np.ndarray:
        count = len(observations)
        if len(self.state.estimators) != count:
            self.state.estimators = [AlphaEstimator(self.params.alpha_smoothing) for _ in range(count)]
        abrs = np.array([obs.per_stream_abr for obs in observations], dtype=float)
        own = self._own_rates(feedback, count)
        for estimator, obs, rate in zip(self.state.estimators, observations, own):
            estimator.update(obs.per_stream_abr - rate, obs.rtt)
        alphas = alphas_of(self.state.estimators)
        gop = feedback.gop_index if feedback is not None else 0
        profile = self.profile.at_gop(gop)
        epoch = observations[0].epoch_index if observations else 0

        try:
            rho = compute_rho(abrs)
            lo, hi = feasible_interval(profile, self.params, rho, abrs)
            best = minimize_distributed(profile, self.params, rho, abrs, alphas)
        except AllZeroAbr as e:
            self.state.fallback_epochs.append(epoch)
            logger.warning(f"Stream {profile.id} epoch {epoch}: {e}; backing off to the minimum rate")
            return self._back_off(profile, count)
        except EmptyFeasibleRegion as e:
            self.state.fallback_epochs.append(epoch)
            logger.warning(f"Stream {profile.id} epoch {epoch}: {e}; keeping previous allocation")
            if self.state.last_rates is None or len(self.state.last_rates) != count:
                self.state.last_rates = np.zeros(count)
            return self.state.last_rates.copy()

        total = self._step_toward(best, lo, hi)
        rates = rho * total
        self.state.last_rho = rho
        self.state.last_total = total
        self.state.last_rates = rates
        logger.debug(
            f"Stream {profile.id} epoch {epoch}: total {total / 1e3:.0f} kbit/s "
            f"(optimum {best / 1e3:.0f}), rho {np.round(rho, 3).tolist()}"
        )
        return rates.copy()


def _centralized_marginal(profiles: Sequence[StreamProfile], rho: np.ndarray, total_capacity: float,
                          alphas: np.ndarray, total_rate: float) -> float:
    """Derivative of the aggregate late-loss term with respect to the total rate."""
    active = alphas > 0
    if not np.any(active):
        return 0.0
    slack = rho[active] * (total_capacity - total_rate)
    value = 0.0
    for profile in profiles:
        t0 = profile.deadline
        value += profile.kappa * float(np.sum(
            rho[active] ** 2 * t0 / alphas[active] * np.exp(-t0 * slack / alphas[active])
        ))
    return value


def _rates_for_marginal(profiles: Sequence[StreamProfile], marginal: float) -> np.ndarray:
    if marginal <= 0:
        return np.full(len(profiles), np.inf)
    return np.array([max(p.min_rate, p.r0 + math.sqrt(p.theta / marginal)) for p in profiles])


def centralized_objective(profiles: Sequence[StreamProfile], capacities: Sequence[float],
                          alphas: Sequence[float], totals: Sequence[float]) -> float:
    """Total decoder distortion of all streams under equal utilization."""
    capacities = np.asarray(capacities, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    rho = capacities / capacities.sum()
    total_rate = float(np.sum(totals))
    if total_rate >= capacities.sum():
        raise InfeasibleRate(f"Total rate {total_rate:.0f} bit/s reaches aggregate capacity")
    residuals = capacities - rho * total_rate
    value = 0.0
    for profile, rate in zip(profiles, totals):
        value += encoder_distortion(profile, rate)
        value += profile.kappa * _late_loss_sum(profile.deadline, rho, alphas, residuals)
    return value


def centralized_solve(profiles: Sequence[StreamProfile], capacities: Sequence[float],
                      alphas: Sequence[float], deadlines: Optional[Sequence[float]] = None,
                      safety_margin: float = 0.02) -> AllocationMatrix:
    """
    Jointly optimal allocation of all streams with rho_n = c_n / sum(c).

    The stationarity condition gives every stream's rate as a function of
    the aggregate rate; the aggregate is then the root of a monotone
    scalar equation.
    """
    if deadlines is not None:
        if len(deadlines) != len(profiles):
            raise ValueError("deadlines must match profiles")
        profiles = [replace(p, deadline=t0) for p, t0 in zip(profiles, deadlines)]
    capacities = np.asarray(capacities, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    if np.any(capacities <= 0):
        raise ValueError("Capacities must be > 0")
    total_capacity = float(capacities.sum())
    rho = capacities / total_capacity
    lo = float(sum(p.min_rate for p in profiles))
    hi = total_capacity * (1.0 - safety_margin)
    if lo >= hi:
        raise Infeasible(
            f"Minimum rates {lo / 1e3:.0f} kbit/s exceed usable capacity {hi / 1e3:.0f} kbit/s"
        )

    def excess(total_rate: float) -> float:
        marginal = _centralized_marginal(profiles, rho, total_capacity, alphas, total_rate)
        return float(np.sum(_rates_for_marginal(profiles, marginal))) - total_rate

    if excess(lo) <= 0:
        totals = np.array([p.min_rate for p in profiles])
    elif excess(hi) < 0:
        aggregate = brentq(excess, lo, hi, xtol=1.0)
        totals = _rates_for_marginal(
            profiles, _centralized_marginal(profiles, rho, total_capacity, alphas, aggregate)
        )
    else:
        # capacity cap binds: raise the marginal until the streams fit into hi
        floor = max(_centralized_marginal(profiles, rho, total_capacity, alphas, hi), 1e-200)

        def fit(log_marginal: float) -> float:
            return float(np.sum(_rates_for_marginal(profiles, math.exp(log_marginal)))) - hi

        upper = math.log(floor)
        while fit(upper) > 0:
            upper += 1.0
        lower = math.log(floor)
        totals = _rates_for_marginal(profiles, math.exp(brentq(fit, lower, upper, xtol=1e-12)))

    matrix = AllocationMatrix(np.outer(totals, rho))
    matrix.check_feasible(capacities)
    return matrix


def distributed_fixed_point(profiles: Sequence[StreamProfile], capacities: Sequence[float],
                            alphas: Sequence[float], params: MediaPolicyParams,
                            max_rounds: int = 200, tolerance: float = 10e3) -> Tuple[AllocationMatrix, int]:
    """
    Round-robin best responses of the distributed scheme on a static instance.

    Returns the allocation and the number of rounds used.
    """
    capacities = np.asarray(capacities, dtype=float)
    alphas = np.asarray(alphas, dtype=float)
    rates = np.zeros((len(profiles), len(capacities)))
    for round_index in range(1, max_rounds + 1):
        largest_change = 0.0
        for s, profile in enumerate(profiles):
            others = rates.sum(axis=0) - rates[s]
            abrs = np.maximum(capacities - others, 0.0)
            try:
                rho = compute_rho(abrs)
                total = minimize_distributed(profile, params, rho, abrs, alphas)
            except (AllZeroAbr, EmptyFeasibleRegion):
                continue
            largest_change = max(largest_change, abs(total - rates[s].sum()))
            rates[s] = rho * total
        if largest_change < tolerance:
            logger.debug(f"Distributed allocation converged after {round_index} round(s)")
            matrix = AllocationMatrix(rates)
            matrix.check_feasible(capacities)
            return matrix, round_index
    logger.warning(f"Distributed allocation did not converge within {max_rounds} rounds")
    matrix = AllocationMatrix(rates)
    matrix.check_feasible(capacities)
    return matrix, max_rounds
