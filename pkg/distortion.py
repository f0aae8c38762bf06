#!/usr/bin/env python3
"""
Distortion-rate model of an encoded video stream.

Encoder distortion follows d(r) = d0 + theta / (r - r0); late or dropped
packets add kappa * p_loss on top. Profiles are read from CSV files whose
rows give the DR parameters per group of pictures, in kbit/s units.
"""

import csv
import math
import logging
import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

logger = logging.getLogger(__name__)

PSNR_PEAK = 255.0
PROFILE_HEADER = ['gop_index', 'd0', 'theta_kbps_mse', 'r0_kbps', 'kappa']
FIT_MAX_EVALUATIONS = 400


class RateBelowOffset(ValueError):
    """Rate at or below the DR offset r0, where the model is undefined."""


class DegenerateFit(ValueError):
    """Trial points cannot be represented by the DR model."""


@dataclass(frozen=True)
class DrParams:
    """DR parameters valid for one group of pictures."""
    d0: float
    theta: float
    r0: float
    kappa: float


@dataclass(frozen=True)
class StreamProfile:
    """Video source of one stream: DR curve, loss sensitivity and playout constraints."""
    d0: float
    theta: float
    r0: float
    kappa: float
    deadline: float
    min_rate: float
    id: int = 0
    name: str = ""
    schedule: Tuple[DrParams, ...] = ()

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError(f"Stream {self.id}: theta must be > 0, got {self.theta}")
        if self.kappa < 0:
            raise ValueError(f"Stream {self.id}: kappa must be >= 0, got {self.kappa}")
        if self.deadline <= 0:
            raise ValueError(f"Stream {self.id}: deadline must be > 0, got {self.deadline}")
        if self.d0 < 0:
            raise ValueError(f"Stream {self.id}: d0 must be >= 0, got {self.d0}")
        if not (self.min_rate > self.r0 >= 0):
            raise ValueError(
                f"Stream {self.id}: need min_rate > r0 >= 0, got min_rate={self.min_rate}, r0={self.r0}"
            )
        for entry in self.schedule:
            if entry.r0 >= self.min_rate or entry.theta <= 0:
                raise ValueError(f"Stream {self.id}: schedule entry {entry} violates min_rate > r0, theta > 0")

    def at_gop(self, gop_index: int) -> 'StreamProfile':
        """Profile in force during one GOP; the schedule repeats cyclically."""
        if not self.schedule:
            return self
        entry = self.schedule[gop_index % len(self.schedule)]
        return replace(self, d0=entry.d0, theta=entry.theta, r0=entry.r0, kappa=entry.kappa)


@dataclass(frozen=True)
class DistortionReport:
    d_enc: float
    d_loss: float
    d_dec: float
    psnr: float


def encoder_distortion(profile: StreamProfile, rate: float) -> float:
    """d0 + theta / (rate - r0) in MSE."""
    if rate <= profile.r0:
        raise RateBelowOffset(f"Rate {rate:.0f} bit/s <= offset r0 {profile.r0:.0f} bit/s")
    return profile.d0 + profile.theta / (rate - profile.r0)


def loss_distortion(profile: StreamProfile, p_loss: float) -> float:
    if not 0.0 <= p_loss <= 1.0:
        raise ValueError(f"Loss probability must be in [0, 1], got {p_loss}")
    return profile.kappa * p_loss


def mse_to_psnr(mse: float) -> float:
    """PSNR in dB for 8-bit video; an MSE of zero maps to infinity."""
    if mse <= 0:
        return math.inf
    return 10.0 * math.log10(PSNR_PEAK ** 2 / mse)


def decoder_distortion(profile: StreamProfile, rate: float, p_loss: float) -> DistortionReport:
    """Encoder plus loss distortion at the receiver."""
    d_enc = encoder_distortion(profile, rate)
    d_loss = loss_distortion(profile, p_loss)
    d_dec = d_enc + d_loss
    return DistortionReport(d_enc=d_enc, d_loss=d_loss, d_dec=d_dec, psnr=mse_to_psnr(d_dec))


def _exact_three_point(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    (r1, d1), (r2, d2), (r3, d3) = sorted(points)
    if not (d1 > d2 > d3):
        raise DegenerateFit("Distortion must strictly decrease with rate")
    ratio = (d1 - d2) * (r3 - r2) / ((d2 - d3) * (r2 - r1))
    if ratio <= 1.0 or math.isclose(ratio, 1.0, rel_tol=1e-12):
        raise DegenerateFit(f"Points lie on a curve without a finite offset (ratio {ratio:.6g})")
    r0 = (ratio * r1 - r3) / (ratio - 1.0)
    theta = (d1 - d2) * (r1 - r0) * (r2 - r0) / (r2 - r1)
    if theta <= 0:
        raise DegenerateFit(f"Fitted theta {theta:.6g} is not positive")
    d0 = d1 - theta / (r1 - r0)
    return d0, theta, r0


def _sse(params: Tuple[float, float, float], rates: np.ndarray, mses: np.ndarray) -> float:
    d0, theta, r0 = params
    if np.any(rates <= r0):
        return math.inf
    return float(np.sum((d0 + theta / (rates - r0) - mses) ** 2))


def fit_dr_model(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """
    Fit (d0, theta, r0) to trial encodings given as (rate bit/s, mse) pairs.

    Three points are solved exactly. With more points the best exact
    three-point fit seeds a bounded least-squares refinement in Mbit/s units.
    """
    if len(points) < 3:
        raise DegenerateFit(f"At least 3 points are required, got {len(points)}")
    ordered = sorted((float(r), float(d)) for r, d in points)
    rates = np.array([r for r, _ in ordered])
    mses = np.array([d for _, d in ordered])
    if np.any(rates <= 0) or np.any(np.diff(rates) <= 0):
        raise DegenerateFit("Rates must be positive and distinct")
    if np.any(mses <= 0) or np.any(np.diff(mses) >= 0):
        raise DegenerateFit("MSE values must be positive and strictly decreasing in rate")

    if len(ordered) == 3:
        return _exact_three_point(ordered)

    best: Optional[Tuple[float, float, float]] = None
    best_sse = math.inf
    for subset in itertools.combinations(ordered, 3):
        try:
            candidate = _exact_three_point(subset)
        except DegenerateFit:
            continue
        sse = _sse(candidate, rates, mses)
        if sse < best_sse:
            best, best_sse = candidate, sse
    if best is None:
        raise DegenerateFit("No three-point subset admits a valid DR curve")

    scale = 1e6
    r_scaled = rates / scale
    upper_r0 = r_scaled[0] - 1e-6
    d0, theta, r0 = best
    x0 = np.array([d0, theta / scale, min(r0 / scale, upper_r0 - 1e-6)])

    def residuals(p: np.ndarray) -> np.ndarray:
        return p[0] + p[1] / (r_scaled - p[2]) - mses

    result = least_squares(
        residuals, x0,
        bounds=([-np.inf, 1e-12, -np.inf], [np.inf, np.inf, upper_r0]),
        max_nfev=FIT_MAX_EVALUATIONS,
    )
    if not result.success:
        raise DegenerateFit(f"Least-squares refinement did not converge: {result.message}")
    fitted = (float(result.x[0]), float(result.x[1] * scale), float(result.x[2] * scale))
    if _sse(fitted, rates, mses) > best_sse:
        logger.debug("Refinement did not improve on the best three-point fit")
        return best
    return fitted


def load_profile(path: Path, deadline: float, min_rate: float, stream_id: int = 0,
                 name: str = "") -> StreamProfile:
    """
    Read a DR profile CSV (header gop_index,d0,theta_kbps_mse,r0_kbps,kappa).

    The first row supplies the base parameters; a file with several rows
    becomes a per-GOP schedule ordered by gop_index.
    """
    path = Path(path)
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PROFILE_HEADER:
            raise ValueError(f"{path}: expected header {','.join(PROFILE_HEADER)}, got {header}")
        rows: List[Tuple[int, DrParams]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(PROFILE_HEADER):
                raise ValueError(f"{path}:{line_no}: expected {len(PROFILE_HEADER)} fields, got {len(row)}")
            try:
                gop = int(row[0])
                entry = DrParams(
                    d0=float(row[1]),
                    theta=float(row[2]) * 1e3,
                    r0=float(row[3]) * 1e3,
                    kappa=float(row[4]),
                )
            except ValueError as e:
                raise ValueError(f"{path}:{line_no}: {e}") from e
            rows.append((gop, entry))
    if not rows:
        raise ValueError(f"{path}: profile has no rows")
    rows.sort(key=lambda item: item[0])
    base = rows[0][1]
    schedule = tuple(entry for _, entry in rows) if len(rows) > 1 else ()
    logger.debug(f"Loaded profile {path.name}: {len(rows)} GOP row(s)")
    return StreamProfile(
        d0=base.d0, theta=base.theta, r0=base.r0, kappa=base.kappa,
        deadline=deadline, min_rate=min_rate, id=stream_id,
        name=name or path.stem, schedule=schedule,
    )
