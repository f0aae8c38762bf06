#!/usr/bin/env python3
"""
H-infinity optimal rate control.

Every stream treats the measured residual bandwidth of a network as a
disturbance entering a first-order state, and drives its rate with the
worst-case optimal linear feedback of that state. The scalar controller runs
independently per network; the matrix controller solves the game algebraic
Riccati equation for all networks at once.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, solve_continuous_are

from net_model import Observation, RatePolicy, StreamFeedback

logger = logging.getLogger(__name__)

GARE_RESIDUAL_TOLERANCE = 1e-8
PSD_TOLERANCE = 1e-10
VARIANTS = ('scalar', 'matrix')


class GammaTooSmall(ValueError):
    """Requested performance factor is not above the achievable bound."""


class NoSolution(ValueError):
    """The game Riccati equation has no admissible solution."""


def gamma_star(a: float, b: float, h: float, g: float) -> float:
    """Smallest achievable performance factor 1 / sqrt(a^2/h^2 + b^2/g^2)."""
    return 1.0 / math.sqrt(a * a / (h * h) + b * b / (g * g))


@dataclass
class HinfParams:
    a: float = -0.5
    b: float = -1.0
    phi: float = 0.01
    h: float = 1.0
    g: float = 2.0
    gamma: Optional[float] = None
    gamma_factor: float = 1.5
    mu: Optional[float] = None
    mu_fraction: float = 0.25
    dt: float = 2.0
    variant: str = 'scalar'

    def __post_init__(self):
        if self.a >= 0:
            raise ValueError(f"a must be < 0, got {self.a}")
        if self.b >= 0:
            raise ValueError(f"b must be < 0, got {self.b}")
        if self.phi <= 0:
            raise ValueError(f"phi must be > 0, got {self.phi}")
        if self.h <= 0 or self.g <= 0:
            raise ValueError(f"h and g must be > 0, got h={self.h}, g={self.g}")
        if self.mu is not None and self.mu >= 0:
            raise ValueError(f"mu must be < 0, got {self.mu}")
        if self.mu_fraction <= 0:
            raise ValueError(f"mu_fraction must be > 0, got {self.mu_fraction}")
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got '{self.variant}'")
        bound = gamma_star(self.a, self.b, self.h, self.g)
        if self.gamma is None:
            if self.gamma_factor <= 1:
                raise GammaTooSmall(f"gamma_factor must be > 1, got {self.gamma_factor}")
            self.gamma = self.gamma_factor * bound
        elif self.gamma <= bound:
            raise GammaTooSmall(f"gamma {self.gamma:.6g} must exceed gamma* {bound:.6g}")

    @property
    def gamma_star(self) -> float:
        return gamma_star(self.a, self.b, self.h, self.g)

    @property
    def sigma(self) -> float:
        return sigma_gamma(self.a, self.b, self.h, self.g, self.gamma)

    @property
    def gain(self) -> float:
        """Feedback gain k with u = k * x."""
        return -(self.b / self.g ** 2) * self.sigma


@dataclass
class HinfState:
    """Controller state of one stream on one network."""
    x: float = 0.0
    r: float = 0.0
    overload_start: Optional[float] = None

    def __post_init__(self):
        if self.r < 0:
            raise ValueError(f"rate must be >= 0, got {self.r}")


def sigma_gamma(a: float, b: float, h: float, g: float, gamma: float) -> float:
    """Minimal nonnegative root of 2 a s + lambda s^2 + h^2 = 0."""
    bound = gamma_star(a, b, h, g)
    if gamma <= bound:
        raise GammaTooSmall(f"gamma {gamma:.6g} must exceed gamma* {bound:.6g}")
    lam = 1.0 / gamma ** 2 - b * b / (g * g)
    if lam == 0.0:
        return -h * h / (2.0 * a)
    # rationalized form of (-a - sqrt(a^2 - lam h^2)) / lam, finite as lam -> 0
    return h * h / (-a + math.sqrt(a * a - lam * h * h))


def measure_w(residual: float, now: float, state: HinfState, mu: float) -> float:
    """Residual bandwidth as disturbance; overload episodes grow linearly with mu."""
    if residual >= 0:
        state.overload_start = None
        return residual
    if state.overload_start is None:
        state.overload_start = now
    return mu * (now - state.overload_start)


def control_step(state: HinfState, params: HinfParams, w: float, dt: float) -> Tuple[float, float, float]:
    """One forward-Euler step; returns (u, new x, new r) without touching state."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    u = params.gain * state.x
    x = state.x + dt * (params.a * state.x + params.b * u + w)
    r = max(0.0, state.r + dt * (-params.phi * state.r + u))
    return u, x, r


def gare_solve(A: np.ndarray, B: np.ndarray, D: np.ndarray, Q: np.ndarray,
               G: np.ndarray, gamma: float) -> np.ndarray:
    """
    Stabilizing solution of
    A'S + SA - S(B (G'G)^-1 B' - D D' / gamma^2)S + Q = 0.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    D = np.atleast_2d(np.asarray(D, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = A.shape[0]
    GtG = G.T @ G

    if _is_diagonal(A) and _is_diagonal(B) and _is_diagonal(D) and _is_diagonal(Q) and _is_diagonal(GtG):
        for i in range(n):
            bound = abs(D[i, i]) / math.sqrt(A[i, i] ** 2 / Q[i, i] + B[i, i] ** 2 / GtG[i, i])
            if gamma <= bound:
                raise NoSolution(f"gamma {gamma:.6g} <= gamma* {bound:.6g} on channel {i}")

    B_stacked = np.hstack([B, D])
    R_stacked = np.zeros((B_stacked.shape[1], B_stacked.shape[1]))
    m = B.shape[1]
    R_stacked[:m, :m] = GtG
    R_stacked[m:, m:] = -gamma ** 2 * np.eye(D.shape[1])
    try:
        S = solve_continuous_are(A, B_stacked, Q, R_stacked)
    except (LinAlgError, ValueError) as e:
        raise NoSolution(f"Riccati solver failed for gamma {gamma:.6g}: {e}") from e

    S = (S + S.T) / 2
    coupling = B @ np.linalg.solve(GtG, B.T) - D @ D.T / gamma ** 2
    residual = np.linalg.norm(A.T @ S + S @ A - S @ coupling @ S + Q, ord='fro')
    if residual > GARE_RESIDUAL_TOLERANCE * max(1.0, np.linalg.norm(Q, ord='fro')):
        raise NoSolution(f"Riccati residual {residual:.3e} above tolerance")
    if np.min(np.linalg.eigvalsh(S)) < -PSD_TOLERANCE:
        raise NoSolution("Riccati solution is not nonnegative definite")
    return S


def _is_diagonal(M: np.ndarray) -> bool:
    return M.shape[0] == M.shape[1] and np.count_nonzero(M - np.diag(np.diag(M))) == 0


@dataclass
class HinfMatrixController:
    """Multi-network controller u = -(G'G)^-1 B' S x with S from the game Riccati equation."""
    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    Phi: np.ndarray
    H: np.ndarray
    G: np.ndarray
    gamma: float
    sigma: np.ndarray = field(init=False, repr=False)
    gain: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Q = self.H.T @ self.H
        GtG = self.G.T @ self.G
        if np.min(np.linalg.eigvalsh(Q)) <= 0:
            raise ValueError("H'H must be positive definite")
        if np.min(np.linalg.eigvalsh(GtG)) <= 0:
            raise ValueError("G'G must be positive definite")
        if np.any(np.abs(self.H.T @ self.G) > 0):
            raise ValueError("H'G must vanish")
        self.sigma = gare_solve(self.A, self.B, self.D, Q, self.G, self.gamma)
        self.gain = np.linalg.solve(GtG, self.B.T @ self.sigma)

    @classmethod
    def diagonal(cls, params: HinfParams, networks: int) -> 'HinfMatrixController':
        """Identity-scaled construction: every network gets the scalar parameters."""
        eye = np.eye(networks)
        zeros = np.zeros((networks, networks))
        return cls(
            A=params.a * eye,
            B=params.b * eye,
            D=eye.copy(),
            Phi=params.phi * eye,
            H=np.vstack([params.h * eye, zeros]),
            G=np.vstack([zeros, params.g * eye]),
            gamma=params.gamma,
        )

    @property
    def networks(self) -> int:
        return self.A.shape[0]


def matrix_control(states: Sequence[HinfState], controller: HinfMatrixController,
                   w: Sequence[float], dt: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vector form of control_step over all networks; returns (u, x, r)."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    x = np.array([s.x for s in states], dtype=float)
    r = np.array([s.r for s in states], dtype=float)
    w = np.asarray(w, dtype=float)
    u = -controller.gain @ x
    x_next = x + dt * (controller.A @ x + controller.B @ u + controller.D @ w)
    r_next = np.maximum(0.0, r + dt * (-controller.Phi @ r + u))
    return u, x_next, r_next


def empirical_cost_ratio(params: HinfParams, disturbance: Sequence[float], dt: float) -> float:
    """
    ||z|| / ||w|| of the closed scalar loop driven from rest by a disturbance
    sequence, with z = (h x, g u).
    """
    w = np.asarray(disturbance, dtype=float)
    energy_w = float(np.sum(w ** 2))
    if energy_w == 0:
        return 0.0
    state = HinfState()
    energy_z = 0.0
    for value in w:
        u, x, r = control_step(state, params, float(value), dt)
        energy_z += (params.h * state.x) ** 2 + (params.g * u) ** 2
        state.x, state.r = x, r
    return math.sqrt(energy_z / energy_w)


class HinfPolicy(RatePolicy):
    """Per-stream H-infinity allocator with one controller state per network."""

    name = "hinf"

    def __init__(self, min_rate: float, params: Optional[HinfParams] = None, stream_id: int = 0):
        self.min_rate = min_rate
        self.params = params or HinfParams()
        self.stream_id = stream_id
        self.states: List[HinfState] = []
        self.peak_abr: List[float] = []
        self.controller: Optional[HinfMatrixController] = None

    def _initialize(self, abrs: np.ndarray):
        total = abrs.sum()
        split = abrs / total if total > 0 else np.full(len(abrs), 1.0 / len(abrs))
        self.states = [HinfState(x=0.0, r=float(self.min_rate * share)) for share in split]
        self.peak_abr = [float(v) for v in abrs]
        if self.params.variant == 'matrix':
            self.controller = HinfMatrixController.diagonal(self.params, len(abrs))
        logger.debug(f"Stream {self.stream_id}: H-inf controller on {len(abrs)} network(s), "
                     f"gamma {self.params.gamma:.4f} (gamma* {self.params.gamma_star:.4f})")

    def _mu(self, n: int) -> float:
        if self.params.mu is not None:
            return self.params.mu
        return -self.params.mu_fraction * self.peak_abr[n]

    def allocate(self, observations: Sequence[Observation], feedback: Optional[StreamFeedback] = None,
                 now: float = 0.0) -> np.ndarray:
        abrs = np.array([obs.per_stream_abr for obs in observations], dtype=float)
        if len(self.states) != len(abrs):
            self._initialize(abrs)
            return np.array([s.r for s in self.states])

        own = np.array([s.r for s in self.states])
        if feedback is not None and len(feedback.own_rates) == len(abrs):
            own = np.asarray(feedback.own_rates, dtype=float)
        w = np.empty(len(abrs))
        for n, state in enumerate(self.states):
            self.peak_abr[n] = max(self.peak_abr[n], abrs[n])
            w[n] = measure_w(abrs[n] - own[n], now, state, self._mu(n))

        if self.controller is not None:
            _, x, r = matrix_control(self.states, self.controller, w, self.params.dt)
            for state, x_n, r_n in zip(self.states, x, r):
                state.x, state.r = float(x_n), float(r_n)
        else:
            for state, w_n in zip(self.states, w):
                _, state.x, state.r = control_step(state, self.params, float(w_n), self.params.dt)

        rates = np.array([s.r for s in self.states])
        logger.debug(f"Stream {self.stream_id} t={now:.1f}s: H-inf rates "
                     f"{np.round(rates / 1e3).tolist()} kbit/s")
        return rates
