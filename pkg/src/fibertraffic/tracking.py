"""Spatial-domain Bayesian filtering and smoothing over virtual sensors.

The state at sensor k is the vehicle's arrival time and its spatial
derivative, [t, dt/dx]; the chain steps across sensors ordered by road
position along the vehicle's travel direction, so the transition step is the
calibrated sensor separation. A forward Kalman pass with nearest-candidate
measurement association is followed by a Rauch-Tung-Striebel backward pass,
which is exact for this linear-Gaussian chain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .types import CalibrationTable, Detection

log = logging.getLogger(__name__)

C_ROW = np.array([1.0, 0.0])


@dataclass(frozen=True)
class MotionModel:
    """Process / measurement noise of the arrival-time state chain.

    ``sigma_tddot`` is the standard deviation of the arrival time's second
    spatial derivative (s/m^2); ``sigma_z`` the measurement noise standard
    deviation (s). The innovation variance is C P C^T + sigma_z^2; setting
    ``literal_std_form`` uses C P C^T + sigma_z instead, reproducing the
    dimensionally odd published update for comparison.
    """

    sigma_tddot: float = 0.005
    sigma_z: float = 0.05
    literal_std_form: bool = False

    def __post_init__(self):
        if not (self.sigma_tddot > 0):
            raise ValueError(f"sigma_tddot must be > 0, got {self.sigma_tddot}")
        if not (self.sigma_z > 0):
            raise ValueError(f"sigma_z must be > 0, got {self.sigma_z}")

    @property
    def measurement_variance(self) -> float:
        return self.sigma_z if self.literal_std_form else self.sigma_z**2


@dataclass(frozen=True)
class StateEstimate:
    """Gaussian state [t, dt/dx] with covariance at one channel."""

    mean: np.ndarray
    cov: np.ndarray
    channel_index: int = -1

    def __post_init__(self):
        m = np.asarray(self.mean, dtype=float).reshape(2)
        p = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.all(np.isfinite(m)) or not np.all(np.isfinite(p)):
            raise ValueError("state mean/cov must be finite")
        if abs(p[0, 1] - p[1, 0]) > 1e-10 * max(1.0, abs(p[0, 1])):
            raise ValueError(f"covariance must be symmetric, got {p}")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", 0.5 * (p + p.T))

    @property
    def arrival_time(self) -> float:
        return float(self.mean[0])

    @property
    def slowness(self) -> float:
        """dt/dx in s/m; speed is its reciprocal."""
        return float(self.mean[1])


def transition_matrix(dx: float) -> np.ndarray:
    return np.array([[1.0, dx], [0.0, 1.0]])


def process_noise(dx: float, sigma_tddot: float) -> np.ndarray:
    return np.array(
        [[0.25 * dx**4, 0.5 * dx**3], [0.5 * dx**3, dx**2]]
    ) * sigma_tddot**2


def predict(state: StateEstimate, dx: float, model: MotionModel) -> StateEstimate:
    """One prediction step over a sensor separation dx > 0."""
    if not (dx > 0):
        raise ValueError(f"dx must be > 0 (exclude spooled/unsorted channels upstream), got {dx}")
    a = transition_matrix(dx)
    mean = a @ state.mean
    cov = a @ state.cov @ a.T + process_noise(dx, model.sigma_tddot)
    return StateEstimate(mean, cov, state.channel_index)


def associate(pred: StateEstimate, candidates: list[Detection], model: MotionModel,
              gate_sigmas: float = 3.0) -> Detection | None:
    """Pick the candidate with the largest predicted-arrival density.

    Equivalent to the nearest candidate in |z - t_hat|; returns None (missed)
    when there are no candidates or the best lies outside the gate.
    """
    if not candidates:
        return None
    s2 = float(pred.cov[0, 0]) + model.measurement_variance
    if not (s2 > 0):
        raise ValueError(f"innovation variance must be > 0, got {s2}")
    t_hat = pred.arrival_time
    best = min(candidates, key=lambda d: abs(d.time_s - t_hat))
    if gate_sigmas is not None and abs(best.time_s - t_hat) > gate_sigmas * np.sqrt(s2):
        return None
    return best


def update(pred: StateEstimate, z: float, model: MotionModel) -> StateEstimate:
    """Kalman measurement update with the scalar arrival-time observation."""
    p = pred.cov
    s2 = float(p[0, 0]) + model.measurement_variance
    if not (s2 > 0):
        raise ValueError(f"innovation variance must be > 0, got {s2}")
    k_gain = p @ C_ROW / s2
    mean = pred.mean + k_gain * (z - pred.arrival_time)
    cov = (np.eye(2) - np.outer(k_gain, C_ROW)) @ p
    return StateEstimate(mean, 0.5 * (cov + cov.T), pred.channel_index)


def rts_smooth(filtered: list[StateEstimate], model: MotionModel,
               dxs: list[float]) -> list[StateEstimate]:
    """Backward Rauch-Tung-Striebel pass over the filtered chain.

    ``dxs[i]`` is the separation used to predict from filtered[i-1] to
    filtered[i] (dxs[0] is unused). The last state is returned unchanged; the
    result is the exact all-measurement posterior for the linear chain.
    """
    if len(filtered) < 1:
        raise ValueError("need at least one filtered state")
    if len(dxs) != len(filtered):
        raise ValueError(f"need one dx per state, got {len(dxs)} for {len(filtered)}")
    smoothed = [None] * len(filtered)
    smoothed[-1] = filtered[-1]
    for k in range(len(filtered) - 2, -1, -1):
        f = filtered[k]
        a = transition_matrix(dxs[k + 1])
        p_pred = a @ f.cov @ a.T + process_noise(dxs[k + 1], model.sigma_tddot)
        mean_pred = a @ f.mean
        gain = _solve_gain(p_pred, a @ f.cov, dxs[k + 1])
        nxt = smoothed[k + 1]
        mean = f.mean + gain @ (nxt.mean - mean_pred)
        cov = f.cov + gain @ (nxt.cov - p_pred) @ gain.T
        smoothed[k] = StateEstimate(mean, 0.5 * (cov + cov.T), f.channel_index)
    return smoothed


def _solve_gain(p_pred: np.ndarray, ap_f: np.ndarray, dx: float) -> np.ndarray:
    # gain = P_f A^T P_pred^-1, computed as solve(P_pred, A P_f)^T
    try:
        return np.linalg.solve(p_pred, ap_f).T
    except np.linalg.LinAlgError:
        jitter = max(np.trace(p_pred), 1e-30) * 1e-12
        log.warning("singular predicted covariance at dx=%g; regularizing with %g", dx, jitter)
        return np.linalg.solve(p_pred + jitter * np.eye(2), ap_f).T
