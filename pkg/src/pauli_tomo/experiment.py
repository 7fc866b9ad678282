"""Forward simulation of the tomography experiment and the linear estimators.

The experiment sends three mutually orthogonal pure input states through
the channel and measures each output along three orthogonal directions,
N times per (measurement, input) pair. Everything downstream works with
the 3x3 outcome matrix ``X = M^T A Theta`` whose entries are the expected
values of the per-cell +/-1 measurement record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .core import rotation_product

# Paired-rotation design ranges: first two angles in [0, pi), third in [0, pi/2).
_RANGES = (math.pi, math.pi, math.pi / 2)

# Clamp slack for outcome entries that stray outside [-1, 1] by rounding.
_OUTCOME_SLACK = 1e-9


@dataclass(frozen=True)
class ExperimentDesign:
    """Input-frame angles, measurement-frame angles, and shots per cell."""

    input_angles: tuple[float, float, float]
    meas_angles: tuple[float, float, float]
    shots: int

    def __post_init__(self):
        object.__setattr__(self, "input_angles",
                           tuple(float(a) for a in self.input_angles))
        object.__setattr__(self, "meas_angles",
                           tuple(float(a) for a in self.meas_angles))
        object.__setattr__(self, "shots", int(self.shots))
        for angles in (self.input_angles, self.meas_angles):
            _check_angles(angles)
        if self.shots < 1:
            raise ValueError("shots must be at least 1")


@dataclass(frozen=True)
class CountsMatrix:
    """Per-cell success counts of one simulated measurement record."""

    n: np.ndarray          # (3, 3) int64, n[i, j] <= shots
    shots: int
    seed: int


def _check_angles(angles) -> None:
    if len(angles) != 3:
        raise ValueError("a design needs exactly three angles")
    for a, top in zip(angles, _RANGES):
        if not math.isfinite(a) or not (0.0 <= a < top):
            raise ValueError(
                f"design angle {a!r} outside [0, {top:.6g})")


def build_frame(angles) -> np.ndarray:
    """Orthogonal frame Rz Ry Rx from design angles (range-checked)."""
    angles = tuple(float(a) for a in angles)
    _check_angles(angles)
    return rotation_product(angles)


def _check_frame(f: np.ndarray, name: str) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (3, 3) or np.max(np.abs(f.T @ f - np.eye(3))) > 1e-9:
        raise ValueError(f"{name} must be an orthogonal 3x3 frame")
    return f


def forward_outcomes(a, theta_frame, meas_frame) -> np.ndarray:
    """Exact outcome matrix X = M^T A Theta."""
    theta_frame = _check_frame(theta_frame, "theta_frame")
    meas_frame = _check_frame(meas_frame, "meas_frame")
    return meas_frame.T @ np.asarray(a, dtype=float) @ theta_frame


def _success_probabilities(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (3, 3):
        raise ValueError("outcome matrix must be 3x3")
    if np.max(np.abs(x)) > 1.0 + _OUTCOME_SLACK:
        raise ValueError("outcome entries must lie in [-1, 1]")
    return np.clip(0.5 * (1.0 + x), 0.0, 1.0)


def sample_counts(x, shots: int, seed: int) -> CountsMatrix:
    """One seeded measurement record: nine independent binomial draws.

    Cell (i, j) draws from the stream ``(seed, 3*i + j)`` at position 0,
    so this record coincides with trial 0 of any Monte Carlo run that
    uses the same seed (later trials sit at later stream positions).
    """
    shots = int(shots)
    if shots < 1:
        raise ValueError("shots must be at least 1")
    p = _success_probabilities(x)
    n = np.empty((3, 3), dtype=np.int64)
    for i in range(3):
        for j in range(3):
            n[i, j] = rng.binomial_draws(seed, (3 * i + j,), shots,
                                         float(p[i, j]), 1)[0]
    return CountsMatrix(n=n, shots=shots, seed=int(seed))


def sample_count_block(x, shots: int, seed: int, start: int,
                       size: int) -> np.ndarray:
    """Counts for trials [start, start+size) of every cell, shape (size, 3, 3).

    ``start`` must be a multiple of ``rng.BLOCK_ALIGN``; blocks with
    different starts reproduce the sequential trial sequence exactly, so
    they may be generated in parallel.
    """
    p = _success_probabilities(x)
    out = np.empty((size, 3, 3), dtype=np.int64)
    for i in range(3):
        for j in range(3):
            out[:, i, j] = rng.binomial_draws(seed, (3 * i + j,), int(shots),
                                              float(p[i, j]), size, start=start)
    return out


def expected_counts(x, shots: int) -> np.ndarray:
    """Noise-free expected counts N (1 + x) / 2 (generally non-integer)."""
    return int(shots) * _success_probabilities(x)


def estimate_x(counts, shots: int) -> np.ndarray:
    """Unbiased per-cell outcome estimate 2 n / N - 1."""
    n = counts.n if isinstance(counts, CountsMatrix) else np.asarray(counts)
    return 2.0 * np.asarray(n, dtype=float) / int(shots) - 1.0


def estimate_channel_matrix(x_hat, theta_frame, meas_frame) -> np.ndarray:
    """Linear-inversion channel-matrix estimate M X_hat Theta^T."""
    theta_frame = _check_frame(theta_frame, "theta_frame")
    meas_frame = _check_frame(meas_frame, "meas_frame")
    return meas_frame @ np.asarray(x_hat, dtype=float) @ theta_frame.T
