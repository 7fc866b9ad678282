"""Exact and Monte Carlo evaluation of the estimation risks.

Every analytic quantity reduces to one primitive: the variance of a
linear functional ``tr(D^T A_hat)`` of the unbiased channel-matrix
estimator. Because ``A_hat = M X_hat Theta^T`` with independent per-cell
binomial estimates ``X_hat``, that variance is

    Var = sum_pq (M^T D Theta)_pq^2 * (1 - x_pq^2) / N,

with ``x_pq`` the exact outcome values. Correlations between entries of
``A_hat`` are handled by the functional form; no independence of the
entries themselves is assumed.

Losses (all mean squared errors, evaluated for a channel in canonical
orientation, angles zero; pass ``channel_frame`` to conjugate):

* ``analytic_f``        squared Hilbert-Schmidt error of the symmetrized
                        matrix estimate,
* ``analytic_g_tilde``  linearized contraction-parameter risk,
* ``analytic_h_tilde``  linearized angle-parameter risk,
* ``analytic_h2``       planar single-angle specialization,
* ``mc_loss``           seeded Monte Carlo of the full nonlinear chain.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import experiment
from .core import (ChannelParams, compose_channel_matrix, rotation_matrix,
                   rotation_product)
from .extraction import (DegenerateSpectrumError, _eig3_scalar, _jacobi3,
                         angle_distance, extract_angles)

_PAIRS = ((0, 1), (0, 2), (1, 2))

# Relative separation below which angle risks are undefined.
EPS_SEPARATION = 1e-9

# Monte Carlo trial block size; multiple of rng.BLOCK_ALIGN so blocks are
# counter-aligned and the merge order is fixed regardless of worker count.
_CHUNK = 4096


@dataclass(frozen=True)
class RiskReport:
    """Loss values with bounds, plus standard errors in Monte Carlo mode."""

    mode: str                      # "analytic" or "monte-carlo"
    f: float
    g: float
    h: float | None
    f_bound: float
    g_bound: float
    shots: int
    f_se: float | None = None
    g_se: float | None = None
    h_se: float | None = None
    trials: int | None = None
    seed: int | None = None


def worker_count() -> int:
    """Worker cap from PAULI_TOMO_THREADS (default: number of CPUs)."""
    cap = os.environ.get("PAULI_TOMO_THREADS")
    cpus = os.cpu_count() or 1
    if cap is None:
        return cpus
    try:
        return max(1, min(cpus, int(cap)))
    except ValueError:
        return cpus


def coefficient_matrix(theta_frame, meas_frame) -> np.ndarray:
    """9x9 matrix mapping outcome estimates to channel-matrix entries.

    Row-major pair indexing on both sides: entry ((i,j),(p,q)) equals
    M[i,p] * Theta[j,q]. Orthogonal whenever both frames are orthogonal,
    and then the entrywise square is bistochastic.
    """
    theta_frame = experiment._check_frame(theta_frame, "theta_frame")
    meas_frame = experiment._check_frame(meas_frame, "meas_frame")
    return np.kron(meas_frame, theta_frame)


def var_linear_combination(d, c, x, shots: int) -> float:
    """Variance of sum_k d_k a_hat_k for coefficient matrix ``c``.

    ``d`` is a 9-vector over row-major entry pairs, ``x`` the exact 3x3
    outcome matrix, ``shots`` the per-cell repetition count.
    """
    d = np.asarray(d, dtype=float).reshape(9)
    r = d @ np.asarray(c, dtype=float)
    w = (1.0 - np.asarray(x, dtype=float).reshape(9) ** 2) / int(shots)
    return float(np.sum(r * r * w))


def _channel_and_weights(lam, theta_frame, meas_frame, shots, channel_frame):
    v = np.eye(3) if channel_frame is None else np.asarray(channel_frame, dtype=float)
    lam = np.asarray(lam, dtype=float)
    a = (v * lam) @ v.T
    x = meas_frame.T @ a @ theta_frame
    w = (1.0 - x * x) / int(shots)
    return v, w


def _functional_variance(dmat, theta_frame, meas_frame, w) -> float:
    k = meas_frame.T @ dmat @ theta_frame
    return float(np.sum(k * k * w))


def analytic_f(lam, theta_frame, meas_frame, shots: int,
               channel_frame=None) -> float:
    """Exact expected squared Hilbert-Schmidt error of the matrix estimate.

    The reconstruction from extracted parameters equals the symmetrized
    linear estimate, so the loss decomposes into variances of diagonal
    entries and of symmetrized off-diagonal pairs.
    """
    theta_frame = experiment._check_frame(theta_frame, "theta_frame")
    meas_frame = experiment._check_frame(meas_frame, "meas_frame")
    v, w = _channel_and_weights(lam, theta_frame, meas_frame, shots, channel_frame)
    total = 0.0
    for i in range(3):
        total += _functional_variance(np.outer(v[:, i], v[:, i]),
                                      theta_frame, meas_frame, w)
    for i, j in _PAIRS:
        d = np.outer(v[:, i], v[:, j]) + np.outer(v[:, j], v[:, i])
        total += 0.5 * _functional_variance(d, theta_frame, meas_frame, w)
    return total


def analytic_g_tilde(lam, theta_frame, meas_frame, shots: int,
                     channel_frame=None) -> float:
    """Exact linearized contraction-parameter risk (sum of three variances)."""
    theta_frame = experiment._check_frame(theta_frame, "theta_frame")
    meas_frame = experiment._check_frame(meas_frame, "meas_frame")
    v, w = _channel_and_weights(lam, theta_frame, meas_frame, shots, channel_frame)
    total = 0.0
    for i in range(3):
        total += _functional_variance(np.outer(v[:, i], v[:, i]),
                                      theta_frame, meas_frame, w)
    return total


def analytic_h_tilde(lam, theta_frame, meas_frame, shots: int,
                     channel_frame=None) -> float:
    """Exact linearized angle-parameter risk.

    Requires strictly separated contractions; the (i, j) angle term is
    Var(a_hat_ij + a_hat_ji) / (4 (lam_i - lam_j)^2), with the covariance
    between the two entries carried by the functional variance.
    """
    lam = np.asarray(lam, dtype=float)
    gaps = (lam[0] - lam[1], lam[0] - lam[2], lam[1] - lam[2])
    if min(gaps) <= EPS_SEPARATION * max(1.0, float(np.max(np.abs(lam)))):
        raise DegenerateSpectrumError(
            "angle risk needs strictly separated contraction parameters")
    theta_frame = experiment._check_frame(theta_frame, "theta_frame")
    meas_frame = experiment._check_frame(meas_frame, "meas_frame")
    v, w = _channel_and_weights(lam, theta_frame, meas_frame, shots, channel_frame)
    total = 0.0
    for (i, j), gap in zip(_PAIRS, gaps):
        d = np.outer(v[:, i], v[:, j]) + np.outer(v[:, j], v[:, i])
        total += _functional_variance(d, theta_frame, meas_frame, w) / (4.0 * gap * gap)
    return float(total)


def bound_f(lam, shots: int) -> float:
    """Lower bound (6 - sum lam_i^2) / N on the matrix risk; tight at zero design."""
    return (6.0 - float(np.sum(np.square(np.asarray(lam, dtype=float))))) / int(shots)


def bound_g(lam, shots: int) -> float:
    """Lower bound (3 - sum lam_i^2) / N on the contraction risk."""
    return (3.0 - float(np.sum(np.square(np.asarray(lam, dtype=float))))) / int(shots)


def _check_planar_pair(lam1: float, lam2: float) -> None:
    if not lam1 > lam2:
        raise ValueError("planar losses need lam1 > lam2")
    if lam1 == -lam2:
        raise ValueError("planar losses are undefined at lam1 == -lam2")


def analytic_h2(lam1: float, lam2: float, tau: float, vartheta: float,
                shots: int) -> float:
    """Planar angle risk: one in-plane rotation angle, lam3 = 0 known.

    Inputs and measurements are single z-rotations; the loss is the
    (1, 2) angle term of the general machinery on the embedded problem.
    """
    lam1, lam2 = float(lam1), float(lam2)
    _check_planar_pair(lam1, lam2)
    a = np.diag([lam1, lam2, 0.0])
    th = rotation_matrix("z", vartheta)
    m = rotation_matrix("z", tau)
    x = m.T @ a @ th
    w = (1.0 - x * x) / int(shots)
    d = np.zeros((3, 3))
    d[0, 1] = d[1, 0] = 1.0
    return _functional_variance(d, th, m, w) / (4.0 * (lam1 - lam2) ** 2)


def h2_optimal_design(lam1: float, lam2: float, shots: int):
    """Closed-form optimum of the planar angle risk.

    Returns ``(tau_opt, vartheta_opt, value, regime)``. Regime 1 applies
    when (lam1+lam2)^2 >= 2 (lam1-lam2)^2 and puts both angles at pi/4;
    regime 2 returns x = arccos(-(lam1+lam2)^2 / (2 (lam1-lam2)^2)) / 4,
    with pi/2 - x an equivalent minimizer. Both branches agree on the
    regime boundary.
    """
    lam1, lam2 = float(lam1), float(lam2)
    _check_planar_pair(lam1, lam2)
    shots = int(shots)
    s2 = (lam1 + lam2) ** 2
    d2 = (lam1 - lam2) ** 2
    pref = 1.0 / (4.0 * d2) / (2.0 * shots)
    if s2 >= 2.0 * d2:
        x = math.pi / 4.0
        value = pref * (4.0 - s2)
        return x, x, value, 1
    x = 0.25 * math.acos(-s2 / (2.0 * d2))
    value = pref * (4.0 - (lam1 ** 2 + lam2 ** 2) - s2 * s2 / (8.0 * d2))
    return x, x, value, 2


def analytic_report(params: ChannelParams, design: experiment.ExperimentDesign,
                    ) -> RiskReport:
    """Analytic risks of a (possibly rotated) channel under a design.

    Rotated channels are handled by passing the channel frame through to
    the loss functionals, which is the same as counter-rotating both
    design frames.
    """
    th = experiment.build_frame(design.input_angles)
    m = experiment.build_frame(design.meas_angles)
    v = rotation_product(params.phi)
    lam = params.lam
    kwargs = dict(channel_frame=v)
    try:
        h = analytic_h_tilde(lam, th, m, design.shots, **kwargs)
    except DegenerateSpectrumError:
        h = None
    return RiskReport(mode="analytic",
                      f=analytic_f(lam, th, m, design.shots, **kwargs),
                      g=analytic_g_tilde(lam, th, m, design.shots, **kwargs),
                      h=h,
                      f_bound=bound_f(lam, design.shots),
                      g_bound=bound_g(lam, design.shots),
                      shots=design.shots)


# ---------------------------------------------------------------------------
# Monte Carlo of the full pipeline: sample counts -> estimate -> extract.
# ---------------------------------------------------------------------------

def _extract_lam_phi(s: np.ndarray):
    """Descending eigenvalues and canonical angles of a symmetric 3x3."""
    res = _eig3_scalar(s[0, 0], s[0, 1], s[0, 2], s[1, 1], s[1, 2], s[2, 2])
    if res is not None:
        lam, cols = res
        frame = np.array(cols).T
    else:
        lam_arr, frame = _jacobi3(s)
        lam = tuple(float(v) for v in lam_arr)
    phi = extract_angles(frame, lam)
    return lam, phi


def _mc_chunk(a, x, lam_true, phi_true, th, m, shots, seed, start, size,
              noise_free):
    if noise_free:
        counts = np.broadcast_to(experiment.expected_counts(x, shots),
                                 (size, 3, 3))
    else:
        counts = experiment.sample_count_block(x, shots, seed, start, size)
    xhat = 2.0 * counts.astype(float) / shots - 1.0
    ahat = np.einsum("ip,tpq,jq->tij", m, xhat, th)
    s_all = 0.5 * (ahat + ahat.transpose(0, 2, 1))
    diff = s_all - a
    f_vals = np.einsum("tij,tij->t", diff, diff)
    g_vals = np.empty(size)
    h_vals = np.empty(size)
    for t in range(size):
        lam, phi = _extract_lam_phi(s_all[t])
        g_vals[t] = ((lam[0] - lam_true[0]) ** 2
                     + (lam[1] - lam_true[1]) ** 2
                     + (lam[2] - lam_true[2]) ** 2)
        h_vals[t] = (angle_distance(phi[0], phi_true[0]) ** 2
                     + angle_distance(phi[1], phi_true[1]) ** 2
                     + angle_distance(phi[2], phi_true[2]) ** 2)
    return f_vals, g_vals, h_vals


def _mean_and_se(values) -> tuple[float, float]:
    # Compensated summation keeps the merge exact and order-independent.
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def mc_loss(params: ChannelParams, design: experiment.ExperimentDesign,
            trials: int, seed: int, noise_free: bool = False) -> RiskReport:
    """Monte Carlo estimate of all three losses over seeded trials.

    Each trial runs the full chain (sample counts, invert to a channel
    matrix, extract parameters). ``params`` must be in canonical form so
    the extracted parameters are comparable component-wise. The angle
    loss uses the extracted (not linearized) angles, compared through
    ``angle_distance``. Trial t of cell (i, j) reads stream
    ``(seed, 3*i+j)`` at position t, so results do not depend on how
    trials are chunked across workers.

    ``noise_free`` replaces sampled counts by their exact expectations
    (all losses collapse to zero); useful as a pipeline check.
    """
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    a = compose_channel_matrix(params)
    th = experiment.build_frame(design.input_angles)
    m = experiment.build_frame(design.meas_angles)
    x = experiment.forward_outcomes(a, th, m)
    shots = design.shots

    spans = [(start, min(_CHUNK, trials - start))
             for start in range(0, trials, _CHUNK)]
    args = [(a, x, params.lam, params.phi, th, m, shots, seed, start, size,
             noise_free) for start, size in spans]
    workers = min(worker_count(), len(spans))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ar: _mc_chunk(*ar), args))
    else:
        parts = [_mc_chunk(*ar) for ar in args]

    f_all = np.concatenate([p[0] for p in parts])
    g_all = np.concatenate([p[1] for p in parts])
    h_all = np.concatenate([p[2] for p in parts])
    f_mean, f_se = _mean_and_se(f_all)
    g_mean, g_se = _mean_and_se(g_all)
    h_mean, h_se = _mean_and_se(h_all)
    return RiskReport(mode="monte-carlo", f=f_mean, g=g_mean, h=h_mean,
                      f_bound=bound_f(params.lam, shots),
                      g_bound=bound_g(params.lam, shots),
                      shots=shots, f_se=f_se, g_se=g_se, h_se=h_se,
                      trials=trials, seed=int(seed))
