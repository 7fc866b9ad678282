"""Inverse map from an estimated channel matrix back to the six parameters.

The chain is: symmetrize the raw estimate, eigendecompose the symmetric
part, sort eigenvalues descending, and read the frame angles off the
eigenvectors using the canonical conventions of :mod:`pauli_tomo.core`.
A first-order linearization of the same map around the true channel is
provided for the variance analysis.

The 3x3 symmetric eigensolver is analytic (trigonometric solution of
the characteristic cubic, one Newton polish per root, eigenvectors from
cross products of the shifted matrix rows) with a cyclic-Jacobi fallback
once eigenvalues get close enough that the cross products lose accuracy.
Scalar math is used throughout because the Monte Carlo loop calls this
once per trial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (EPS_DEG, _degeneracy_tolerance, _frame_angles, cp_check,
                   fix_frame_signs)

# Gap below which the analytic eigenvector construction defers to Jacobi.
_JACOBI_GAP = 1e-6
# Residual guard: redo with Jacobi if ||S v - lam v|| exceeds this.
_RESIDUAL_GUARD = 1e-11


class DegenerateSpectrumError(ValueError):
    """Raised when an operation needs strictly separated contractions."""


@dataclass(frozen=True)
class ParamEstimate:
    """Extracted parameters: contractions (descending), angles, eigenframe."""

    lam_hat: tuple[float, float, float]
    phi_hat: tuple[float, float, float]
    frame: np.ndarray
    cp_valid: bool


@dataclass(frozen=True)
class DerivativeTable:
    """Nonzero first derivatives of the extraction map at a diagonal channel.

    Diagonal entries feed the contraction estimates one-to-one; the
    symmetrized off-diagonal entries feed the angles with gain
    1 / (lam_i - lam_j) for the (i, j) pair.
    """

    dlam: tuple[float, float, float]
    dphi_z: float
    dphi_y: float
    dphi_x: float


def symmetrize(a_hat) -> np.ndarray:
    """Orthogonal projection (A + A^T) / 2 onto symmetric matrices."""
    a = np.asarray(a_hat, dtype=float)
    return 0.5 * (a + a.T)


def angle_distance(phi_hat: float, phi: float) -> float:
    """Distance between axis angles modulo pi, in [0, pi/2]."""
    d = abs(math.fmod(float(phi_hat) - float(phi), math.pi))
    return min(d, math.pi - d)


def _char_roots(a11, a12, a13, a22, a23, a33):
    """Descending eigenvalues of a symmetric 3x3 via the trigonometric cubic."""
    q = (a11 + a22 + a33) / 3.0
    p1 = a12 * a12 + a13 * a13 + a23 * a23
    b11, b22, b33 = a11 - q, a22 - q, a33 - q
    p2 = b11 * b11 + b22 * b22 + b33 * b33 + 2.0 * p1
    if p2 <= 0.0:
        return q, q, q
    p = math.sqrt(p2 / 6.0)
    detb = (b11 * (b22 * b33 - a23 * a23)
            - a12 * (a12 * b33 - a23 * a13)
            + a13 * (a12 * a23 - b22 * a13))
    r = detb / (2.0 * p * p * p)
    r = max(-1.0, min(1.0, r))
    phi = math.acos(r) / 3.0
    l1 = q + 2.0 * p * math.cos(phi)
    l3 = q + 2.0 * p * math.cos(phi + 2.0 * math.pi / 3.0)
    return l1, (3.0 * q - l1 - l3), l3


def _newton_polish(lam, a11, a12, a13, a22, a23, a33):
    """One Newton step on det(S - x I) per root."""
    tr = a11 + a22 + a33
    m2 = (a11 * a22 - a12 * a12) + (a11 * a33 - a13 * a13) + (a22 * a33 - a23 * a23)
    det = (a11 * (a22 * a33 - a23 * a23)
           - a12 * (a12 * a33 - a23 * a13)
           + a13 * (a12 * a23 - a22 * a13))
    out = []
    for x in lam:
        fx = ((-x + tr) * x - m2) * x + det
        dfx = (-3.0 * x + 2.0 * tr) * x - m2
        if abs(dfx) > 1e-30:
            x = x - fx / dfx
        out.append(x)
    return tuple(out)


def _null_direction(b):
    """Largest cross product of row pairs of a rank-2 symmetric matrix."""
    rows = ((b[0], b[1]), (b[0], b[2]), (b[1], b[2]))
    best, best_norm2 = None, -1.0
    for r, s in rows:
        c = (r[1] * s[2] - r[2] * s[1],
             r[2] * s[0] - r[0] * s[2],
             r[0] * s[1] - r[1] * s[0])
        n2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
        if n2 > best_norm2:
            best, best_norm2 = c, n2
    return best, best_norm2


def _jacobi3(s: np.ndarray):
    """Cyclic Jacobi diagonalization; robust near degenerate spectra."""
    a = np.array(s, dtype=float)
    v = np.eye(3)
    scale = max(1.0, np.max(np.abs(a)))
    for _ in range(60):
        off = math.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off <= 1e-15 * scale:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            sn = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = sn
            rot[q, p] = -sn
            a = rot.T @ a @ rot
            v = v @ rot
    order = np.argsort(np.diag(a))[::-1]
    return np.diag(a)[order], v[:, order]


def _eig3_scalar(a11, a12, a13, a22, a23, a33):
    """Eigenvalues (descending) and unit eigenvector columns as tuples."""
    lam = _char_roots(a11, a12, a13, a22, a23, a33)
    lam = _newton_polish(lam, a11, a12, a13, a22, a23, a33)
    l1, l2, l3 = lam
    scale = max(1.0, abs(l1), abs(l3))
    if min(l1 - l2, l2 - l3) < _JACOBI_GAP * scale:
        return None
    cols = []
    for x in lam:
        b = ((a11 - x, a12, a13), (a12, a22 - x, a23), (a13, a23, a33 - x))
        c, n2 = _null_direction(b)
        if n2 <= 0.0:
            return None
        n = math.sqrt(n2)
        cols.append((c[0] / n, c[1] / n, c[2] / n))
    # Re-orthogonalize: v2 against v1, v3 from the cross product (det +1).
    v1, v2 = cols[0], cols[1]
    d = v1[0] * v2[0] + v1[1] * v2[1] + v1[2] * v2[2]
    w = (v2[0] - d * v1[0], v2[1] - d * v1[1], v2[2] - d * v1[2])
    wn = math.sqrt(w[0] ** 2 + w[1] ** 2 + w[2] ** 2)
    if wn == 0.0:
        return None
    v2 = (w[0] / wn, w[1] / wn, w[2] / wn)
    v3 = (v1[1] * v2[2] - v1[2] * v2[1],
          v1[2] * v2[0] - v1[0] * v2[2],
          v1[0] * v2[1] - v1[1] * v2[0])
    return lam, (v1, v2, v3)


def _max_residual(s, lam, frame) -> float:
    r = s @ frame - frame * np.asarray(lam)
    return float(np.max(np.abs(r)))


def eig3_symmetric(s):
    """Eigen-decomposition of a symmetric 3x3 matrix.

    Returns ``(lam, frame)`` with eigenvalues sorted descending and unit
    eigenvector columns forming a right-handed, sign-normalized frame.
    Raises ValueError when the input is not symmetric to 1e-12.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if np.max(np.abs(s - s.T)) > 1e-12:
        raise ValueError("matrix is not symmetric to 1e-12")

    result = _eig3_scalar(s[0, 0], s[0, 1], s[0, 2], s[1, 1], s[1, 2], s[2, 2])
    if result is not None:
        lam, cols = result
        frame = np.array(cols).T
        if _max_residual(s, lam, frame) > _RESIDUAL_GUARD:
            result = None
    if result is None:
        lam_arr, frame = _jacobi3(s)
        lam = tuple(float(v) for v in lam_arr)
    frame = fix_frame_signs(frame)
    return np.array(lam, dtype=float), frame


def extract_angles(frame, lam_hat) -> tuple[float, float, float]:
    """Canonical frame angles for eigenvectors ordered by descending value."""
    f = np.asarray(frame, dtype=float)
    lam = tuple(float(v) for v in lam_hat)
    tol = _degeneracy_tolerance(lam)
    return _frame_angles(tuple(f[:, 0]), tuple(f[:, 1]), tuple(f[:, 2]), lam, tol)


def extract_params(a_hat) -> ParamEstimate:
    """Full extraction: symmetrize, eigendecompose, read angles.

    Eigenvalues outside [-1, 1] (possible at small shot counts) are
    returned as-is with ``cp_valid`` set to False; no projection onto the
    physical region is attempted.
    """
    s = symmetrize(a_hat)
    lam, frame = eig3_symmetric(s)
    phi = extract_angles(frame, lam)
    return ParamEstimate(lam_hat=tuple(float(v) for v in lam),
                         phi_hat=phi, frame=frame,
                         cp_valid=cp_check(lam))


def dT_components(lam) -> DerivativeTable:
    """Nonzero derivatives of the extraction map at a diagonal channel."""
    l1, l2, l3 = (float(v) for v in lam)
    tol = _degeneracy_tolerance((l1, l2, l3))
    if l1 - l2 <= tol or l2 - l3 <= tol:
        raise DegenerateSpectrumError(
            f"contractions must be separated by more than {EPS_DEG} (relative)")
    return DerivativeTable(dlam=(1.0, 1.0, 1.0),
                           dphi_z=1.0 / (l1 - l2),
                           dphi_y=1.0 / (l1 - l3),
                           dphi_x=1.0 / (l2 - l3))


def linearized_estimates(a_true, a_hat):
    """First-order contraction and angle estimates around the true channel.

    ``a_true`` must be diagonal (rotate the problem first if it is not)
    with a strictly separated, descending spectrum. Returns
    ``(lam_tilde, phi_tilde)`` arrays.
    """
    a = np.asarray(a_true, dtype=float)
    if np.max(np.abs(a - np.diag(np.diag(a)))) > 1e-9:
        raise ValueError("a_true must be diagonal; rotate the frames first")
    lam = np.diag(a)
    table = dT_components(lam)
    ds = symmetrize(np.asarray(a_hat, dtype=float) - a)
    lam_tilde = lam + np.diag(ds)
    phi_tilde = np.array([ds[0, 1] * table.dphi_z,
                          ds[0, 2] * table.dphi_y,
                          ds[1, 2] * table.dphi_x])
    return lam_tilde, phi_tilde
