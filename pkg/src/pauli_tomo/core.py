"""Bloch-picture primitives for qubit Pauli channels.

A Pauli channel acts on Bloch vectors as a symmetric 3x3 matrix
``A = R diag(lam) R^T`` with ``R = Rz(phi_z) Ry(phi_y) Rx(phi_x)``.
This module provides the rotation conventions, channel-matrix
composition, the complete-positivity test, state/measurement helpers,
and the canonical parameter form that makes ``(lam, phi) <-> A``
one-to-one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Shared tolerances.
EPS_CP = 1e-12   # slack at the complete-positivity boundary
EPS_DEG = 1e-9   # relative eigenvalue-degeneracy threshold
EPS_NUM = 1e-9   # reconstruction round-trip tolerance

_PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


@dataclass(frozen=True)
class ChannelParams:
    """Six channel parameters: contraction factors plus frame angles.

    ``lam`` holds the contraction factors along the three channel axes;
    in canonical form they are sorted descending. ``phi`` holds the
    (z, y, x) rotation angles of the axis frame, each in [0, pi) in
    canonical form.
    """

    lam: tuple[float, float, float]
    phi: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lam)
        phi = tuple(float(v) for v in self.phi)
        if len(lam) != 3 or len(phi) != 3:
            raise ValueError("lam and phi must each have three components")
        if not all(math.isfinite(v) for v in lam + phi):
            raise ValueError("channel parameters must be finite")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "phi", phi)


def rotation_matrix(axis: str, angle: float) -> np.ndarray:
    """Rotation by ``angle`` radians about one coordinate axis.

    Conventions: Rz(a) e1 = (cos a, sin a, 0) and Ry(a) e1 =
    (cos a, 0, sin a), i.e. the y rotation carries sin(a) in its (3,1)
    entry so that all three matrices are proper rotations.
    """
    angle = float(angle)
    if not math.isfinite(angle):
        raise ValueError(f"rotation angle must be finite, got {angle!r}")
    c, s = math.cos(angle), math.sin(angle)
    if axis == "z":
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    if axis == "y":
        return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])
    if axis == "x":
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}")


def rotation_product(angles) -> np.ndarray:
    """Rz(angles[0]) @ Ry(angles[1]) @ Rx(angles[2])."""
    az, ay, ax = (float(a) for a in angles)
    return rotation_matrix("z", az) @ rotation_matrix("y", ay) @ rotation_matrix("x", ax)


def compose_channel_matrix(params: ChannelParams) -> np.ndarray:
    """Build the 3x3 channel matrix R diag(lam) R^T from parameters.

    Defined for any finite parameters; complete positivity is not
    required here. The result is explicitly symmetrized so the exact
    symmetry survives floating-point rounding.
    """
    r = rotation_product(params.phi)
    a = (r * np.asarray(params.lam, dtype=float)) @ r.T
    return 0.5 * (a + a.T)


def cp_check(lam) -> bool:
    """True when the contraction triple describes a completely positive map.

    The test is 1 +/- lam3 >= |lam1 +/- lam2| with EPS_CP slack on the
    boundary, which also implies every |lam_i| <= 1.
    """
    l1, l2, l3 = (float(v) for v in lam)
    return ((1.0 + l3) - abs(l1 + l2) >= -EPS_CP
            and (1.0 - l3) - abs(l1 - l2) >= -EPS_CP)


def apply_channel(a, theta) -> np.ndarray:
    """Image of a Bloch vector under the channel matrix."""
    return np.asarray(a, dtype=float) @ np.asarray(theta, dtype=float)


def measurement_probability(m, theta) -> float:
    """Success probability (1 + m . theta) / 2 of a two-outcome measurement.

    ``m`` must be a unit vector; ``theta`` is the state's Bloch vector.
    """
    m = np.asarray(m, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if abs(np.linalg.norm(m) - 1.0) > 1e-9:
        raise ValueError("measurement direction must be a unit vector")
    p = 0.5 * (1.0 + float(m @ theta))
    return min(max(p, 0.0), 1.0)


def bloch_to_density(theta) -> np.ndarray:
    """2x2 density matrix of the state with Bloch vector ``theta``."""
    theta = np.asarray(theta, dtype=float)
    norm = float(np.linalg.norm(theta))
    if norm > 1.0 + 1e-12:
        raise ValueError(f"Bloch vector norm {norm:.6g} exceeds 1, not a state")
    rho = 0.5 * np.eye(2, dtype=complex)
    for t, sigma in zip(theta, _PAULI):
        rho = rho + 0.5 * t * sigma
    return rho


# ---------------------------------------------------------------------------
# Angle extraction from an eigenvector frame.
#
# The canonical domain restricts (phi_z, phi_y, phi_x) to [0, pi) and pins
# the angles that a degenerate spectrum leaves undetermined:
#   lam1 = lam2 = lam3            -> all angles 0
#   lam1 = lam2 > lam3            -> phi_x = 0 (frame fixed by the third axis)
#   lam1 > lam2 = lam3            -> phi_x = 0 (frame fixed by the first axis)
#   first axis parallel to e3     -> phi_z = 0 (phi_x absorbs the freedom)
# Helpers work on plain float triples: they sit on the per-trial hot path
# of the Monte Carlo estimators.
# ---------------------------------------------------------------------------

def _wrap_pi(a: float) -> float:
    """Reduce an angle modulo pi into [0, pi)."""
    a = math.fmod(a, math.pi)
    if a < 0.0:
        a += math.pi
    if a >= math.pi:
        a = 0.0
    return a


def _polar_axis_angles(v):
    """(phi_z, phi_y) with (cos z cos y, sin z cos y, sin y) = +/- v.

    The sign of the axis is fixed so that sin(phi_y) >= 0, which keeps
    both angles in [0, pi).
    """
    x, y, z = v
    if z < 0.0 or (z == 0.0 and (y < 0.0 or (y == 0.0 and x < 0.0))):
        x, y, z = -x, -y, -z
    pz = math.atan2(y, x)
    if pz < 0.0:
        pz += math.pi
    if pz >= math.pi:
        pz = 0.0
    cy = math.cos(pz) * x + math.sin(pz) * y
    return pz, math.atan2(z, cy)


def _third_axis_angle(pz: float, py: float, v2) -> float:
    """Angle of the second axis within the plane orthogonal to the first.

    Measured from the intersection of that plane with {z = 0}; the sign
    ambiguity of ``v2`` drops out modulo pi.
    """
    cz, sz = math.cos(pz), math.sin(pz)
    cy, sy = math.cos(py), math.sin(py)
    u = (-sz, cz, 0.0)
    w = (-sy * cz, -sy * sz, cy)
    px = math.atan2(w[0] * v2[0] + w[1] * v2[1] + w[2] * v2[2],
                    u[0] * v2[0] + u[1] * v2[1] + u[2] * v2[2])
    return _wrap_pi(px)


def _degenerate_pair_angles(v3):
    """(phi_z, phi_y) when the top two contractions coincide.

    Only the third axis is then determined; it equals
    +/- (-cos z sin y, -sin z sin y, cos y) with phi_x fixed to 0.
    """
    x, y, z = v3
    planar = math.hypot(x, y)
    if planar == 0.0:
        return 0.0, 0.0
    pz = math.atan2(-y, -x)
    if pz < 0.0:
        pz += math.pi
    if pz >= math.pi:
        pz = 0.0
    if math.cos(pz) * x + math.sin(pz) * y > 0.0:
        z = -z
    return pz, math.atan2(planar, z)


def _frame_angles(v1, v2, v3, lam, tol: float):
    """Canonical (phi_z, phi_y, phi_x) for an ordered eigenvector frame."""
    l1, l2, l3 = lam
    top_gap, bottom_gap = l1 - l2, l2 - l3
    if top_gap <= tol and bottom_gap <= tol:
        return 0.0, 0.0, 0.0
    if top_gap <= tol:
        pz, py = _degenerate_pair_angles(v3)
        return pz, py, 0.0
    pz, py = _polar_axis_angles(v1)
    if bottom_gap <= tol:
        return pz, py, 0.0
    return pz, py, _third_axis_angle(pz, py, v2)


def _degeneracy_tolerance(lam) -> float:
    return EPS_DEG * max(1.0, abs(lam[0]), abs(lam[2]))


def canonicalize(lam_sorted, frame) -> ChannelParams:
    """Canonical parameters from sorted contractions and their eigenframe.

    ``lam_sorted`` must be descending and ``frame`` must hold the matching
    unit eigenvectors as columns. Column signs are first normalized (first
    nonzero component positive, determinant forced to +1 by flipping the
    third column) so the result is deterministic; the angle extraction then
    applies the degenerate-spectrum conventions.
    """
    lam = np.asarray(lam_sorted, dtype=float)
    if lam.shape != (3,):
        raise ValueError("lam_sorted must have three components")
    if not (lam[0] >= lam[1] >= lam[2]):
        raise ValueError("contraction parameters must be sorted descending")
    f = np.array(frame, dtype=float)
    if f.shape != (3, 3) or np.max(np.abs(f.T @ f - np.eye(3))) > 1e-9:
        raise ValueError("frame columns must be orthonormal")
    f = fix_frame_signs(f)
    tol = _degeneracy_tolerance(lam)
    phi = _frame_angles(tuple(f[:, 0]), tuple(f[:, 1]), tuple(f[:, 2]),
                        tuple(lam), tol)
    return ChannelParams(tuple(lam), phi)


def fix_frame_signs(frame: np.ndarray) -> np.ndarray:
    """Deterministic sign convention for an orthonormal column frame.

    Each column gets its first nonzero component made positive; the
    determinant is then forced to +1 by flipping the third column.
    """
    f = np.array(frame, dtype=float)
    for k in range(3):
        col = f[:, k]
        for comp in col:
            if comp != 0.0:
                if comp < 0.0:
                    f[:, k] = -col
                break
    if np.linalg.det(f) < 0.0:
        f[:, 2] = -f[:, 2]
    return f


def random_canonical_params(rng: np.random.Generator,
                            min_gap: float = 1e-2,
                            angle_margin: float = 1e-2) -> ChannelParams:
    """Draw channel parameters from the interior of the canonical domain.

    Contractions are uniform over the completely positive region with both
    spectral gaps at least ``min_gap``; angles stay ``angle_margin`` away
    from the gimbal point phi_y = pi/2 where phi_z becomes ill-conditioned.
    The defaults keep eigenvector conditioning well inside what double
    precision can invert to 1e-9 per component; boundary conventions are
    exercised by dedicated tests instead.
    """
    while True:
        lam = np.sort(rng.uniform(-1.0, 1.0, size=3))[::-1]
        if cp_check(lam) and lam[0] - lam[1] >= min_gap and lam[1] - lam[2] >= min_gap:
            break
    while True:
        phi = rng.uniform(0.0, math.pi, size=3)
        if abs(phi[1] - math.pi / 2) >= angle_margin:
            break
    return ChannelParams(tuple(lam), tuple(phi))
