"""Small dense tensor algebra for 3x3 mechanics and 6x6 Voigt elasticity.

Conventions used throughout the package:

* Voigt component order is (11, 22, 33, 23, 13, 12), zero-based.
* Strain vectors carry engineering shears (2*e23, 2*e13, 2*e12); stress
  vectors carry plain components.
* A rotation is described by three Tait-Bryan angles (alpha, beta, gamma)
  about the fixed x, y, z axes, composed as R = Rx(alpha) Ry(beta) Rz(gamma).
  Every rotation helper in this module agrees with that single convention;
  the 6x6 stress/strain rotation of `build_stress_rotation` equals the
  Voigt form of C' = R C R^T verified by `tensor_rotate_oracle`.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "VOIGT_PAIRS",
    "stress_to_voigt",
    "voigt_to_stress",
    "strain_to_voigt",
    "voigt_to_strain",
    "stiffness_voigt_to_tensor",
    "stiffness_tensor_to_voigt",
    "rotation_matrix_from_angles",
    "angles_from_rotation_matrix",
    "build_stress_rotation",
    "build_strain_rotation",
    "rotate_stiffness",
    "tensor_rotate_oracle",
    "polar_decompose",
    "mat_fourth_order",
    "unmat_fourth_order",
    "vec9",
    "unvec9",
]

# (row, col) tensor indices backing each Voigt slot.
VOIGT_PAIRS = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))


def stress_to_voigt(sig):
    """Pack a symmetric 3x3 stress into the 6-vector (11,22,33,23,13,12)."""
    sig = np.asarray(sig, dtype=float)
    return np.array([sig[i, j] for i, j in VOIGT_PAIRS])


def voigt_to_stress(v):
    v = np.asarray(v, dtype=float)
    s = np.empty((3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        s[i, j] = v[k]
        s[j, i] = v[k]
    return s


def strain_to_voigt(eps):
    """Pack a symmetric 3x3 strain into Voigt form with doubled shears."""
    eps = np.asarray(eps, dtype=float)
    v = np.array([eps[i, j] for i, j in VOIGT_PAIRS])
    v[3:] *= 2.0
    return v


def voigt_to_strain(v):
    v = np.asarray(v, dtype=float)
    e = np.empty((3, 3))
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        val = v[k] if k < 3 else 0.5 * v[k]
        e[i, j] = val
        e[j, i] = val
    return e


def stiffness_voigt_to_tensor(C):
    """Expand a 6x6 Voigt stiffness to the full 3x3x3x3 tensor."""
    C = np.asarray(C, dtype=float)
    full = np.empty((3, 3, 3, 3))
    index = np.empty((3, 3), dtype=int)
    for k, (i, j) in enumerate(VOIGT_PAIRS):
        index[i, j] = k
        index[j, i] = k
    for i in range(3):
        for j in range(3):
            for k in range(3):
                for l in range(3):
                    full[i, j, k, l] = C[index[i, j], index[k, l]]
    return full


def stiffness_tensor_to_voigt(T):
    """Contract a minor-symmetric fourth-order tensor back to 6x6 Voigt."""
    T = np.asarray(T, dtype=float)
    C = np.empty((6, 6))
    for a, (i, j) in enumerate(VOIGT_PAIRS):
        for b, (k, l) in enumerate(VOIGT_PAIRS):
            C[a, b] = T[i, j, k, l]
    return C


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_matrix_from_angles(angles):
    """3x3 rotation R = Rx(alpha) Ry(beta) Rz(gamma); orthogonal, det +1."""
    a, b, g = angles
    return _rx(a) @ _ry(b) @ _rz(g)


def angles_from_rotation_matrix(R):
    """Recover (alpha, beta, gamma) with R = Rx(a) Ry(b) Rz(g).

    beta is taken in [-pi/2, pi/2]; near the gimbal singularity
    (|R[0,2]| = 1) gamma is set to zero and alpha absorbs the remainder.
    """
    R = np.asarray(R, dtype=float)
    sb = np.clip(R[0, 2], -1.0, 1.0)
    b = np.arcsin(sb)
    if abs(sb) < 1.0 - 1e-12:
        a = np.arctan2(-R[1, 2], R[2, 2])
        g = np.arctan2(-R[0, 1], R[0, 0])
    else:
        a = np.arctan2(R[1, 0], R[1, 1])
        g = 0.0
    return np.array([a, b, g])


# In-plane and out-of-plane blocks of the 6x6 Voigt rotation about one axis.
# The sign of the angle fed to each block is chosen so that the assembled
# matrix represents the active map sigma -> R sigma R^T; for the y axis the
# anti-cyclic (3,1) index pair flips the effective sign relative to x and z.


def _in_plane_stress(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([
        [c * c, s * s, 2 * s * c],
        [s * s, c * c, -2 * s * c],
        [-s * c, s * c, c * c - s * s],
    ])


def _in_plane_strain(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([
        [c * c, s * s, s * c],
        [s * s, c * c, -s * c],
        [-2 * s * c, 2 * s * c, c * c - s * s],
    ])


def _out_of_plane(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s], [s, c]])


# (fixed Voigt slot, in-plane slots, out-of-plane slots, block angle sign)
_AXIS_BLOCKS = {
    "x": (0, (1, 2, 3), (4, 5), -1.0),
    "y": (1, (0, 2, 4), (3, 5), +1.0),
    "z": (2, (0, 1, 5), (3, 4), -1.0),
}


def _axis_rotation(axis, angle, kind):
    fixed, inp, outp, sign = _AXIS_BLOCKS[axis]
    in_block = _in_plane_stress(sign * angle) if kind == "stress" \
        else _in_plane_strain(sign * angle)
    out_block = _out_of_plane(sign * angle)
    M = np.zeros((6, 6))
    M[fixed, fixed] = 1.0
    M[np.ix_(inp, inp)] = in_block
    M[np.ix_(outp, outp)] = out_block
    return M


def build_stress_rotation(angles):
    """6x6 matrix rotating Voigt stress vectors by R(angles)."""
    a, b, g = angles
    return (_axis_rotation("x", a, "stress")
            @ _axis_rotation("y", b, "stress")
            @ _axis_rotation("z", g, "stress"))


def build_strain_rotation(angles):
    """6x6 matrix rotating engineering-shear Voigt strain vectors."""
    a, b, g = angles
    return (_axis_rotation("x", a, "strain")
            @ _axis_rotation("y", b, "strain")
            @ _axis_rotation("z", g, "strain"))


def rotate_stiffness(C, angles):
    """Rotate a 6x6 Voigt stiffness by the Tait-Bryan angles.

    Uses R1 C R2^{-1} with R1/R2 the stress/strain rotations; since
    R2 = R1^{-T}, the congruence reduces to R1 C R1^T, which keeps the
    result exactly symmetric for symmetric input.
    """
    R1 = build_stress_rotation(angles)
    return R1 @ np.asarray(C, dtype=float) @ R1.T


def tensor_rotate_oracle(C, R):
    """Rotate a stiffness the slow, unambiguous way.

    Expands C to a fourth-order tensor, applies the full index rotation
    C'_{ijkl} = R_ia R_jb R_kc R_ld C_abcd, and re-packs. Serves as the
    independent reference for `rotate_stiffness`.
    """
    R = np.asarray(R, dtype=float)
    if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-10:
        raise ValueError("rotation matrix is not orthogonal")
    T = stiffness_voigt_to_tensor(C)
    Tr = np.einsum("ia,jb,kc,ld,abcd->ijkl", R, R, R, R, T)
    return stiffness_tensor_to_voigt(Tr)


def polar_decompose(F):
    """Split F = R U into a rotation and a symmetric positive stretch.

    U comes from the eigendecomposition of F^T F; R = F U^{-1}, followed
    by one Newton orthogonality step (which squares the orthogonality
    error left by ill-conditioned stretches). Raises ValueError for
    singular or inverted deformation gradients.
    """
    F = np.asarray(F, dtype=float)
    if np.linalg.det(F) <= 0.0:
        raise ValueError("non-invertible deformation")
    evals, evecs = np.linalg.eigh(F.T @ F)
    if evals[0] < 1e-14 * max(evals[-1], 1.0):
        raise ValueError("non-invertible deformation")
    sq = np.sqrt(evals)
    Uinv = (evecs / sq) @ evecs.T
    R = F @ Uinv
    R = 0.5 * (R + np.linalg.inv(R).T)
    U = R.T @ F
    U = 0.5 * (U + U.T)
    return R, U


def mat_fourth_order(T):
    """Map a 3x3x3x3 tensor to 9x9 with rows p = i + 3j, cols q = k + 3l."""
    T = np.asarray(T, dtype=float)
    return T.transpose(1, 0, 3, 2).reshape(9, 9)


def unmat_fourth_order(M):
    """Inverse of `mat_fourth_order`."""
    M = np.asarray(M, dtype=float)
    return M.reshape(3, 3, 3, 3).transpose(1, 0, 3, 2)


def vec9(A):
    """Column-major 9-vector of a 3x3 matrix, entry p = A[i, j], p = i + 3j."""
    return np.asarray(A, dtype=float).reshape(3, 3).flatten(order="F")


def unvec9(v):
    return np.asarray(v, dtype=float).reshape(3, 3, order="F")
