"""Stiffness homogenization through the binary material network.

The forward pass rotates each material node's stiffness by its orientation
angles and then merges siblings level by level with the two-phase laminate
operator, using the learned equilibrium direction at every tree node. No
rotation is applied anywhere except at the material nodes, so orientation
stays decoupled from the equilibrium directions.

`_forward` is written against the `autodiff` helpers and therefore runs
either on plain ndarrays (prediction, oracles) or on `Var` nodes
(training gradients). `laminate_oracle` is an intentionally independent
re-derivation of the two-layer solution used to validate `h2`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import tensors
from .network import direction_vector, interaction_index, node_weight

__all__ = [
    "DegenerateInterfaceError",
    "PhaseAssignment",
    "assign_stiffness",
    "h2",
    "laminate_oracle",
    "homogenize",
    "homogenize_leaf_stiffness",
]


class DegenerateInterfaceError(ValueError):
    """The laminate interface system is singular (void-like in N)."""


@dataclass(frozen=True)
class PhaseAssignment:
    """Which phase stiffness each material node carries.

    mode "single": every node gets `phase1`. mode "two-phase": even node
    indices get `phase1`, odd indices get `phase2` (units GPa offline).
    """

    mode: str
    phase1: np.ndarray
    phase2: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("single", "two-phase"):
            raise ValueError(f"unknown assignment mode {self.mode!r}")
        object.__setattr__(self, "phase1", _check_stiffness(self.phase1))
        if self.mode == "two-phase":
            if self.phase2 is None:
                raise ValueError("two-phase assignment requires phase2")
            object.__setattr__(self, "phase2", _check_stiffness(self.phase2))


def _check_stiffness(C):
    C = np.asarray(C, dtype=float)
    if C.shape != (6, 6):
        raise ValueError("stiffness must be 6x6")
    scale = max(np.abs(C).max(), 1.0)
    if np.abs(C - C.T).max() > 1e-12 * scale:
        raise ValueError("stiffness must be symmetric")
    return 0.5 * (C + C.T)


def assign_stiffness(topology, assignment):
    """Per-node stiffness array of shape (n_nodes, 6, 6)."""
    n = topology.n_nodes
    out = np.empty((n, 6, 6))
    out[:] = assignment.phase1
    if assignment.mode == "two-phase":
        out[1::2] = assignment.phase2
    return out


# Constant placement patterns of the 6x3 interface matrix H(N); H a equals
# the Voigt strain (engineering shears) of sym(a x N).
_H0 = np.zeros((6, 3)); _H0[0, 0] = 1.0; _H0[4, 2] = 1.0; _H0[5, 1] = 1.0
_H1 = np.zeros((6, 3)); _H1[1, 1] = 1.0; _H1[3, 2] = 1.0; _H1[5, 0] = 1.0
_H2 = np.zeros((6, 3)); _H2[2, 2] = 1.0; _H2[3, 1] = 1.0; _H2[4, 0] = 1.0


def interface_matrix(normal):
    """H(N) with rows in the (11,22,33,23,13,12) Voigt order."""
    n = np.asarray(normal, dtype=float)
    return n[0] * _H0 + n[1] * _H1 + n[2] * _H2


def _interface_matrix_ad(normal):
    # normal has shape (..., 3); result (..., 6, 3)
    n0 = ad.reshape(normal[..., 0], normal.shape[:-1] + (1, 1))
    n1 = ad.reshape(normal[..., 1], normal.shape[:-1] + (1, 1))
    n2 = ad.reshape(normal[..., 2], normal.shape[:-1] + (1, 1))
    return n0 * _H0 + n1 * _H1 + n2 * _H2


def h2(C0, C1, f0, f1, normal):
    """Merge two stiffnesses sharing an interface with unit normal N.

    Returns f0 C0 + f1 C1 - f0 f1 (C0 - C1) Q (C0 - C1) with
    Q = H S^{-1} H^T and S = H^T (f1 C0 + f0 C1) H. Raises
    DegenerateInterfaceError when S is numerically singular.
    """
    C0 = np.asarray(C0, dtype=float)
    C1 = np.asarray(C1, dtype=float)
    if abs(f0 + f1 - 1.0) > 1e-12 or f0 < 0 or f1 < 0:
        raise ValueError("volume fractions must be nonnegative and sum to 1")
    H = interface_matrix(normal)
    S = H.T @ (f1 * C0 + f0 * C1) @ H
    sv = np.linalg.svd(S, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegenerateInterfaceError("degenerate interface")
    Q = H @ np.linalg.solve(S, H.T)
    dC = C0 - C1
    return f0 * C0 + f1 * C1 - (f0 * f1) * (dC @ Q @ dC)


def laminate_oracle(C0, C1, f0, normal):
    """Two-layer effective stiffness derived from first principles.

    For each of the six unit macroscopic strains, solves the 3-unknown
    system given by traction continuity (sig0 - sig1) . N = 0 with the
    phase strains differing by a symmetrized rank-one jump a x N while the
    volume average stays fixed, then assembles the stress columns. Shares
    no code with `h2` beyond Voigt packing.
    """
    C0 = np.asarray(C0, dtype=float)
    C1 = np.asarray(C1, dtype=float)
    N = np.asarray(normal, dtype=float)
    f1 = 1.0 - f0

    def traction_gap(eps_bar, a):
        jump = 0.5 * (np.outer(a, N) + np.outer(N, a))
        e0 = eps_bar + f1 * jump
        e1 = eps_bar - f0 * jump
        s0 = tensors.voigt_to_stress(C0 @ tensors.strain_to_voigt(e0))
        s1 = tensors.voigt_to_stress(C1 @ tensors.strain_to_voigt(e1))
        return (s0 - s1) @ N, s0, s1

    Cbar = np.empty((6, 6))
    for col in range(6):
        v = np.zeros(6)
        v[col] = 1.0
        eps_bar = tensors.voigt_to_strain(v)
        g0, _, _ = traction_gap(eps_bar, np.zeros(3))
        M = np.empty((3, 3))
        for i in range(3):
            gi, _, _ = traction_gap(eps_bar, np.eye(3)[i])
            M[:, i] = gi - g0
        try:
            a = np.linalg.solve(M, -g0)
        except np.linalg.LinAlgError as exc:
            raise DegenerateInterfaceError("degenerate interface") from exc
        _, s0, s1 = traction_gap(eps_bar, a)
        Cbar[:, col] = tensors.stress_to_voigt(f0 * s0 + f1 * s1)
    return Cbar


# Five independent angle features spanning every entry of the 6x6 axis
# rotation blocks: [1, cos 2t, sin 2t, cos t, sin t].
_FEATURE_ANGLES = np.array([0.31, 0.97, 1.73, 2.59, 4.11])


def _feature_row(t):
    return np.array([1.0, np.cos(2 * t), np.sin(2 * t), np.cos(t), np.sin(t)])


def _axis_basis(axis, kind):
    F = np.stack([_feature_row(t) for t in _FEATURE_ANGLES])
    samples = np.stack([tensors._axis_rotation(axis, t, kind)
                        for t in _FEATURE_ANGLES])
    return np.einsum("sk,kij->sij", np.linalg.inv(F), samples)


_STRESS_BASIS = {axis: _axis_basis(axis, "stress") for axis in "xyz"}


def _axis_rotation_ad(axis, angles):
    """Per-node 6x6 stress rotations about one axis, shape (n, 6, 6)."""
    basis = _STRESS_BASIS[axis]
    c1, s1 = ad.cos(angles), ad.sin(angles)
    c2, s2 = ad.cos(angles * 2.0), ad.sin(angles * 2.0)
    shape = ad.value_of(angles).shape + (1, 1)
    out = np.broadcast_to(basis[0], shape[:-2] + (6, 6))
    out = out + ad.reshape(c2, shape) * basis[1]
    out = out + ad.reshape(s2, shape) * basis[2]
    out = out + ad.reshape(c1, shape) * basis[3]
    out = out + ad.reshape(s1, shape) * basis[4]
    return out


def node_stress_rotations(alpha, beta, gamma):
    """Batched 6x6 stress rotations R1 for per-node angle arrays."""
    X = _axis_rotation_ad("x", alpha)
    Y = _axis_rotation_ad("y", beta)
    Z = _axis_rotation_ad("z", gamma)
    return X @ Y @ Z


def homogenize_leaf_stiffness(leaf_stiffness, z, alpha, beta, gamma,
                              theta, phi, depth):
    """Core forward pass shared by prediction and training.

    leaf_stiffness has shape (..., 2^depth, 6, 6) where leading axes (if
    any) are batch axes; parameter arrays follow the `ParameterSet`
    layout. Returns the root stiffness of shape (..., 6, 6).
    """
    R1 = node_stress_rotations(alpha, beta, gamma)
    C = R1 @ leaf_stiffness @ ad.transpose(R1)
    w = node_weight(z)
    for level in range(depth - 1, -1, -1):
        C0 = C[..., 0::2, :, :]
        C1 = C[..., 1::2, :, :]
        w0 = w[0::2]
        w1 = w[1::2]
        total = w0 + w1
        f0 = w0 / total
        f1 = w1 / total
        j0 = interaction_index(level, 0)
        j1 = interaction_index(level + 1, 0)
        normals = direction_vector(theta[j0:j1], phi[j0:j1])
        H = _interface_matrix_ad(normals)
        f0m = ad.reshape(f0, ad.value_of(f0).shape + (1, 1))
        f1m = ad.reshape(f1, ad.value_of(f1).shape + (1, 1))
        S = ad.transpose(H) @ (f1m * C0 + f0m * C1) @ H
        try:
            Q = H @ ad.inv(S) @ ad.transpose(H)
        except np.linalg.LinAlgError as exc:
            raise DegenerateInterfaceError("degenerate interface") from exc
        dC = C0 - C1
        C = f0m * C0 + f1m * C1 - (f0m * f1m) * (dC @ Q @ dC)
        w = total
    return C[..., 0, :, :]


def homogenize(params, topology, assignment):
    """Homogenized 6x6 stiffness of the network for one phase assignment."""
    leaf = assign_stiffness(topology, assignment)
    return homogenize_leaf_stiffness(
        leaf, params.z, params.alpha, params.beta, params.gamma,
        params.theta, params.phi, topology.depth)
