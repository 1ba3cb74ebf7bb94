"""Binary-tree material network: topology, trainable parameters, weights.

A network of depth N has 2^N material nodes (tree leaves) and 2^N - 1
interaction mechanisms (tree nodes). Interactions are indexed level by
level from the root: the mechanism at level l, position p has flat index
j = 2^l - 1 + p. Each material node carries a scalar activation z
(softplus-mapped to a positive weight) and three orientation angles;
each interaction carries two direction parameters (theta, phi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

__all__ = [
    "Topology",
    "ParameterSet",
    "build_topology",
    "node_weight",
    "direction_vector",
    "branch_volume_fractions",
    "interaction_coefficients",
    "interaction_index",
    "init_parameters",
]

MAX_DEPTH = 12


def interaction_index(level, position):
    """Flat interaction index for tree node (level, position)."""
    return (1 << level) - 1 + position


@dataclass(frozen=True)
class Topology:
    """Sub-lists of material nodes for every tree node of a depth-N tree."""

    depth: int
    sublists: dict = field(repr=False)  # (level, position) -> list of node ids

    @property
    def n_nodes(self):
        return 1 << self.depth if self.depth > 0 else 1

    @property
    def n_interactions(self):
        return (1 << self.depth) - 1

    def sublist(self, level, position):
        return self.sublists[(level, position)]

    def branch_sets(self, j):
        """Material nodes of the first and second child branch of mechanism j."""
        level = (j + 1).bit_length() - 1
        position = j - ((1 << level) - 1)
        members = self.sublists[(level, position)]
        half = len(members) // 2
        return members[:half], members[half:]

    def interaction_level_position(self, j):
        level = (j + 1).bit_length() - 1
        return level, j - ((1 << level) - 1)

    @classmethod
    def single_node(cls):
        """Degenerate depth-0 network: one material node, no interactions."""
        return cls(depth=0, sublists={(0, 0): [0]})


def build_topology(N):
    """Construct the depth-N binary tree bottom-up.

    The sub-list at (level, position) collects the material-node indices of
    that subregion; at the deepest level each list is a leaf pair
    [2p, 2p+1], and parents are unions of their two children.
    """
    if not (1 <= N <= MAX_DEPTH):
        raise ValueError(f"depth must be in [1, {MAX_DEPTH}], got {N}")
    sublists = {}
    for p in range(1 << (N - 1)):
        sublists[(N - 1, p)] = [2 * p, 2 * p + 1]
    for level in range(N - 2, -1, -1):
        for p in range(1 << level):
            sublists[(level, p)] = (sublists[(level + 1, 2 * p)]
                                    + sublists[(level + 1, 2 * p + 1)])
    return Topology(depth=N, sublists=sublists)


@dataclass
class ParameterSet:
    """All trainable quantities: per-node z and angles, per-edge directions.

    Angle arrays have length 2^N; theta/phi have length 2^N - 1 and are
    stored in flat interaction order (root first).
    """

    z: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    theta: np.ndarray
    phi: np.ndarray

    NODE_FIELDS = ("z", "alpha", "beta", "gamma")
    EDGE_FIELDS = ("theta", "phi")
    FIELDS = NODE_FIELDS + EDGE_FIELDS

    def __post_init__(self):
        for name in self.FIELDS:
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.z.shape[0]
        if n < 1 or (n & (n - 1)):
            raise ValueError("z length must be a power of two")
        for name in self.NODE_FIELDS:
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have length {n}")
        m = n - 1
        for name in self.EDGE_FIELDS:
            if getattr(self, name).shape != (m,):
                raise ValueError(f"{name} must have length {m}")
        for name in self.FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def depth(self):
        return int(self.z.shape[0]).bit_length() - 1

    @property
    def n_nodes(self):
        return self.z.shape[0]

    def copy(self):
        return ParameterSet(*(getattr(self, f).copy() for f in self.FIELDS))

    def flat(self):
        return np.concatenate([getattr(self, f) for f in self.FIELDS])

    def with_flat(self, vec):
        out = self.copy()
        k = 0
        for name in self.FIELDS:
            arr = getattr(out, name)
            arr[:] = vec[k:k + arr.size]
            k += arr.size
        return out

    def weights(self):
        return node_weight(self.z)


def init_parameters(N, rng):
    """Seeded random initialization.

    z starts in [0.2, 0.8] so every node weight is strictly positive and
    O(1); orientation angles cover the full range; direction parameters
    start inside (0, 1) and are never clamped afterwards.
    """
    n = 1 << N
    return ParameterSet(
        z=rng.uniform(0.2, 0.8, n),
        alpha=rng.uniform(0.0, 2 * np.pi, n),
        beta=rng.uniform(0.0, 2 * np.pi, n),
        gamma=rng.uniform(0.0, 2 * np.pi, n),
        theta=rng.uniform(0.0, 1.0, n - 1),
        phi=rng.uniform(0.0, 1.0, n - 1),
    )


def node_weight(z):
    """Positive node weight softplus(z) = ln(1 + e^z), overflow-safe."""
    return ad.softplus(z)


def direction_vector(theta, phi):
    """Unit equilibrium direction from the two unconstrained parameters.

    N = (cos(2*pi*phi) sin(pi*theta), sin(2*pi*phi) sin(pi*theta),
    cos(pi*theta)); normalized by construction for any real theta, phi.
    Accepts scalars or arrays; array inputs yield shape (..., 3).
    """
    if not isinstance(theta, ad.Var) and not isinstance(phi, ad.Var):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        st, ct = np.sin(np.pi * theta), np.cos(np.pi * theta)
        sp, cp = np.sin(2 * np.pi * phi), np.cos(2 * np.pi * phi)
        return np.stack([cp * st, sp * st, ct], axis=-1)
    t = theta * np.pi
    p = phi * (2 * np.pi)
    st, ct = ad.sin(t), ad.cos(t)
    sp, cp = ad.sin(p), ad.cos(p)
    e0, e1, e2 = np.eye(3)
    n0 = ad.reshape(cp * st, cp.shape + (1,))
    n1 = ad.reshape(sp * st, sp.shape + (1,))
    n2 = ad.reshape(ct, ct.shape + (1,))
    return n0 * e0 + n1 * e1 + n2 * e2


def branch_volume_fractions(weights, branch0, branch1):
    """Volume fractions (f0, f1) of two sibling branches; f0 + f1 = 1."""
    weights = np.asarray(weights, dtype=float)
    w0 = weights[list(branch0)].sum()
    w1 = weights[list(branch1)].sum()
    total = w0 + w1
    return w0 / total, w1 / total


def interaction_coefficients(topology, weights):
    """Dense (n_nodes, n_interactions) table of interaction coefficients.

    A node in the first child branch of mechanism j receives
    +1 / (branch weight sum); a node in the second branch receives
    -1 / (branch weight sum); all other entries are zero. The opposite
    signs make every column weight-orthogonal to the node weights
    (sum_i W_i alpha_ij = 0), which keeps the weighted node average of
    downscaled deformation gradients exactly equal to the macroscopic one
    and turns each residual block into the traction jump across the
    interface.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("node weights must be positive")
    n = topology.n_nodes
    m = topology.n_interactions
    table = np.zeros((n, m))
    for j in range(m):
        b0, b1 = topology.branch_sets(j)
        table[list(b0), j] = 1.0 / weights[list(b0)].sum()
        table[list(b1), j] = -1.0 / weights[list(b1)].sum()
    return table
