"""Orientation statistics: ODF estimation, texture index, pole figures.

Orientations are unit quaternions (w, x, y, z) mapping crystal to
specimen coordinates. Cubic crystal symmetry is handled with the 24
rotational symmetry operators; misorientation is always the minimum
angle over the symmetry orbit.

The ODF lives on a discrete near-uniform grid over the cubic fundamental
zone, built by mapping a Hopf-fibration covering of SO(3) (uniform
circle angles crossed with a Fibonacci sphere) to fundamental-zone
representatives. Densities are kernel estimates with a squared-cosine
kernel in misorientation angle and are normalized to unit weighted sum,
so the uniform texture has density 1 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensors
from .network import node_weight

__all__ = [
    "OrientationSamples",
    "ODFGrid",
    "PoleFigureData",
    "quat_from_matrix",
    "quat_multiply",
    "quat_rotate",
    "slerp",
    "cubic_symmetry_quaternions",
    "misorientation_angle",
    "so3_grid",
    "odf_estimate",
    "texture_index_diff",
    "pole_figure",
    "orientations_from_params",
]


def quat_from_matrix(R):
    """Unit quaternion (w, x, y, z) of a rotation matrix."""
    R = np.asarray(R, dtype=float)
    t = np.trace(R)
    if t > 0:
        w = 0.5 * np.sqrt(1.0 + t)
        f = 0.25 / w
        q = np.array([w, f * (R[2, 1] - R[1, 2]), f * (R[0, 2] - R[2, 0]),
                      f * (R[1, 0] - R[0, 1])])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0))
        q = np.empty(4)
        q[1 + i] = 0.5 * s
        f = 0.25 / q[1 + i]
        q[0] = f * (R[k, j] - R[j, k])
        q[1 + j] = f * (R[j, i] + R[i, j])
        q[1 + k] = f * (R[k, i] + R[i, k])
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def quat_multiply(a, b):
    """Hamilton product, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    w = a[..., 0] * b[..., 0] - np.sum(a[..., 1:] * b[..., 1:], axis=-1)
    xyz = (a[..., :1] * b[..., 1:] + b[..., :1] * a[..., 1:]
           + np.cross(a[..., 1:], b[..., 1:]))
    return np.concatenate([w[..., None], xyz], axis=-1)


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q, v):
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def slerp(qa, qb, t):
    """Geodesic interpolation between two unit quaternions."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    if qa @ qb < 0:
        qb = -qb
    cosang = np.clip(qa @ qb, -1.0, 1.0)
    ang = np.arccos(cosang)
    if ang < 1e-12:
        out = (1 - t) * qa + t * qb
    else:
        out = (np.sin((1 - t) * ang) * qa + np.sin(t * ang) * qb) / np.sin(ang)
    out /= np.linalg.norm(out)
    return out


def _axis_angle_quat(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def cubic_symmetry_quaternions():
    """The 24 rotational symmetry operators of the cube, as quaternions."""
    gens = [
        _axis_angle_quat([0, 0, 1], np.pi / 2),
        _axis_angle_quat([1, 0, 0], np.pi / 2),
    ]
    ops = [np.array([1.0, 0.0, 0.0, 0.0])]

    def seen(q):
        for p in ops:
            if min(np.abs(p - q).max(), np.abs(p + q).max()) < 1e-9:
                return True
        return False

    frontier = list(ops)
    while frontier:
        nxt = []
        for q in frontier:
            for g in gens:
                r = quat_multiply(q, g)
                r /= np.linalg.norm(r)
                if not seen(r):
                    ops.append(r)
                    nxt.append(r)
        frontier = nxt
    assert len(ops) == 24
    return np.stack(ops)


_CUBIC_SYM = None


def _cubic_sym():
    global _CUBIC_SYM
    if _CUBIC_SYM is None:
        _CUBIC_SYM = cubic_symmetry_quaternions()
    return _CUBIC_SYM


def misorientation_angle(qa, qb):
    """Minimum rotation angle between two orientations under cubic symmetry."""
    sym = _cubic_sym()
    qa_orbit = quat_multiply(qa[None, :], sym)
    dots = np.abs(qa_orbit @ np.asarray(qb, dtype=float))
    return 2.0 * np.arccos(np.clip(dots.max(), -1.0, 1.0))


@dataclass
class OrientationSamples:
    """Weighted orientation cloud; weights need not be normalized."""

    quats: np.ndarray      # (S, 4) unit quaternions
    weights: np.ndarray    # (S,) nonnegative

    def __post_init__(self):
        self.quats = np.atleast_2d(np.asarray(self.quats, dtype=float))
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        norms = np.linalg.norm(self.quats, axis=1)
        if np.abs(norms - 1.0).max() > 1e-12:
            raise ValueError("quaternions must be normalized")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")


def orientations_from_params(params):
    """Node orientations and softplus weights of a parameter set."""
    quats = np.stack([
        quat_from_matrix(tensors.rotation_matrix_from_angles(
            (params.alpha[i], params.beta[i], params.gamma[i])))
        for i in range(params.n_nodes)])
    return OrientationSamples(quats, np.asarray(node_weight(params.z)))


def _fundamental_zone(quats):
    """Representative with the smallest rotation angle in each orbit."""
    sym = _cubic_sym()
    orbit = quat_multiply(quats[:, None, :], sym[None, :, :])  # (S, 24, 4)
    best = np.argmax(np.abs(orbit[..., 0]), axis=1)
    reps = orbit[np.arange(len(quats)), best]
    signs = np.where(reps[:, 0] < 0, -1.0, 1.0)
    return reps * signs[:, None]


def so3_grid(n_points):
    """Near-uniform covering of SO(3) mapped to the cubic fundamental zone.

    Combines evenly spaced circle angles with a Fibonacci sphere through
    the Hopf parametrization, which preserves the uniform measure. All
    points are returned (the map to the fundamental zone is 24-to-1 and
    measure preserving), each carrying quadrature weight 1/n.
    """
    n1 = max(4, int(round((2.0 * n_points) ** (1.0 / 3.0))))
    n2 = max(1, int(np.ceil(n_points / n1)))
    psi = (np.arange(n1) + 0.5) * 2 * np.pi / n1
    i = np.arange(n2)
    cos_theta = 1.0 - 2.0 * (i + 0.5) / n2
    theta = np.arccos(np.clip(cos_theta, -1, 1))
    golden = np.pi * (3.0 - np.sqrt(5.0))
    phi = i * golden
    th, ps = np.meshgrid(theta, psi, indexing="ij")
    ph, _ = np.meshgrid(phi, psi, indexing="ij")
    q = np.stack([
        np.cos(th / 2) * np.cos(ps / 2),
        np.cos(th / 2) * np.sin(ps / 2),
        np.sin(th / 2) * np.cos(ph + ps / 2),
        np.sin(th / 2) * np.sin(ph + ps / 2),
    ], axis=-1).reshape(-1, 4)
    q = _fundamental_zone(q)
    w = np.full(len(q), 1.0 / len(q))
    return q, w


@dataclass
class ODFGrid:
    """Discrete ODF: grid orientations, quadrature weights, densities."""

    quats: np.ndarray
    quad_weights: np.ndarray
    density: np.ndarray

    def total(self):
        return float(self.density @ self.quad_weights)

    def matches(self, other):
        return (self.quats.shape == other.quats.shape
                and np.allclose(self.quats, other.quats, atol=1e-12)
                and np.allclose(self.quad_weights, other.quad_weights,
                                atol=1e-15))


def _kernel_exponent(halfwidth):
    # squared-cosine kernel cos^(2k)(w/2), half value at the halfwidth
    c = np.cos(halfwidth / 2.0)
    if not 0.0 < c < 1.0:
        raise ValueError("halfwidth must be in (0, pi)")
    return np.log(0.5) / (2.0 * np.log(c))


def odf_estimate(samples, halfwidth=np.radians(10.0), grid_points=5000,
                 grid=None):
    """Kernel density estimate of the ODF on the fundamental-zone grid.

    `halfwidth` is the kernel half-value misorientation in radians. The
    density is normalized so that its quadrature-weighted sum is one.
    """
    if samples.weights.sum() <= 0:
        raise ValueError("need at least one sample with positive weight")
    if grid is None:
        gq, gw = so3_grid(grid_points)
    else:
        gq, gw = grid
    kappa = _kernel_exponent(halfwidth)
    sym = _cubic_sym()
    grid_orbit = quat_multiply(gq[:, None, :], sym[None, :, :])  # (M, 24, 4)
    flat = grid_orbit.reshape(-1, 4)
    density = np.zeros(len(gq))
    chunk = max(1, int(2e7 // flat.shape[0]))
    for s in range(0, len(samples.quats), chunk):
        qs = samples.quats[s:s + chunk]
        ws = samples.weights[s:s + chunk]
        dots = np.abs(flat @ qs.T).reshape(len(gq), sym.shape[0], -1)
        cos_half = np.clip(dots.max(axis=1), 0.0, 1.0)
        density += (cos_half ** (2.0 * kappa)) @ ws
    total = density @ gw
    if total <= 0:
        raise ValueError("degenerate kernel density")
    return ODFGrid(gq, gw, density / total)


def texture_index_diff(f_a, f_b):
    """Normalized integrated squared ODF difference, f_b as reference."""
    if not f_a.matches(f_b):
        raise ValueError("ODF grids do not match")
    ref = (f_b.density ** 2) @ f_b.quad_weights
    if ref <= 0:
        raise ValueError("reference ODF has zero norm")
    diff = f_a.density - f_b.density
    return float(((diff ** 2) @ f_a.quad_weights) / ref)


@dataclass
class PoleFigureData:
    miller: tuple
    points: np.ndarray      # (K, 3) columns x, y, intensity

    def __post_init__(self):
        if self.points.size and np.any(
                self.points[:, 0] ** 2 + self.points[:, 1] ** 2 > 1 + 1e-9):
            raise ValueError("projected points left the unit disk")


def pole_figure(samples, miller):
    """Stereographic pole figure of a plane family for cubic crystals.

    Every symmetry-equivalent pole of every sample is rotated to the
    specimen frame; upper-hemisphere directions (z >= 0) are projected
    onto the unit disk with intensity equal to the sample weight.
    """
    h, k, l = miller
    if h == 0 and k == 0 and l == 0:
        raise ValueError("Miller indices must not all vanish")
    m = np.array([h, k, l], dtype=float)
    m /= np.linalg.norm(m)
    sym = _cubic_sym()
    orbit = np.stack([quat_rotate(q, m) for q in sym])
    orbit = np.unique(np.round(orbit, 9), axis=0)
    rows = []
    for q, w in zip(samples.quats, samples.weights):
        R = quat_to_matrix(q)
        d = orbit @ R.T
        keep = d[:, 2] >= -1e-12
        d = d[keep]
        x = d[:, 0] / (1.0 + d[:, 2])
        y = d[:, 1] / (1.0 + d[:, 2])
        rows.append(np.column_stack([x, y, np.full(len(d), w)]))
    pts = np.concatenate(rows) if rows else np.zeros((0, 3))
    return PoleFigureData((h, k, l), pts)
