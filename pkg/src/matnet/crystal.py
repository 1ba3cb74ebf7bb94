"""Local constitutive laws evaluated at material nodes (units: MPa).

Two laws are provided. `ElasticLaw` is hyperelastic: second
Piola-Kirchhoff stress S = C : E with the Green-Lagrange strain of the
elastic deformation gradient. `CrystalPlasticityLaw` adds rate-dependent
crystallographic slip on the 12 FCC octahedral systems with a
saturating slip-resistance evolution; the plastic flow is integrated
with backward Euler and an inner Newton solve on the slip increments.

Both laws operate in the lattice frame: the crystal orientation enters
only through the initial condition F_e(0) = R, F_p(0) = R^{-1}, so the
stiffness matrix and slip geometry never need rotating.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensors

__all__ = [
    "MaterialDivergenceError",
    "SlipSystemSet",
    "fcc_slip_systems",
    "interaction_matrix",
    "INTERACTION_CLASS_NAMES",
    "PlasticityParams",
    "NodeState",
    "ElasticLaw",
    "CrystalPlasticityLaw",
    "integrate_node",
    "hooke_second_pk",
    "resolved_shear",
    "shear_rate",
    "hardening_rate",
    "plastic_velocity_gradient",
    "cubic_stiffness_mpa",
]


class MaterialDivergenceError(RuntimeError):
    """The local stress update failed to converge after substepping."""


# {111}<110> slip systems, grouped by plane (integer, unnormalized).
_FCC_PLANES = (
    (1, 1, 1), (1, 1, 1), (1, 1, 1),
    (-1, -1, 1), (-1, -1, 1), (-1, -1, 1),
    (1, -1, -1), (1, -1, -1), (1, -1, -1),
    (-1, 1, -1), (-1, 1, -1), (-1, 1, -1),
)
_FCC_DIRECTIONS = (
    (0, 1, -1), (-1, 0, 1), (1, -1, 0),
    (0, -1, -1), (1, 0, 1), (-1, 1, 0),
    (0, -1, 1), (-1, 0, -1), (1, 1, 0),
    (0, 1, 1), (1, 0, -1), (-1, -1, 0),
)

# Pair classification feeding the 7-entry latent-hardening vector; the
# glissile junctions split into two variants by which glide plane
# contains the junction Burgers vector.
INTERACTION_CLASS_NAMES = (
    "self",
    "coplanar",
    "collinear",
    "hirth",
    "glissile_primary",
    "glissile_forest",
    "lomer",
)


def _classify_pair(da, na, db, nb):
    if da == db and na == nb:
        return 0
    na_v = np.array(na)
    nb_v = np.array(nb)
    if np.array_equal(np.cross(na_v, nb_v), np.zeros(3)):
        return 1
    sa = np.array(da)
    sb = np.array(db)
    dot = int(sa @ sb)
    if abs(dot) == 2:
        return 2
    if dot == 0:
        return 3
    junction = sa - np.sign(dot) * sb
    if junction @ na_v == 0:
        return 4
    if junction @ nb_v == 0:
        return 5
    return 6


@dataclass(frozen=True)
class SlipSystemSet:
    """Normalized slip geometry plus the pairwise interaction classes."""

    directions: np.ndarray      # (12, 3) unit slip directions
    normals: np.ndarray         # (12, 3) unit plane normals
    schmid: np.ndarray          # (12, 3, 3) dyads s x n
    classes: np.ndarray         # (12, 12) integers indexing the class names

    @property
    def n_systems(self):
        return self.directions.shape[0]


def fcc_slip_systems():
    """The 12 FCC octahedral systems with pair classification."""
    d = np.array(_FCC_DIRECTIONS, dtype=float)
    n = np.array(_FCC_PLANES, dtype=float)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    schmid = np.einsum("ai,aj->aij", d, n)
    classes = np.empty((12, 12), dtype=int)
    for a in range(12):
        for b in range(12):
            classes[a, b] = _classify_pair(
                _FCC_DIRECTIONS[a], _FCC_PLANES[a],
                _FCC_DIRECTIONS[b], _FCC_PLANES[b])
    return SlipSystemSet(d, n, schmid, classes)


def interaction_matrix(coeffs, systems=None):
    """Expand the 7-entry latent-hardening vector to the 12x12 matrix."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (7,):
        raise ValueError("expected 7 interaction coefficients")
    if systems is None:
        systems = fcc_slip_systems()
    return coeffs[systems.classes]


def cubic_stiffness_mpa(c11, c12, c44):
    C = np.zeros((6, 6))
    C[:3, :3] = c12
    np.fill_diagonal(C[:3, :3], c11)
    C[3, 3] = C[4, 4] = C[5, 5] = c44
    return C


@dataclass(frozen=True)
class PlasticityParams:
    """Phenomenological slip parameters; stresses in MPa, rates in 1/s."""

    h0: float                 # reference hardening modulus
    xi_inf: float             # saturation slip resistance
    xi0: float                # initial slip resistance
    n_exp: float              # rate sensitivity exponent
    a_exp: float              # hardening exponent
    gamma0: float             # reference shear rate
    h_int: float              # extra self-interaction factor
    h_coeffs: np.ndarray      # 7 latent-hardening entries
    c11: float
    c12: float
    c44: float

    def __post_init__(self):
        object.__setattr__(self, "h_coeffs",
                           np.asarray(self.h_coeffs, dtype=float))
        if (self.xi_inf <= 0 or self.xi0 <= 0 or self.gamma0 <= 0
                or self.n_exp < 1 or self.a_exp <= 0):
            raise ValueError("invalid plasticity parameters")

    def stiffness(self):
        return cubic_stiffness_mpa(self.c11, self.c12, self.c44)


@dataclass
class NodeState:
    """Per-node history: deformation, plastic part, slip resistances."""

    F: np.ndarray                     # last converged deformation gradient
    F_p: np.ndarray
    resistance: np.ndarray | None     # (12,) MPa; None for elastic nodes
    accumulated_shear: float = 0.0

    def copy(self):
        return NodeState(self.F.copy(), self.F_p.copy(),
                         None if self.resistance is None
                         else self.resistance.copy(),
                         self.accumulated_shear)

    def elastic_deformation(self):
        return self.F @ np.linalg.inv(self.F_p)

    def orientation(self):
        """Current lattice rotation, from the polar split of F_e."""
        R, _ = tensors.polar_decompose(self.elastic_deformation())
        return R


def hooke_second_pk(F_e, C):
    """Second Piola-Kirchhoff stress of the Green-Lagrange strain of F_e."""
    F_e = np.asarray(F_e, dtype=float)
    E = 0.5 * (F_e.T @ F_e - np.eye(3))
    return tensors.voigt_to_stress(np.asarray(C) @ tensors.strain_to_voigt(E))


def resolved_shear(M_p, direction, normal):
    """Schmid projection tau = M_p : (s x n)."""
    return float(np.einsum("ij,i,j->", np.asarray(M_p, dtype=float),
                           direction, normal))


def shear_rate(tau, xi, params):
    """Power-law slip rate, odd in tau."""
    ratio = np.abs(tau) / xi
    return params.gamma0 * ratio ** params.n_exp * np.sign(tau)


def hardening_rate(xi, gamma_dot, params, h_matrix=None):
    """Slip-resistance rates driving xi toward its saturation value."""
    if h_matrix is None:
        h_matrix = interaction_matrix(params.h_coeffs)
    xi = np.asarray(xi, dtype=float)
    gap = 1.0 - xi / params.xi_inf
    drive = np.abs(gamma_dot) * np.abs(gap) ** params.a_exp * np.sign(gap)
    return params.h0 * (1.0 + params.h_int) * (h_matrix @ drive)


def plastic_velocity_gradient(gamma_dot, systems):
    """L_p as the slip-rate-weighted sum of Schmid dyads (traceless)."""
    return np.einsum("a,aij->ij", np.asarray(gamma_dot, dtype=float),
                     systems.schmid)


def _strain_voigt_batch(E):
    # (..., 3, 3) symmetric -> (..., 6) engineering strain vectors
    return np.stack([E[..., 0, 0], E[..., 1, 1], E[..., 2, 2],
                     2 * E[..., 1, 2], 2 * E[..., 0, 2],
                     2 * E[..., 0, 1]], axis=-1)


def _stress_tensor_batch(v):
    # (..., 6) -> (..., 3, 3) symmetric stress tensors
    out = np.empty(v.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(tensors.VOIGT_PAIRS):
        out[..., i, j] = v[..., k]
        out[..., j, i] = v[..., k]
    return out


class ElasticLaw:
    """Hyperelastic node law with a frozen plastic (orientation) part."""

    def __init__(self, stiffness_mpa):
        self.C = np.asarray(stiffness_mpa, dtype=float)

    def stress_scale(self):
        return float(np.abs(self.C).max())

    def initial_state(self, R0=None):
        R0 = np.eye(3) if R0 is None else np.asarray(R0, dtype=float)
        return NodeState(F=np.eye(3), F_p=R0.T.copy(), resistance=None)

    def integrate(self, state, F_new, dt):
        F_new = np.asarray(F_new, dtype=float)
        if np.linalg.det(F_new) <= 0:
            raise MaterialDivergenceError("non-invertible deformation")
        Fp_inv = np.linalg.inv(state.F_p)
        Fe = F_new @ Fp_inv
        S = hooke_second_pk(Fe, self.C)
        P = Fe @ S @ Fp_inv.T
        dPdF = self._tangent(Fe, S, Fp_inv)
        new_state = state.copy()
        new_state.F = F_new.copy()
        return new_state, P, dPdF

    def _tangent(self, Fe, S, Fp_inv):
        dPdF = np.empty((3, 3, 3, 3))
        for k in range(3):
            for l in range(3):
                dF = np.zeros((3, 3))
                dF[k, l] = 1.0
                dFe = dF @ Fp_inv
                dE = 0.5 * (dFe.T @ Fe + Fe.T @ dFe)
                dS = tensors.voigt_to_stress(
                    self.C @ tensors.strain_to_voigt(dE))
                dPdF[:, :, k, l] = dFe @ S @ Fp_inv.T + Fe @ dS @ Fp_inv.T
        return dPdF


class CrystalPlasticityLaw:
    """Rate-dependent FCC slip with saturating latent hardening."""

    MAX_NEWTON = 100
    MAX_SUBSTEP_DEPTH = 20
    MAX_STAGGER = 50

    def __init__(self, params, systems=None):
        self.params = params
        self.systems = systems if systems is not None else fcc_slip_systems()
        self.C = params.stiffness()
        self.h_matrix = interaction_matrix(params.h_coeffs, self.systems)

    def stress_scale(self):
        return float(np.abs(self.C).max())

    def initial_state(self, R0=None):
        R0 = np.eye(3) if R0 is None else np.asarray(R0, dtype=float)
        ns = self.systems.n_systems
        return NodeState(F=np.eye(3), F_p=R0.T.copy(),
                         resistance=np.full(ns, self.params.xi0))

    # -- implicit update ----------------------------------------------------

    def integrate(self, state, F_new, dt):
        F_new = np.asarray(F_new, dtype=float)
        if np.linalg.det(F_new) <= 0 or dt <= 0:
            raise MaterialDivergenceError("non-invertible deformation")
        new_state, P, dgamma = self._advance(state, F_new, dt, 0)
        h = 1e-7 * np.linalg.norm(F_new)
        dPdF = np.empty((3, 3, 3, 3))
        for k in range(3):
            for l in range(3):
                Fp = F_new.copy()
                Fp[k, l] += h
                # the converged increments are an excellent warm start
                _, Pp, _ = self._advance(state, Fp, dt, 0, x_init=dgamma)
                dPdF[:, :, k, l] = (Pp - P) / h
        return new_state, P, dPdF

    def _advance(self, state, F_target, dt, depth, x_init=None):
        try:
            return self._step(state, F_target, dt, x_init)
        except _StepFailed:
            if depth >= self.MAX_SUBSTEP_DEPTH:
                raise MaterialDivergenceError("material point divergence")
            F_mid = 0.5 * (state.F + F_target)
            mid_state, _, _ = self._advance(state, F_mid, 0.5 * dt, depth + 1)
            return self._advance(mid_state, F_target, 0.5 * dt, depth + 1)

    def _step(self, state, F, dt, x_init=None):
        p = self.params
        B = F @ np.linalg.inv(state.F_p)
        xi = state.resistance.copy()
        dgamma = (np.zeros(self.systems.n_systems) if x_init is None
                  else x_init.copy())
        for _ in range(self.MAX_STAGGER):
            dgamma = self._solve_increments(B, xi, dt, dgamma)
            xi_new = self._implicit_resistance(state.resistance, dgamma)
            if np.abs(xi_new - xi).max() <= 1e-10 * p.xi0:
                xi = xi_new
                break
            xi = xi_new
        else:
            raise _StepFailed
        X = np.einsum("a,aij->ij", dgamma, self.systems.schmid)
        Fp_new = np.linalg.solve(np.eye(3) - X, state.F_p)
        # unit plastic volume: rescale away the O(|X|^2) determinant drift
        Fp_new /= np.linalg.det(Fp_new) ** (1.0 / 3.0)
        Fp_inv = np.linalg.inv(Fp_new)
        Fe = F @ Fp_inv
        S = hooke_second_pk(Fe, self.C)
        P = Fe @ S @ Fp_inv.T
        new_state = NodeState(
            F=F.copy(), F_p=Fp_new, resistance=xi,
            accumulated_shear=state.accumulated_shear
            + float(np.abs(dgamma).sum()))
        return new_state, P, dgamma

    def _stress_pieces(self, B, X):
        Fe = B @ (np.eye(3) - X)
        Ce = Fe.T @ Fe
        E = 0.5 * (Ce - np.eye(3))
        S = _stress_tensor_batch(self.C @ _strain_voigt_batch(E))
        M = Ce @ S
        tau = np.einsum("ij,aij->a", M, self.systems.schmid)
        return Fe, Ce, S, tau

    def _residual(self, x, B, xi, dt):
        X = np.einsum("a,aij->ij", x, self.systems.schmid)
        _, _, _, tau = self._stress_pieces(B, X)
        with np.errstate(over="ignore"):
            rate = shear_rate(tau, xi, self.params)
        return x - dt * rate, tau

    def _solve_increments(self, B, xi, dt, x0):
        x = x0.copy()
        G, tau = self._residual(x, B, xi, dt)
        if not np.all(np.isfinite(G)):
            x = np.zeros_like(x)
            G, tau = self._residual(x, B, xi, dt)
        gnorm = np.linalg.norm(G)
        for _ in range(self.MAX_NEWTON):
            if gnorm <= 1e-12 * (1.0 + np.linalg.norm(x)):
                return x
            J = self._jacobian(x, tau, B, xi, dt)
            try:
                dx = np.linalg.solve(J, -G)
            except np.linalg.LinAlgError:
                raise _StepFailed
            step = 1.0
            while True:
                xt = x + step * dx
                Gt, taut = self._residual(xt, B, xi, dt)
                if np.all(np.isfinite(Gt)) and np.linalg.norm(Gt) < gnorm:
                    x, G, tau = xt, Gt, taut
                    gnorm = np.linalg.norm(G)
                    break
                step *= 0.5
                if step < 2 ** -30:
                    raise _StepFailed
        raise _StepFailed

    def _jacobian(self, x, tau, B, xi, dt):
        p = self.params
        schmid = self.systems.schmid
        X = np.einsum("a,aij->ij", x, schmid)
        Fe = B @ (np.eye(3) - X)
        Ce = Fe.T @ Fe
        S = _stress_tensor_batch(self.C @ _strain_voigt_batch(
            0.5 * (Ce - np.eye(3))))
        dFe = -np.einsum("ij,bjk->bik", B, schmid)
        dCe = np.einsum("bji,jk->bik", dFe, Fe) \
            + np.einsum("ji,bjk->bik", Fe, dFe)
        dS = _stress_tensor_batch(
            _strain_voigt_batch(0.5 * dCe) @ self.C.T)
        dM = np.einsum("bij,jk->bik", dCe, S) \
            + np.einsum("ij,bjk->bik", Ce, dS)
        dtau = np.einsum("bik,aik->ab", dM, schmid)
        ratio = np.abs(tau) / xi
        with np.errstate(over="ignore"):
            fac = dt * p.gamma0 * p.n_exp * ratio ** (p.n_exp - 1.0) / xi
        fac = np.where(np.isfinite(fac), fac, 1e300)
        return np.eye(len(x)) - fac[:, None] * dtau

    def _implicit_resistance(self, xi_old, dgamma):
        p = self.params
        xi = xi_old.copy()
        drive_abs = np.abs(dgamma)
        for _ in range(200):
            gap = 1.0 - xi / p.xi_inf
            v = drive_abs * np.abs(gap) ** p.a_exp * np.sign(gap)
            xi_next = xi_old + p.h0 * (1.0 + p.h_int) * (self.h_matrix @ v)
            if np.abs(xi_next - xi).max() <= 1e-12 * p.xi0:
                return xi_next
            xi = xi_next
        raise _StepFailed


class _StepFailed(Exception):
    pass


def integrate_node(state, F_new, dt, law):
    """Advance one material node; returns (new_state, P, dP/dF)."""
    return law.integrate(state, F_new, dt)
