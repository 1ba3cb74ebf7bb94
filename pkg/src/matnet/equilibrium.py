"""Online prediction: Newton solution of the interface equilibrium.

Given a macroscopic deformation gradient, each material node sees
F_i = F_bar + sum_j alpha_ij a_j x N_j. The unknown interaction
variables A = (a_0 ... a_{M-1}) are chosen so that the weighted traction
jump across every interaction vanishes; the residual blocks are
r_j = (sum_i W_i alpha_ij P_i) . N_j. A dense Newton iteration with the
local consistent tangents solves the system; converged steps commit the
node states, record lattice orientations, and expose the homogenized
stress and the algorithmically consistent macroscopic tangent.

Flat orderings: A and r use index 3j + c; 9-vectors of 3x3 matrices use
column-major p = row + 3 col, matching `tensors.vec9`/`mat_fourth_order`.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensors
from .crystal import MaterialDivergenceError
from .network import interaction_coefficients, node_weight

__all__ = [
    "SolverConfig",
    "LoadStep",
    "MacroResponse",
    "NonConvergenceError",
    "EquilibriumNetwork",
    "downscale",
    "assemble_residual",
    "assemble_jacobian",
    "upscale_stress",
    "uniaxial_step",
    "ramp_path",
]


class NonConvergenceError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    tol_rel: float = 1e-8
    tol_abs: float | None = None      # None: 1e-10 * law stress scale
    max_iterations: int = 50
    max_bisections: int = 12
    threads: int = 0                  # 0: take MATNET_THREADS, default 1

    def __post_init__(self):
        if self.tol_rel <= 0 or self.max_iterations < 1:
            raise ValueError("invalid solver configuration")

    def resolved_threads(self):
        if self.threads > 0:
            return self.threads
        return max(1, int(os.environ.get("MATNET_THREADS", "1")))


@dataclass
class LoadStep:
    F: np.ndarray
    dt: float

    def __post_init__(self):
        self.F = np.asarray(self.F, dtype=float)
        if self.F.shape != (3, 3) or np.linalg.det(self.F) <= 0:
            raise ValueError("load step needs an invertible 3x3 target")
        if self.dt <= 0:
            raise ValueError("load step needs dt > 0")


@dataclass
class MacroResponse:
    F: np.ndarray                     # macroscopic deformation gradient
    P: np.ndarray                     # homogenized stress (MPa)
    tangent: np.ndarray               # (3,3,3,3) consistent tangent (MPa)
    residual_norm: float
    iterations: int
    bisections: int
    time: float
    node_F: np.ndarray                # (n, 3, 3)
    node_P: np.ndarray                # (n, 3, 3)
    node_orientation: np.ndarray      # (n, 3, 3) lattice rotations
    weights: np.ndarray = field(repr=False, default=None)


def downscale(F_bar, A, coefficients, directions):
    """Per-node deformation gradients from the interaction variables."""
    a = A.reshape(-1, 3)
    F_nodes = np.einsum("ij,jx,jy->ixy", coefficients, a, directions)
    return F_nodes + np.asarray(F_bar, dtype=float)


def assemble_residual(P_nodes, weights, coefficients, directions):
    """Flat residual of weighted traction jumps, length 3 * n_interactions."""
    r = np.einsum("i,ij,ixy,jy->jx", weights, coefficients,
                  P_nodes, directions)
    return r.reshape(-1)


def _node_paths(coefficients):
    paths = []
    for row in coefficients:
        js = np.nonzero(row)[0]
        paths.append([(int(j), row[j]) for j in js])
    return paths


def assemble_jacobian(dPdF_nodes, weights, coefficients, directions):
    """Dense d(residual)/dA, shape (3M, 3M).

    Raises NonConvergenceError("indeterminate network") downstream when the
    factorization finds it singular.
    """
    m = directions.shape[0]
    K = np.zeros((m, 3, m, 3))
    for i, path in enumerate(_node_paths(coefficients)):
        D = dPdF_nodes[i]
        for j, aj in path:
            Tj = np.einsum("xyuv,y->xuv", D, directions[j])
            for k, ak in path:
                K[j, :, k, :] += (weights[i] * aj * ak) * (Tj @ directions[k])
    return K.reshape(3 * m, 3 * m)


def _residual_wrt_fbar(dPdF_nodes, weights, coefficients, directions):
    # (3M, 9) with columns in vec9 (column-major) order
    d = np.einsum("i,ij,jy,ixyuv->jxuv", weights, coefficients,
                  directions, dPdF_nodes)
    return d.transpose(0, 1, 3, 2).reshape(-1, 9)


def upscale_stress(P_nodes, weights):
    """Weight-normalized node average of the first Piola-Kirchhoff stress."""
    return np.einsum("i,ixy->xy", weights, P_nodes) / weights.sum()


def _placement_matrix(path, directions, m):
    # D_i with D_i[r + 3l, 3j + c] = alpha_ij N_j[l] delta_rc
    D = np.zeros((9, 3 * m))
    for j, a in path:
        N = directions[j]
        for l in range(3):
            for r in range(3):
                D[r + 3 * l, 3 * j + r] = a * N[l]
    return D


class EquilibriumNetwork:
    """Stateful online solver for one trained network and one law set."""

    def __init__(self, params, topology, laws, config=None):
        n = topology.n_nodes
        if not isinstance(laws, (list, tuple)):
            laws = [laws] * n
        if len(laws) != n:
            raise ValueError("need one law per material node")
        self.topology = topology
        self.laws = list(laws)
        self.weights = np.asarray(node_weight(params.z), dtype=float)
        if topology.n_interactions > 0:
            self.coefficients = interaction_coefficients(topology,
                                                         self.weights)
            from .network import direction_vector
            self.directions = direction_vector(params.theta, params.phi)
        else:
            self.coefficients = np.zeros((n, 0))
            self.directions = np.zeros((0, 3))
        self._paths = _node_paths(self.coefficients)
        self.config = config if config is not None else SolverConfig()
        if self.config.tol_abs is None:
            scale = max(law.stress_scale() for law in self.laws)
            self.tol_abs = 1e-10 * scale
        else:
            self.tol_abs = self.config.tol_abs
        self.initial_rotations = np.stack([
            tensors.rotation_matrix_from_angles(
                (params.alpha[i], params.beta[i], params.gamma[i]))
            for i in range(n)])
        self.states = [law.initial_state(R) for law, R
                       in zip(self.laws, self.initial_rotations)]
        self.A = np.zeros(3 * topology.n_interactions)
        self.F_bar = np.eye(3)
        self.time = 0.0

    # -- local law sweep -----------------------------------------------------

    def _evaluate_nodes(self, F_nodes, dt):
        threads = self.config.resolved_threads()
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(
                    lambda args: args[0].integrate(args[1], args[2], dt),
                    zip(self.laws, self.states, F_nodes)))
        else:
            results = [law.integrate(st, F, dt) for law, st, F
                       in zip(self.laws, self.states, F_nodes)]
        states = [r[0] for r in results]
        P = np.stack([r[1] for r in results])
        dPdF = np.stack([r[2] for r in results])
        return states, P, dPdF

    # -- Newton iteration ----------------------------------------------------

    def _newton(self, F_target, dt):
        A = self.A.copy()
        r0 = None
        r_best = np.inf
        it_best = 0
        for it in range(self.config.max_iterations + 1):
            F_nodes = downscale(F_target, A, self.coefficients,
                                self.directions)
            states, P, dPdF = self._evaluate_nodes(F_nodes, dt)
            r = assemble_residual(P, self.weights, self.coefficients,
                                  self.directions)
            r_abs = float(np.linalg.norm(r))
            if r0 is None:
                r0 = r_abs
            if r_abs < self.tol_abs or (r0 > 0 and
                                        r_abs / r0 < self.config.tol_rel):
                return A, states, P, dPdF, r_abs, it
            # fail fast toward bisection instead of grinding out the
            # iteration budget on diverging or stalled updates
            if not np.isfinite(r_abs) or r_abs > 1e4 * r0:
                raise NonConvergenceError("residual diverged")
            if r_abs < r_best:
                r_best, it_best = r_abs, it
            elif it - it_best >= 10:
                raise NonConvergenceError("residual stalled")
            if it == self.config.max_iterations:
                break
            K = assemble_jacobian(dPdF, self.weights, self.coefficients,
                                  self.directions)
            try:
                dA = np.linalg.solve(K, -r)
            except np.linalg.LinAlgError as exc:
                raise NonConvergenceError("indeterminate network") from exc
            A = A + dA
        raise NonConvergenceError(
            f"no convergence in {self.config.max_iterations} iterations")

    def newton_solve(self, step, _depth=0):
        """Advance to one load target, bisecting the increment on failure.

        Returns a MacroResponse; commits node states, interaction
        variables and the recorded lattice orientations on success.
        """
        step = step if isinstance(step, LoadStep) else LoadStep(*step)
        try:
            A, states, P, dPdF, r_abs, iters = self._newton(step.F, step.dt)
        except (NonConvergenceError, MaterialDivergenceError):
            if _depth >= self.config.max_bisections:
                raise
            F_mid = 0.5 * (self.F_bar + step.F)
            half = 0.5 * step.dt
            first = self.newton_solve(LoadStep(F_mid, half), _depth + 1)
            second = self.newton_solve(LoadStep(step.F, half), _depth + 1)
            second.iterations += first.iterations
            second.bisections = max(first.bisections, second.bisections) + 1
            return second

        self.A = A
        self.states = states
        self.F_bar = step.F.copy()
        self.time += step.dt
        tangent = self.upscale_tangent(dPdF)
        orientations = np.stack([st.orientation() for st in self.states])
        return MacroResponse(
            F=step.F.copy(),
            P=upscale_stress(P, self.weights),
            tangent=tangent,
            residual_norm=r_abs,
            iterations=iters,
            bisections=0,
            time=self.time,
            node_F=downscale(step.F, A, self.coefficients, self.directions),
            node_P=P,
            node_orientation=orientations,
            weights=self.weights.copy(),
        )

    # -- upscaling -------------------------------------------------------

    def upscale_tangent(self, dPdF_nodes):
        """Consistent macroscopic tangent at the converged state."""
        W = self.weights
        total = W.sum()
        mats = np.stack([tensors.mat_fourth_order(D) for D in dPdF_nodes])
        mean_mat = np.einsum("i,ipq->pq", W, mats) / total
        m = self.directions.shape[0]
        if m == 0:
            return tensors.unmat_fourth_order(mean_mat)
        K = assemble_jacobian(dPdF_nodes, W, self.coefficients,
                              self.directions)
        drdF = _residual_wrt_fbar(dPdF_nodes, W, self.coefficients,
                                  self.directions)
        try:
            dAdF = -np.linalg.solve(K, drdF)
        except np.linalg.LinAlgError as exc:
            raise NonConvergenceError("indeterminate network") from exc
        Y = np.zeros((9, 3 * m))
        for i, path in enumerate(self._paths):
            D_i = _placement_matrix(path, self.directions, m)
            Y += W[i] * (mats[i] @ D_i)
        Y /= total
        return tensors.unmat_fourth_order(mean_mat + Y @ dAdF)

    def run_path(self, steps):
        """Sequential solve along a load path with state carry-over."""
        return [self.newton_solve(s) for s in steps]


def uniaxial_step(stretch, dt):
    F = np.eye(3)
    F[0, 0] = stretch
    return LoadStep(F, dt)


def ramp_path(component, final, rate, n_steps):
    """Equal-increment ramp of one deformation-gradient component.

    `component` is a (row, col) pair; diagonal components ramp from 1,
    off-diagonal from 0. dt per step follows from the rate.
    """
    r, c = component
    start = 1.0 if r == c else 0.0
    values = np.linspace(start, final, n_steps + 1)[1:]
    dt = abs(final - start) / rate / n_steps if n_steps else 0.0
    steps = []
    for v in values:
        F = np.eye(3)
        F[r, c] = v
        steps.append(LoadStep(F, dt))
    return steps
