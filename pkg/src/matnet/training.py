"""Offline training: dataset synthesis, loss, gradients, AdamW loop.

Training data are pairs of cubic phase stiffnesses with a homogenized
target stiffness. Targets normally come from a frozen teacher network
(`synthesize_teacher_dataset`), standing in for full-field reference
solutions. The loss is the batch mean of the squared Frobenius distance
between target and prediction, normalized by the squared target norm,
so it is invariant under joint rescaling of all stiffnesses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .homogenization import assign_stiffness, homogenize_leaf_stiffness, PhaseAssignment
from .network import ParameterSet, Topology, build_topology, init_parameters, node_weight

__all__ = [
    "Sample",
    "Dataset",
    "TrainConfig",
    "cubic_stiffness",
    "sample_cubic_stiffness",
    "generate_two_phase_samples",
    "synthesize_teacher_dataset",
    "loss",
    "relative_mse",
    "gradient",
    "finite_difference_gradient",
    "gradcheck",
    "AdamW",
    "train",
    "recovered_phase1_fraction",
]

_REJECTION_CAP = 10 ** 6


def cubic_stiffness(c11, c12, c44):
    """Cubic 6x6 Voigt stiffness from its three independent constants."""
    C = np.zeros((6, 6))
    C[:3, :3] = c12
    np.fill_diagonal(C[:3, :3], c11)
    C[3, 3] = C[4, 4] = C[5, 5] = c44
    return C


def sample_cubic_stiffness(rng, lo=1e-3, hi=1e3):
    """Draw a stable cubic stiffness with constants uniform in [lo, hi] GPa.

    Draws are rejected until c11 - c12 > 0; with positive constants this
    also makes the matrix positive definite.
    """
    if lo <= 0 or hi <= lo:
        raise ValueError("invalid sampling range")
    for _ in range(_REJECTION_CAP):
        c11, c12, c44 = rng.uniform(lo, hi, 3)
        if c11 - c12 > 0:
            return cubic_stiffness(c11, c12, c44)
    raise RuntimeError("rejection sampling cap exceeded")


def generate_two_phase_samples(n, rng, lo=1e-3, hi=1e3):
    """Draw n stable phase pairs with a 10^U(-1,1) stiffness contrast.

    Phase 2 starts from an independently drawn stable cubic triple and is
    scaled by c1 ~ 10^U(-1,1), so the contrast spans [0.1, 10].
    """
    if n < 1:
        raise ValueError("need at least one sample")
    pairs = []
    while len(pairs) < n:
        C1 = sample_cubic_stiffness(rng, lo, hi)
        C2 = sample_cubic_stiffness(rng, lo, hi)
        contrast = 10.0 ** rng.uniform(-1.0, 1.0)
        pairs.append((C1, contrast * C2))
    return pairs


@dataclass
class Sample:
    """One training record: phase stiffnesses plus the target (GPa)."""

    phase1: np.ndarray
    phase2: np.ndarray | None
    target: np.ndarray

    def assignment(self):
        if self.phase2 is None:
            return PhaseAssignment("single", self.phase1)
        return PhaseAssignment("two-phase", self.phase1, self.phase2)


@dataclass
class Dataset:
    samples: list
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def leaf_stack(self, topology):
        """(n_samples, n_nodes, 6, 6) leaf stiffness tensor."""
        return np.stack([assign_stiffness(topology, s.assignment())
                         for s in self.samples])

    def target_stack(self):
        return np.stack([s.target for s in self.samples])


def synthesize_teacher_dataset(teacher, topology, n, rng, two_phase=True):
    """Label sampled phase pairs with the teacher network's stiffness."""
    if topology.depth != teacher.depth:
        raise ValueError("teacher depth does not match topology")
    if two_phase:
        pairs = generate_two_phase_samples(n, rng)
    else:
        pairs = [(sample_cubic_stiffness(rng), None) for _ in range(n)]
    leaf = np.stack([
        assign_stiffness(topology,
                         PhaseAssignment("single", p1) if p2 is None
                         else PhaseAssignment("two-phase", p1, p2))
        for p1, p2 in pairs])
    targets = homogenize_leaf_stiffness(
        leaf, teacher.z, teacher.alpha, teacher.beta, teacher.gamma,
        teacher.theta, teacher.phi, topology.depth)
    samples = [Sample(p1, p2, t) for (p1, p2), t in zip(pairs, targets)]
    return Dataset(samples, provenance={"kind": "teacher", "n": n})


def relative_mse(predictions, targets):
    """Batch mean of ||target - prediction||_F^2 / ||target||_F^2."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    diff = predictions - targets
    num = np.sum(diff * diff, axis=(-2, -1))
    den = np.sum(targets * targets, axis=(-2, -1))
    return float(np.mean(num / den))


def _batch_loss_value(params, depth, leaf, targets, target_norm2):
    pred = homogenize_leaf_stiffness(
        leaf, params.z, params.alpha, params.beta, params.gamma,
        params.theta, params.phi, depth)
    diff = pred - targets
    return float(np.mean(np.sum(diff * diff, axis=(-2, -1)) / target_norm2))


def loss(samples, params, topology):
    """Mean relative squared Frobenius error over a batch of samples."""
    if len(samples) == 0:
        raise ValueError("empty batch")
    ds = Dataset(list(samples))
    targets = ds.target_stack()
    norm2 = np.sum(targets * targets, axis=(-2, -1))
    if np.any(norm2 == 0.0):
        raise ValueError("zero-norm target stiffness")
    return _batch_loss_value(params, topology.depth, ds.leaf_stack(topology),
                             targets, norm2)


def gradient(params, samples, topology):
    """Loss and its exact gradient for a batch, via tape replay.

    Returns (loss_value, grads) with grads a dict keyed like
    ParameterSet.FIELDS.
    """
    if len(samples) == 0:
        raise ValueError("empty batch")
    ds = Dataset(list(samples))
    leaf = ds.leaf_stack(topology)
    targets = ds.target_stack()
    norm2 = np.sum(targets * targets, axis=(-2, -1))
    if np.any(norm2 == 0.0):
        raise ValueError("zero-norm target stiffness")
    leaves = {f: ad.Var(getattr(params, f)) for f in ParameterSet.FIELDS}
    pred = homogenize_leaf_stiffness(
        leaf, leaves["z"], leaves["alpha"], leaves["beta"], leaves["gamma"],
        leaves["theta"], leaves["phi"], topology.depth)
    diff = pred - targets
    per_sample = ad.asum(diff * diff, axis=(-2, -1)) / norm2
    total = ad.asum(per_sample) / float(len(samples))
    ad.backward(total)
    grads = {f: (leaves[f].grad if leaves[f].grad is not None
                 else np.zeros_like(getattr(params, f)))
             for f in ParameterSet.FIELDS}
    return float(total.value), grads


class AdamW:
    """Adam with decoupled weight decay over named parameter arrays."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {f: np.zeros_like(getattr(params, f))
                  for f in ParameterSet.FIELDS}
        self.v = {f: np.zeros_like(getattr(params, f))
                  for f in ParameterSet.FIELDS}

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for f in ParameterSet.FIELDS:
            g = grads[f]
            self.m[f] = self.beta1 * self.m[f] + (1 - self.beta1) * g
            self.v[f] = self.beta2 * self.v[f] + (1 - self.beta2) * g * g
            m_hat = self.m[f] / b1c
            v_hat = self.v[f] / b2c
            arr = getattr(self.params, f)
            arr -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                              + self.weight_decay * arr)


@dataclass
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 20
    weight_decay: float = 0.0
    seed: int = 0
    n_train: int = 400
    n_val: int = 100

    def __post_init__(self):
        if (self.epochs < 0 or self.learning_rate < 0 or self.batch_size < 1
                or self.n_train < 1 or self.n_val < 0):
            raise ValueError("invalid training configuration")


def _dataset_error(params, depth, leaf, targets, norm2):
    # same formula as the minibatch loss, evaluated over a whole split
    return _batch_loss_value(params, depth, leaf, targets, norm2)


def train(dataset, config, depth=None, init=None):
    """Minibatch AdamW training with a fixed train/validation split.

    The dataset is shuffled once with the config seed; the last `n_val`
    samples form the validation split. Returns the trained ParameterSet
    and the per-epoch error curves as an (epochs + 1, 2) array whose row
    e holds (train_error, val_error) after e epochs.
    """
    if len(dataset) < config.n_train + config.n_val:
        raise ValueError("dataset smaller than requested split")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(dataset))
    picked = [dataset.samples[i] for i in order[:config.n_train + config.n_val]]
    train_samples = picked[:config.n_train]
    val_samples = picked[config.n_train:]

    if init is not None:
        params = init.copy()
        depth = params.depth
    else:
        if depth is None:
            raise ValueError("provide either depth or an initial ParameterSet")
        params = init_parameters(depth, rng)
    topology = build_topology(depth)

    tr_ds = Dataset(train_samples)
    va_ds = Dataset(val_samples)
    tr_leaf, tr_tgt = tr_ds.leaf_stack(topology), tr_ds.target_stack()
    va_leaf, va_tgt = va_ds.leaf_stack(topology), va_ds.target_stack()
    tr_norm2 = np.sum(tr_tgt * tr_tgt, axis=(-2, -1))
    va_norm2 = np.sum(va_tgt * va_tgt, axis=(-2, -1))

    opt = AdamW(params, lr=config.learning_rate,
                weight_decay=config.weight_decay)
    curves = np.empty((config.epochs + 1, 2))
    curves[0, 0] = _dataset_error(params, depth, tr_leaf, tr_tgt, tr_norm2)
    curves[0, 1] = _dataset_error(params, depth, va_leaf, va_tgt, va_norm2) \
        if config.n_val else np.nan

    n = len(train_samples)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = [train_samples[i]
                     for i in perm[start:start + config.batch_size]]
            value, grads = gradient(params, batch, topology)
            if not np.isfinite(value):
                raise RuntimeError(f"training diverged at epoch {epoch}")
            opt.step(grads)
        curves[epoch + 1, 0] = _dataset_error(params, depth, tr_leaf,
                                              tr_tgt, tr_norm2)
        curves[epoch + 1, 1] = _dataset_error(params, depth, va_leaf,
                                              va_tgt, va_norm2) \
            if config.n_val else np.nan
    return params, curves


def finite_difference_gradient(params, samples, topology, rel_step=1e-6):
    """Central-difference gradient of the loss, the oracle for `gradient`.

    Uses the plain (untaped) forward pass only; step per parameter is
    rel_step * max(1, |value|).
    """
    flat0 = params.flat()
    out = np.empty_like(flat0)
    for i in range(flat0.size):
        h = rel_step * max(1.0, abs(flat0[i]))
        up = flat0.copy()
        up[i] += h
        dn = flat0.copy()
        dn[i] -= h
        out[i] = (loss(samples, params.with_flat(up), topology)
                  - loss(samples, params.with_flat(dn), topology)) / (2 * h)
    return out


def gradcheck(depth, n_points=10, batch_size=5, seed=0):
    """Max relative disagreement between tape and FD gradients.

    Evaluates both at `n_points` random parameter sets against a batch of
    teacher-labelled samples; the per-component error is scaled by the
    FD gradient magnitude with a small floor tied to its largest entry.
    """
    rng = np.random.default_rng(seed)
    topology = build_topology(depth)
    teacher = init_parameters(depth, rng)
    dataset = synthesize_teacher_dataset(teacher, topology, batch_size, rng)
    worst = 0.0
    for _ in range(n_points):
        params = init_parameters(depth, rng)
        _, grads = gradient(params, dataset.samples, topology)
        g_ad = np.concatenate([grads[f] for f in ParameterSet.FIELDS])
        g_fd = finite_difference_gradient(params, dataset.samples, topology)
        floor = 1e-8 * np.abs(g_fd).max() + 1e-300
        err = np.abs(g_ad - g_fd) / np.maximum(np.abs(g_fd), floor)
        worst = max(worst, float(err.max()))
    return worst


def recovered_phase1_fraction(params):
    """Phase-1 volume fraction implied by the node weights.

    Even node indices carry phase 1 under the two-phase assignment, so
    the recovered fraction is the weight share of the even nodes.
    """
    W = node_weight(params.z)
    return float(W[0::2].sum() / W.sum())
