"""Deterministic desk-scale simulator for split / dropout / subsampled training.

The tasks are synthetic regressions with closed-form per-sample gradients
(no autodiff): the privacy analysis only relies on clipping, gradient
support structure, and the noise draw, none of which needs a learning
framework.  Runs record, per iteration, the diagnostics the accounting
assumptions rest on: per-sample post-clip norms, gradient support outside
the assigned submodel, gradients incident to dropped units, and
participation counts.  Violation counts must be exactly zero on a correct
run.

Randomness comes from counter-based Philox streams keyed by
(seed, label, iteration) for per-iteration draws (noise) and
(seed, label, iteration, sample) for per-sample draws (submodel
assignment, dropout masks, participation), so per-sample work could be
evaluated in any order without changing results.  Same seed, same trace,
bit for bit.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .accountant import (
    Bis,
    DpGuarantee,
    DropoutSplit,
    Gaussian,
    ModelSplit,
    PoissonGaussian,
    rdp_curve,
    scale_curve,
    to_dp,
)

__all__ = [
    "HiddenLayerTask",
    "PrivacyReport",
    "SimConfig",
    "SimTrace",
    "SplitPlan",
    "SyntheticTask",
    "assign_bis_schedule",
    "make_hidden_task",
    "make_linear_task",
    "report_privacy",
    "run_dropout_training",
    "run_model_split_training",
    "stream",
]


def stream(seed: int, *path) -> np.random.Generator:
    """Independent Philox stream for a (seed, label, indices...) path.

    Labels hash through crc32, not Python's randomized str hash, so the
    same path gives the same stream in every process.
    """
    key = tuple(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class SyntheticTask:
    """Seeded linear regression with squared-error loss."""

    features: np.ndarray  # (n, m)
    targets: np.ndarray  # (n,)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def param_dim(self) -> int:
        return self.features.shape[1]

    def per_sample_gradients(self, w: np.ndarray) -> np.ndarray:
        residual = self.features @ w - self.targets
        return residual[:, None] * self.features

    def loss(self, w: np.ndarray) -> float:
        residual = self.features @ w - self.targets
        return float(0.5 * np.mean(residual**2))


def make_linear_task(n_samples: int, param_dim: int, seed: int, noise: float = 0.1) -> SyntheticTask:
    rng = stream(seed, "task")
    features = rng.standard_normal((n_samples, param_dim)) / np.sqrt(param_dim)
    truth = rng.standard_normal(param_dim)
    targets = features @ truth + noise * rng.standard_normal(n_samples)
    return SyntheticTask(features, targets)


@dataclass(frozen=True)
class HiddenLayerTask:
    """One-hidden-layer regression with manual gradients, for dropout runs.

    Parameters are [W.ravel(), v] for prediction v . (mask * tanh(W x));
    every parameter either feeds or reads a hidden unit, so all of them
    belong to the dropout-split part.
    """

    features: np.ndarray  # (n, in_dim)
    targets: np.ndarray  # (n,)
    hidden_dim: int

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def in_dim(self) -> int:
        return self.features.shape[1]

    @property
    def param_dim(self) -> int:
        return self.hidden_dim * self.in_dim + self.hidden_dim

    def unpack(self, w: np.ndarray):
        h, m = self.hidden_dim, self.in_dim
        return w[: h * m].reshape(h, m), w[h * m :]

    def per_sample_gradient(self, w: np.ndarray, i: int, mask: np.ndarray) -> np.ndarray:
        weights, readout = self.unpack(w)
        x = self.features[i]
        act = np.tanh(weights @ x)
        hidden = mask * act
        residual = float(readout @ hidden - self.targets[i])
        g_readout = residual * hidden
        g_weights = (residual * readout * mask * (1.0 - act**2))[:, None] * x[None, :]
        return np.concatenate([g_weights.ravel(), g_readout])

    def incident_indices(self, unit: int) -> np.ndarray:
        """Parameter indices whose gradients a dropped unit forces to zero."""
        h, m = self.hidden_dim, self.in_dim
        incoming = np.arange(unit * m, (unit + 1) * m)
        outgoing = np.array([h * m + unit])
        return np.concatenate([incoming, outgoing])

    def loss(self, w: np.ndarray) -> float:
        weights, readout = self.unpack(w)
        preds = np.tanh(self.features @ weights.T) @ readout
        return float(0.5 * np.mean((preds - self.targets) ** 2))


def make_hidden_task(n_samples: int, in_dim: int, hidden_dim: int, seed: int, noise: float = 0.1) -> HiddenLayerTask:
    rng = stream(seed, "task")
    features = rng.standard_normal((n_samples, in_dim)) / np.sqrt(in_dim)
    truth = rng.standard_normal(in_dim)
    targets = features @ truth + noise * rng.standard_normal(n_samples)
    return HiddenLayerTask(features, targets, hidden_dim)


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint parameter blocks (the submodels) plus an optional non-split set."""

    blocks: tuple  # of index tuples
    nonsplit: tuple = ()
    per_iteration: bool = False

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        nonsplit = tuple(int(i) for i in self.nonsplit)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "nonsplit", nonsplit)
        if not blocks:
            raise ValueError("a split plan needs at least one block")
        seen = set()
        for block in blocks:
            overlap = seen.intersection(block)
            if overlap:
                raise ValueError(f"blocks are not disjoint: indices {sorted(overlap)} repeat")
            seen.update(block)
        if seen.intersection(nonsplit):
            raise ValueError("nonsplit indices overlap a block")

    @property
    def d(self) -> int:
        return len(self.blocks)


def even_split_plan(param_dim: int, d: int, nonsplit_count: int = 0, per_iteration: bool = False) -> SplitPlan:
    """Partition [0, param_dim) into d contiguous blocks, last indices non-split."""
    split_dim = param_dim - nonsplit_count
    if split_dim < d:
        raise ValueError(f"cannot split {split_dim} parameters into {d} blocks")
    bounds = np.linspace(0, split_dim, d + 1).astype(int)
    blocks = tuple(tuple(range(bounds[i], bounds[i + 1])) for i in range(d))
    return SplitPlan(blocks, tuple(range(split_dim, param_dim)), per_iteration)


@dataclass(frozen=True)
class SimConfig:
    """One simulated training run.

    mode: "plain", "model_split" (needs plan) or "dropout" (rate fixed at
    0.5, the only rate the accounting covers).  schedule: "all", "bis"
    (needs k) or "poisson" (needs gamma).
    """

    T: int
    c: float
    sigma: float
    mode: str = "plain"
    plan: Optional[SplitPlan] = None
    dropout_rate: float = 0.5
    schedule: str = "all"
    k: Optional[int] = None
    gamma: Optional[float] = None
    seed: int = 0
    learning_rate: float = 0.1
    delta: float = 1e-5

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.c < 0:
            raise ValueError(f"clipping norm must be nonnegative, got {self.c}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.mode not in ("plain", "model_split", "dropout"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "model_split" and self.plan is None:
            raise ValueError("model_split mode needs a split plan")
        if self.mode == "dropout" and self.dropout_rate != 0.5:
            raise ValueError(f"dropout rate must be exactly 0.5, got {self.dropout_rate}")
        if self.schedule not in ("all", "bis", "poisson"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "bis":
            if self.k is None or not 1 <= self.k <= self.T:
                raise ValueError(f"bis schedule needs 1 <= k <= T, got k={self.k}")
        if self.schedule == "poisson":
            if self.gamma is None or not 0 < self.gamma <= 1:
                raise ValueError(f"poisson schedule needs gamma in (0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class PrivacyReport:
    guarantee: Optional[DpGuarantee]
    refusal: Optional[str]

    @property
    def refused(self) -> bool:
        return self.refusal is not None


@dataclass
class SimTrace:
    config: SimConfig
    records: list = field(default_factory=list)
    final_params: Optional[np.ndarray] = None
    bis_row_sums: Optional[list] = None
    privacy: Optional[PrivacyReport] = None

    @property
    def max_clipped_norm(self) -> float:
        return max(r["max_clipped_norm"] for r in self.records)

    @property
    def support_violations(self) -> int:
        return sum(r["support_violations"] for r in self.records)

    @property
    def zeroing_violations(self) -> int:
        return sum(r["zeroing_violations"] for r in self.records)

    def diagnostics(self) -> dict:
        return {
            "max_clipped_norm": self.max_clipped_norm,
            "support_violations": self.support_violations,
            "zeroing_violations": self.zeroing_violations,
            "bis_row_sums_all_k": (
                None if self.bis_row_sums is None else all(s == self.config.k for s in self.bis_row_sums)
            ),
        }

    def summary_dict(self) -> dict:
        cfg = {
            "T": self.config.T,
            "c": self.config.c,
            "sigma": self.config.sigma,
            "mode": self.config.mode,
            "d": None if self.config.plan is None else self.config.plan.d,
            "dropout_rate": self.config.dropout_rate if self.config.mode == "dropout" else None,
            "schedule": self.config.schedule,
            "k": self.config.k,
            "gamma": self.config.gamma,
            "seed": self.config.seed,
            "learning_rate": self.config.learning_rate,
            "delta": self.config.delta,
        }
        privacy = None
        if self.privacy is not None:
            if self.privacy.refused:
                privacy = {"refusal": self.privacy.refusal}
            else:
                g = self.privacy.guarantee
                privacy = {"epsilon": g.epsilon, "delta": g.delta, "achieving_order": g.achieving_order}
        return {
            "config": cfg,
            "diagnostics": self.diagnostics(),
            "final_loss": self.records[-1]["loss"] if self.records else None,
            "privacy": privacy,
        }

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def assign_bis_schedule(n: int, T: int, k: int, seed: int) -> np.ndarray:
    """n x T participation matrix; each row is a uniform k-subset of [T].

    Rows are drawn from independent per-sample streams, so every row sums
    to exactly k and column sums are Binomial(n, k/T).
    """
    if not 1 <= k <= T:
        raise ValueError(f"need 1 <= k <= T, got k={k}, T={T}")
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    matrix = np.zeros((n, T), dtype=np.uint8)
    for i in range(n):
        cols = stream(seed, "bis", i).choice(T, size=k, replace=False)
        matrix[i, cols] = 1
    return matrix


def _clip_in_place(grad: np.ndarray, c: float) -> float:
    norm = float(np.linalg.norm(grad))
    if norm > c and norm > 0.0:
        grad *= c / norm
        return c
    return norm


def _participants(config: SimConfig, n: int, t: int, bis_matrix) -> np.ndarray:
    if config.schedule == "all":
        return np.arange(n)
    if config.schedule == "bis":
        return np.flatnonzero(bis_matrix[:, t])
    included = [i for i in range(n) if stream(config.seed, "poisson", t, i).random() < config.gamma]
    return np.array(included, dtype=int)


def _iteration_plan(config: SimConfig, t: int) -> SplitPlan:
    plan = config.plan
    if not plan.per_iteration:
        return plan
    # Fresh disjoint partition each iteration, same block sizes; the
    # non-split set stays fixed (the accounting is unaffected either way).
    split_indices = np.array([i for b in plan.blocks for i in b])
    perm = stream(config.seed, "plan", t).permutation(split_indices)
    blocks, start = [], 0
    for b in plan.blocks:
        blocks.append(tuple(perm[start : start + len(b)]))
        start += len(b)
    return SplitPlan(tuple(blocks), plan.nonsplit, per_iteration=True)


def run_model_split_training(task: SyntheticTask, config: SimConfig) -> SimTrace:
    """Clipped-gradient training where each sample updates one random submodel.

    Per sample and iteration: draw a uniform block, zero the gradient
    outside block + nonsplit, clip to c, sum over participants, add
    N(0, sigma^2 I) once, and step.  With d=1, sigma=0 and an empty
    non-split set the trajectory is bit-identical to plain clipped
    gradient descent under the same seed.  Also runs mode="plain" (no
    masking).
    """
    if config.mode == "dropout":
        raise ValueError("use run_dropout_training for dropout mode")
    if config.mode == "model_split":
        plan_indices = {i for b in config.plan.blocks for i in b} | set(config.plan.nonsplit)
        if not plan_indices.issubset(range(task.param_dim)):
            raise ValueError("split plan indexes parameters outside the task")

    n, m = task.n_samples, task.param_dim
    bis_matrix = assign_bis_schedule(n, config.T, config.k, config.seed) if config.schedule == "bis" else None

    w = np.zeros(m)
    trace = SimTrace(config=config)
    if bis_matrix is not None:
        trace.bis_row_sums = [int(s) for s in bis_matrix.sum(axis=1)]
    for t in range(config.T):
        participants = _participants(config, n, t, bis_matrix)
        grads = task.per_sample_gradients(w)
        grad_sum = np.zeros(m)
        max_norm = 0.0
        norm_total = 0.0
        support_violations = 0
        assignment_counts = None
        if config.mode == "model_split":
            plan = _iteration_plan(config, t)
            allowed_mask = np.zeros((plan.d, m), dtype=bool)
            for b, block in enumerate(plan.blocks):
                allowed_mask[b, list(block)] = True
                allowed_mask[b, list(plan.nonsplit)] = True
            assignment_counts = [0] * plan.d
        for i in participants:
            g = grads[i].copy()
            if config.mode == "model_split":
                b = int(stream(config.seed, "assign", t, i).integers(plan.d))
                assignment_counts[b] += 1
                g[~allowed_mask[b]] = 0.0
                support_violations += int(np.count_nonzero(g[~allowed_mask[b]]))
            norm = _clip_in_place(g, config.c)
            max_norm = max(max_norm, norm)
            norm_total += norm
            grad_sum += g
        noise = config.sigma * stream(config.seed, "noise", t).standard_normal(m)
        w = w - config.learning_rate * (grad_sum + noise)
        trace.records.append(
            {
                "iteration": t,
                "participants": int(len(participants)),
                "assignment_counts": assignment_counts,
                "max_clipped_norm": max_norm,
                "mean_clipped_norm": norm_total / max(len(participants), 1),
                "noise_norm": float(np.linalg.norm(noise)),
                "loss": task.loss(w),
                "support_violations": support_violations,
                "zeroing_violations": 0,
                "mask_ones": None,
                "mask_draws": None,
            }
        )
    trace.final_params = w
    trace.privacy = report_privacy(config) if config.sigma > 0 else None
    return trace


def run_dropout_training(task: HiddenLayerTask, config: SimConfig, forced_mask=None) -> SimTrace:
    """Clipped-gradient training with per-sample rate-0.5 dropout masks.

    For every sample and every dropped hidden unit, the gradients of all
    incoming and outgoing weights of that unit must be exactly zero; the
    run counts violations (zero on a correct run).  ``forced_mask``
    replaces the random mask everywhere (for structural tests).
    """
    if config.mode != "dropout":
        raise ValueError("config.mode must be 'dropout'")
    n, m, h = task.n_samples, task.param_dim, task.hidden_dim
    bis_matrix = assign_bis_schedule(n, config.T, config.k, config.seed) if config.schedule == "bis" else None

    w = np.zeros(m)
    trace = SimTrace(config=config)
    if bis_matrix is not None:
        trace.bis_row_sums = [int(s) for s in bis_matrix.sum(axis=1)]
    for t in range(config.T):
        participants = _participants(config, n, t, bis_matrix)
        grad_sum = np.zeros(m)
        max_norm = 0.0
        norm_total = 0.0
        zeroing_violations = 0
        mask_ones = 0
        mask_draws = 0
        for i in participants:
            if forced_mask is not None:
                mask = np.asarray(forced_mask, dtype=float)
            else:
                mask = stream(config.seed, "mask", t, i).integers(0, 2, size=h).astype(float)
            mask_ones += int(mask.sum())
            mask_draws += h
            g = task.per_sample_gradient(w, i, mask)
            for unit in np.flatnonzero(mask == 0.0):
                zeroing_violations += int(np.count_nonzero(g[task.incident_indices(unit)]))
            norm = _clip_in_place(g, config.c)
            max_norm = max(max_norm, norm)
            norm_total += norm
            grad_sum += g
        noise = config.sigma * stream(config.seed, "noise", t).standard_normal(m)
        w = w - config.learning_rate * (grad_sum + noise)
        trace.records.append(
            {
                "iteration": t,
                "participants": int(len(participants)),
                "assignment_counts": None,
                "max_clipped_norm": max_norm,
                "mean_clipped_norm": norm_total / max(len(participants), 1),
                "noise_norm": float(np.linalg.norm(noise)),
                "loss": task.loss(w),
                "support_violations": 0,
                "zeroing_violations": zeroing_violations,
                "mask_ones": mask_ones,
                "mask_draws": mask_draws,
            }
        )
    trace.final_params = w
    trace.privacy = report_privacy(config) if config.sigma > 0 else None
    return trace


def report_privacy(config: SimConfig) -> PrivacyReport:
    """Map a run configuration to its accountant guarantee, or refuse.

    Combinations whose accounting rule the toolkit does not provide (any
    split/dropout mode together with data subsampling, or a single-clip
    run with a non-split part) come back as an explicit refusal pointing
    at the decisions ledger, never as a silently wrong number.
    """
    if config.sigma <= 0:
        raise ValueError("privacy accounting needs sigma > 0")
    if config.mode in ("model_split", "dropout") and config.schedule != "all":
        return PrivacyReport(
            guarantee=None,
            refusal=(
                f"no accounting rule for {config.mode} combined with {config.schedule} data "
                "subsampling: the composition is unspecified (see decisions ledger)"
            ),
        )
    if config.mode == "model_split" and config.plan.nonsplit:
        return PrivacyReport(
            guarantee=None,
            refusal=(
                "single-clip run with a non-split part has no accounting rule; "
                "split and non-split parts need separate clipping norms (see decisions ledger)"
            ),
        )
    if config.mode == "model_split":
        spec, count = ModelSplit(d=config.plan.d, c=config.c, sigma=config.sigma), config.T
    elif config.mode == "dropout":
        spec, count = DropoutSplit(c=config.c, sigma=config.sigma), config.T
    elif config.schedule == "bis":
        spec, count = Bis(T=config.T, k=config.k, c=config.c, sigma=config.sigma), 1
    elif config.schedule == "poisson":
        spec, count = PoissonGaussian(c=config.c, sigma=config.sigma, gamma=config.gamma), config.T
    else:
        spec, count = Gaussian(c=config.c, sigma=config.sigma), config.T
    curve = scale_curve(rdp_curve(spec), count)
    return PrivacyReport(guarantee=to_dp(curve, config.delta), refusal=None)
