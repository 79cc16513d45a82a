"""Preference-optimization objective and its gradient, verified at desk scale.

The loss operates on whole-sequence log-probabilities under a trainable policy
and a frozen reference. A small log-linear policy with an enumerable sequence
space provides exact probabilities, so analytic gradients can be checked
against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericError(ValueError):
    """Non-finite value fed to the loss."""


class TrainingDivergedError(RuntimeError):
    """Loss increased for too many consecutive steps."""


@dataclass(frozen=True)
class DpoBatchLogps:
    """Per-pair sequence log-probabilities: policy/reference x accepted/rejected."""

    policy_accepted: np.ndarray
    policy_rejected: np.ndarray
    ref_accepted: np.ndarray
    ref_rejected: np.ndarray

    def __post_init__(self):
        arrays = [
            np.asarray(a, dtype=np.float64)
            for a in (self.policy_accepted, self.policy_rejected, self.ref_accepted, self.ref_rejected)
        ]
        for name, arr in zip(
            ("policy_accepted", "policy_rejected", "ref_accepted", "ref_rejected"), arrays
        ):
            object.__setattr__(self, name, arr)
            if arr.size == 0:
                raise NumericError("batch must be non-empty")
            if not np.isfinite(arr).all():
                raise NumericError(f"{name} contains non-finite values")
        sizes = {arr.size for arr in arrays}
        if len(sizes) != 1:
            raise NumericError("all four log-probability arrays must have equal length")

    def __len__(self) -> int:
        return self.policy_accepted.size


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    expx = np.exp(x[~pos])
    out[~pos] = expx / (1.0 + expx)
    return out


def dpo_margins(batch: DpoBatchLogps, beta: float) -> np.ndarray:
    return beta * (
        (batch.policy_accepted - batch.ref_accepted)
        - (batch.policy_rejected - batch.ref_rejected)
    )


def dpo_loss(batch: DpoBatchLogps, beta: float) -> tuple[float, np.ndarray]:
    """Mean of -log sigmoid(margin), computed via the stable softplus(-m) form.

    Returns (mean loss, per-pair margins). Strictly positive and strictly
    decreasing in each margin; no overflow for |margin| in the hundreds.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    margins = dpo_margins(batch, beta)
    losses = np.logaddexp(0.0, -margins)
    return float(losses.mean()), margins


@dataclass(frozen=True)
class DpoGradients:
    """d(mean loss)/d(logp) for each slot; reference slots are constants (zero)."""

    policy_accepted: np.ndarray
    policy_rejected: np.ndarray
    ref_accepted: np.ndarray
    ref_rejected: np.ndarray


def dpo_grad(batch: DpoBatchLogps, beta: float) -> DpoGradients:
    if beta <= 0:
        raise ValueError("beta must be positive")
    margins = dpo_margins(batch, beta)
    # d/dm of softplus(-m) is -sigmoid(-m); the mean contributes 1/N.
    dloss_dm = -_sigmoid(-margins) / len(batch)
    return DpoGradients(
        policy_accepted=beta * dloss_dm,
        policy_rejected=-beta * dloss_dm,
        ref_accepted=np.zeros_like(margins),
        ref_rejected=np.zeros_like(margins),
    )


# ---------------------------------------------------------------------------
# Toy policy: log-linear over an enumerable sequence space.

@dataclass(frozen=True)
class PreferenceIndexPair:
    context: int
    accepted: int
    rejected: int

    def __post_init__(self):
        if self.accepted == self.rejected:
            raise ValueError("accepted and rejected sequences must differ")


class ToyPolicy:
    """Log-linear sequence model over vocab^length sequences per context.

    logp(seq | ctx) = theta . phi(ctx, seq) - logsumexp over the sequence
    space, so probabilities normalize exactly and parameter gradients have a
    closed form. The reference copy of theta is frozen at construction.
    """

    def __init__(
        self,
        vocab_size: int = 4,
        seq_len: int = 3,
        num_contexts: int = 2,
        feature_dim: int = 8,
        seed: int = 0,
        policy_scale: float = 0.3,
    ):
        self.vocab_size = vocab_size
        self.seq_len = seq_len
        self.num_sequences = vocab_size**seq_len
        rng = np.random.default_rng(seed)
        self.features = rng.normal(size=(num_contexts, self.num_sequences, feature_dim))
        self.theta_ref = 0.1 * rng.normal(size=feature_dim)
        self.theta = self.theta_ref + policy_scale * rng.normal(size=feature_dim)

    def log_probs(self, theta: np.ndarray, context: int) -> np.ndarray:
        scores = self.features[context] @ theta
        peak = scores.max()
        return scores - (peak + np.log(np.exp(scores - peak).sum()))

    def log_prob_grad(self, theta: np.ndarray, context: int, seq: int) -> np.ndarray:
        scores = self.features[context] @ theta
        peak = scores.max()
        probs = np.exp(scores - peak)
        probs /= probs.sum()
        return self.features[context, seq] - probs @ self.features[context]

    def batch_logps(self, pairs: list[PreferenceIndexPair], theta: np.ndarray | None = None) -> DpoBatchLogps:
        theta = self.theta if theta is None else theta
        pol = {c: self.log_probs(theta, c) for c in {p.context for p in pairs}}
        ref = {c: self.log_probs(self.theta_ref, c) for c in pol}
        return DpoBatchLogps(
            policy_accepted=np.array([pol[p.context][p.accepted] for p in pairs]),
            policy_rejected=np.array([pol[p.context][p.rejected] for p in pairs]),
            ref_accepted=np.array([ref[p.context][p.accepted] for p in pairs]),
            ref_rejected=np.array([ref[p.context][p.rejected] for p in pairs]),
        )

    def loss_at(self, theta: np.ndarray, pairs: list[PreferenceIndexPair], beta: float) -> float:
        loss, _ = dpo_loss(self.batch_logps(pairs, theta), beta)
        return loss

    def param_grad(self, pairs: list[PreferenceIndexPair], beta: float) -> np.ndarray:
        """Analytic d(mean loss)/d(theta) via the chain rule through the log-linear model."""
        batch = self.batch_logps(pairs)
        margins = dpo_margins(batch, beta)
        coeff = -_sigmoid(-margins) * beta / len(pairs)
        grad = np.zeros_like(self.theta)
        for pair, c in zip(pairs, coeff):
            grad += c * (
                self.log_prob_grad(self.theta, pair.context, pair.accepted)
                - self.log_prob_grad(self.theta, pair.context, pair.rejected)
            )
        return grad

    def random_pairs(self, count: int, rng: np.random.Generator) -> list[PreferenceIndexPair]:
        pairs = []
        for _ in range(count):
            context = int(rng.integers(self.features.shape[0]))
            accepted, rejected = rng.choice(self.num_sequences, size=2, replace=False)
            pairs.append(PreferenceIndexPair(context, int(accepted), int(rejected)))
        return pairs


def finite_diff_check(
    policy: ToyPolicy,
    pairs: list[PreferenceIndexPair],
    beta: float,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference parameter gradients.

    The denominator is floored at 1e-4 so near-zero components do not blow up
    the ratio; at typical gradient magnitudes this is a true relative error.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    analytic = policy.param_grad(pairs, beta)
    numeric = np.zeros_like(analytic)
    for k in range(analytic.size):
        step = np.zeros_like(analytic)
        step[k] = eps
        numeric[k] = (
            policy.loss_at(policy.theta + step, pairs, beta)
            - policy.loss_at(policy.theta - step, pairs, beta)
        ) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4)
    return float(np.max(np.abs(analytic - numeric) / denom))


@dataclass
class TrainTrajectory:
    losses: list[float] = field(default_factory=list)
    mean_margins: list[float] = field(default_factory=list)

    @property
    def initial_loss(self) -> float:
        return self.losses[0]

    @property
    def final_loss(self) -> float:
        return self.losses[-1]

    @property
    def final_mean_margin(self) -> float:
        return self.mean_margins[-1]


def toy_train(
    policy: ToyPolicy,
    pairs: list[PreferenceIndexPair],
    steps: int,
    learning_rate: float,
    beta: float,
) -> TrainTrajectory:
    """Plain gradient descent on the preference loss; records loss/margin per step.

    Aborts with TrainingDivergedError after 10 consecutive loss increases.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    trajectory = TrainTrajectory()
    loss, margins = dpo_loss(policy.batch_logps(pairs), beta)
    trajectory.losses.append(loss)
    trajectory.mean_margins.append(float(margins.mean()))
    increases = 0
    for step in range(steps):
        policy.theta = policy.theta - learning_rate * policy.param_grad(pairs, beta)
        loss, margins = dpo_loss(policy.batch_logps(pairs), beta)
        increases = increases + 1 if loss > trajectory.losses[-1] else 0
        trajectory.losses.append(loss)
        trajectory.mean_margins.append(float(margins.mean()))
        if increases >= 10:
            raise TrainingDivergedError(
                f"loss rose for {increases} consecutive steps (step {step + 1}, "
                f"recent losses {['%.4f' % v for v in trajectory.losses[-5:]]})"
            )
    return trajectory
