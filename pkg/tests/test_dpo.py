import math

import numpy as np
import pytest

from surgdistill.dpo import (
    DpoBatchLogps,
    NumericError,
    PreferenceIndexPair,
    ToyPolicy,
    TrainingDivergedError,
    dpo_grad,
    dpo_loss,
    finite_diff_check,
    toy_train,
)

LN2 = 0.6931471805599453
# ln(1 + e^-0.2) computed at 30 decimal digits and frozen.
SOFTPLUS_MINUS_02 = 0.598138869381591839684943712541


def batch_of(pa, pr, ra, rr):
    return DpoBatchLogps(
        policy_accepted=np.atleast_1d(pa),
        policy_rejected=np.atleast_1d(pr),
        ref_accepted=np.atleast_1d(ra),
        ref_rejected=np.atleast_1d(rr),
    )


def random_batch(rng, n=6):
    return batch_of(rng.normal(size=n), rng.normal(size=n), rng.normal(size=n), rng.normal(size=n))


# ---------------------------------------------------------------------------
# Loss


def test_policy_equals_reference_gives_ln2():
    batch = batch_of([-3.1, -0.4], [-2.2, -5.0], [-3.1, -0.4], [-2.2, -5.0])
    loss, margins = dpo_loss(batch, beta=0.1)
    assert margins == pytest.approx([0.0, 0.0], abs=0.0)
    assert loss == pytest.approx(LN2, abs=1e-12)


def test_unit_log_ratio_margin_point_two():
    # policy-ref log-ratios +1 (accepted) and -1 (rejected) at beta 0.1 -> m = 0.2
    batch = batch_of([-1.0], [-4.0], [-2.0], [-3.0])
    loss, margins = dpo_loss(batch, beta=0.1)
    assert margins[0] == pytest.approx(0.2, abs=1e-15)
    assert loss == pytest.approx(SOFTPLUS_MINUS_02, abs=1e-12)


def test_huge_margin_underflows_gracefully():
    batch = batch_of([7000.0], [0.0], [0.0], [0.0])
    loss, margins = dpo_loss(batch, beta=0.1)
    assert margins[0] == pytest.approx(700.0)
    assert 0.0 <= loss < 1e-300
    assert math.isfinite(loss)


def test_loss_positive_and_decreasing_in_margin():
    rng = np.random.default_rng(0)
    for _ in range(50):
        batch = random_batch(rng, n=1)
        loss, _ = dpo_loss(batch, beta=0.5)
        assert loss > 0
    losses = []
    for bump in (0.0, 0.5, 1.0, 2.0):
        loss, _ = dpo_loss(batch_of([bump], [0.0], [0.0], [0.0]), beta=1.0)
        losses.append(loss)
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_non_finite_input_rejected():
    with pytest.raises(NumericError):
        batch_of([np.nan], [0.0], [0.0], [0.0])
    with pytest.raises(NumericError):
        batch_of([np.inf], [0.0], [0.0], [0.0])


def test_empty_batch_rejected():
    with pytest.raises(NumericError):
        batch_of([], [], [], [])


def test_translation_invariance_exact():
    # Binary-fraction inputs and shift keep every float operation exact.
    base = batch_of([-1.25], [-2.5], [-0.75], [-3.0])
    shifted = batch_of([-1.25 + 4.5], [-2.5 + 4.5], [-0.75 + 4.5], [-3.0 + 4.5])
    loss_a, margins_a = dpo_loss(base, beta=0.1)
    loss_b, margins_b = dpo_loss(shifted, beta=0.1)
    assert margins_a[0] == margins_b[0]
    assert loss_a == loss_b


def test_translation_invariance_random_values():
    rng = np.random.default_rng(42)
    for _ in range(20):
        batch = random_batch(rng, n=4)
        shift = float(rng.normal()) * 3
        shifted = batch_of(
            batch.policy_accepted + shift,
            batch.policy_rejected + shift,
            batch.ref_accepted + shift,
            batch.ref_rejected + shift,
        )
        assert dpo_loss(batch, 0.1)[0] == pytest.approx(dpo_loss(shifted, 0.1)[0], abs=1e-9)


def test_beta_scaling_linear_margins_and_ln2_at_zero():
    batch = batch_of([1.0], [0.5], [0.2], [0.1])
    _, margins_1 = dpo_loss(batch, beta=0.1)
    _, margins_2 = dpo_loss(batch, beta=0.2)
    assert margins_2[0] == pytest.approx(2 * margins_1[0], rel=1e-15)
    zero = batch_of([0.0], [0.0], [0.0], [0.0])
    for beta in (0.05, 0.1, 1.0, 7.5):
        assert dpo_loss(zero, beta)[0] == pytest.approx(LN2, abs=1e-12)


def test_beta_must_be_positive():
    with pytest.raises(ValueError):
        dpo_loss(batch_of([0.0], [0.0], [0.0], [0.0]), beta=0.0)


# ---------------------------------------------------------------------------
# Gradient


def test_grad_at_zero_margin():
    grads = dpo_grad(batch_of([0.0], [0.0], [0.0], [0.0]), beta=0.1)
    assert grads.policy_accepted[0] == pytest.approx(-0.1 * 0.5, abs=1e-15)
    assert grads.policy_rejected[0] == pytest.approx(+0.1 * 0.5, abs=1e-15)
    assert grads.ref_accepted[0] == 0.0 and grads.ref_rejected[0] == 0.0


def test_grad_saturates_at_large_margin():
    grads = dpo_grad(batch_of([1e4], [0.0], [0.0], [0.0]), beta=0.1)
    assert abs(grads.policy_accepted[0]) < 1e-300
    assert abs(grads.policy_rejected[0]) < 1e-300


def test_grad_matches_central_differences_on_policy_slots():
    rng = np.random.default_rng(7)
    eps, beta = 1e-5, 0.3
    for _ in range(20):
        batch = random_batch(rng, n=5)
        grads = dpo_grad(batch, beta)
        for slot in ("policy_accepted", "policy_rejected"):
            for k in range(len(batch)):
                arrays = {
                    "policy_accepted": batch.policy_accepted.copy(),
                    "policy_rejected": batch.policy_rejected.copy(),
                    "ref_accepted": batch.ref_accepted.copy(),
                    "ref_rejected": batch.ref_rejected.copy(),
                }
                arrays[slot][k] += eps
                up, _ = dpo_loss(DpoBatchLogps(**arrays), beta)
                arrays[slot][k] -= 2 * eps
                down, _ = dpo_loss(DpoBatchLogps(**arrays), beta)
                numeric = (up - down) / (2 * eps)
                analytic = getattr(grads, slot)[k]
                denom = max(abs(analytic), abs(numeric), 1e-4)
                assert abs(analytic - numeric) / denom < 1e-6


def test_monotonic_in_policy_accepted():
    base = batch_of([0.3], [0.1], [0.0], [0.0])
    bumped = batch_of([0.4], [0.1], [0.0], [0.0])
    assert dpo_loss(bumped, 0.5)[0] < dpo_loss(base, 0.5)[0]


# ---------------------------------------------------------------------------
# Toy policy


def test_toy_policy_probabilities_normalize():
    for seed in range(5):
        policy = ToyPolicy(vocab_size=5, seq_len=4, num_contexts=2, seed=seed)
        for context in range(2):
            assert np.exp(policy.log_probs(policy.theta, context)).sum() == pytest.approx(
                1.0, abs=1e-10
            )


def test_policy_at_reference_gives_ln2_and_margin_gradient():
    policy = ToyPolicy(vocab_size=4, seq_len=3, seed=3, policy_scale=0.0)
    assert np.array_equal(policy.theta, policy.theta_ref)
    pairs = policy.random_pairs(6, np.random.default_rng(1))
    loss, margins = dpo_loss(policy.batch_logps(pairs), beta=0.1)
    assert loss == pytest.approx(LN2, abs=1e-12)
    assert margins == pytest.approx(np.zeros(6), abs=1e-12)
    grad = policy.param_grad(pairs, beta=0.1)
    assert np.linalg.norm(grad) > 0  # margin term still drives learning


def test_finite_diff_check_100_seeds():
    worst = 0.0
    for seed in range(100):
        policy = ToyPolicy(vocab_size=4, seq_len=3, seed=seed, policy_scale=0.3)
        pairs = policy.random_pairs(5, np.random.default_rng(seed + 10_000))
        worst = max(worst, finite_diff_check(policy, pairs, beta=0.1, eps=1e-5))
    assert worst < 1e-5


def test_halving_eps_does_not_worsen_error_beyond_noise():
    policy = ToyPolicy(vocab_size=4, seq_len=3, seed=11, policy_scale=0.3)
    pairs = policy.random_pairs(5, np.random.default_rng(2))
    coarse = finite_diff_check(policy, pairs, beta=0.1, eps=1e-4)
    fine = finite_diff_check(policy, pairs, beta=0.1, eps=5e-5)
    assert fine <= coarse or fine < 1e-8  # O(eps^2) truncation or noise floor


def test_pair_construction_rejects_equal_sequences():
    with pytest.raises(ValueError):
        PreferenceIndexPair(context=0, accepted=3, rejected=3)


def test_toy_train_decreases_loss_and_builds_margin():
    policy = ToyPolicy(vocab_size=4, seq_len=3, seed=0, policy_scale=0.3)
    pairs = policy.random_pairs(5, np.random.default_rng(42))
    trajectory = toy_train(policy, pairs, steps=50, learning_rate=0.05, beta=0.1)
    assert len(trajectory.losses) == 51
    assert trajectory.final_loss < trajectory.initial_loss
    assert trajectory.final_mean_margin > 0


def test_toy_train_zero_learning_rate_constant():
    policy = ToyPolicy(vocab_size=4, seq_len=3, seed=1)
    pairs = policy.random_pairs(4, np.random.default_rng(0))
    trajectory = toy_train(policy, pairs, steps=10, learning_rate=0.0, beta=0.1)
    assert len(set(trajectory.losses)) == 1
    assert len(set(trajectory.mean_margins)) == 1


def test_toy_train_divergence_detector():
    policy = ToyPolicy(vocab_size=4, seq_len=3, seed=2, policy_scale=0.3)
    pairs = policy.random_pairs(5, np.random.default_rng(3))
    # Negative learning rate performs ascent: loss rises every step.
    with pytest.raises(TrainingDivergedError):
        toy_train(policy, pairs, steps=50, learning_rate=-0.2, beta=0.1)


def test_toy_train_validates_steps():
    policy = ToyPolicy()
    with pytest.raises(ValueError):
        toy_train(policy, policy.random_pairs(2, np.random.default_rng(0)), 0, 0.05, 0.1)
