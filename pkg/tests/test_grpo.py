import math

import numpy as np
import pytest

from trajeval.errors import ValidationError
from trajeval.grpo import (
    NLL_CAP,
    RewardConfig,
    RolloutGroup,
    ToyPolicy,
    advantages,
    content_reward,
    grpo_objective,
    grpo_train,
    kl_estimate,
    score_reward,
    sequence_nll,
    total_reward,
)
from trajeval.protocol import EvalOutput, GroundTruth, serialize_output

GT = GroundTruth(8.0, True, "policy")
CFG = RewardConfig()  # sigma 1, omega (0.4, 0.3, 0.3), gamma 0.2


def test_score_reward_values():
    assert score_reward(8.0, 8.0, 1.0) == 1.0
    assert score_reward(5.0, 7.0, 2.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert score_reward(1.0, 10.0, 1.0) < 1e-10
    with pytest.raises(ValidationError):
        score_reward(1.0, 1.0, 0.0)


def test_score_reward_shape_properties():
    rng = np.random.default_rng(1)
    for _ in range(100):
        s, e1, e2 = rng.uniform(1, 10, size=3)
        # sigma >= 0.5 keeps the kernel above float underflow on [1, 10] errors
        sig = rng.uniform(0.5, 5)
        assert score_reward(s, s + e1, sig) == pytest.approx(
            score_reward(s, s - e1, sig), abs=1e-12)  # symmetric
        lo, hi = sorted([e1, e2])
        if lo != hi:
            assert score_reward(s, s + hi, sig) < score_reward(s, s + lo, sig)
        if lo > 0:
            assert score_reward(s, s + lo, sig) < score_reward(s, s + lo, sig * 2)
        assert 0.0 < score_reward(s, s + hi, sig) <= 1.0


def test_content_reward_hand_cases():
    exact = EvalOutput(8.0, True, "policy")
    assert content_reward(GT, exact, CFG).r_acc == pytest.approx(1.0, abs=1e-12)

    wrong_classes = EvalOutput(8.0, False, "teleoperation")
    assert content_reward(GT, wrong_classes, CFG).r_acc == pytest.approx(0.4, abs=1e-12)

    all_wrong = EvalOutput(1.0, False, "teleoperation")
    assert content_reward(GT, all_wrong, CFG).r_acc < 1e-9


def test_total_reward_hand_cases():
    perfect = serialize_output(EvalOutput(8.0, True, "policy"))
    b = total_reward(perfect, GT, CFG)
    assert b.r_total == pytest.approx(1.0, abs=1e-12)
    assert b.r_fmt == 1.0

    # mixing algebra with the format term zeroed out: (1 - gamma) * 1
    assert (1.0 - CFG.gamma) * 1.0 + CFG.gamma * 0.0 == pytest.approx(0.8)

    wrong = serialize_output(EvalOutput(1.0, False, "teleoperation"))
    b = total_reward(wrong, GT, CFG)
    assert b.r_total == pytest.approx(0.2, abs=1e-9)

    b = total_reward("gibberish", GT, CFG)
    assert b.r_total == 0.0
    assert b.r_acc == 0.0 and b.r_fmt == 0.0


def test_total_reward_respects_require_cot():
    plain = serialize_output(EvalOutput(8.0, True, "policy"))
    assert total_reward(plain, GT, CFG, require_cot=True).r_total == 0.0
    with_think = serialize_output(EvalOutput(8.0, True, "policy", think="ok"))
    assert total_reward(with_think, GT, CFG, require_cot=True).r_total == 1.0


def test_total_reward_bounded_on_fuzzed_text():
    rng = np.random.default_rng(2)
    pieces = ["score: ", "8", "success", "failure", "\n", "source: policy",
              "<think>", "</think>", "x", ": "]
    for _ in range(500):
        text = "".join(rng.choice(pieces) for _ in range(rng.integers(0, 10)))
        b = total_reward(text, GT, CFG)
        assert 0.0 <= b.r_total <= 1.0


def test_advantages_hand_cases():
    assert advantages([1.0, 1.0, 1.0]).tolist() == [0.0, 0.0, 0.0]
    np.testing.assert_allclose(advantages([0.0, 1.0], epsilon=1e-15), [-1.0, 1.0],
                               atol=1e-9)
    np.testing.assert_allclose(
        advantages([1.0, 2.0, 3.0], epsilon=1e-15),
        [-math.sqrt(1.5), 0.0, math.sqrt(1.5)], atol=1e-9)
    with pytest.raises(ValidationError):
        advantages([1.0])


def test_advantages_invariants_random_groups():
    rng = np.random.default_rng(3)
    for _ in range(200):
        g = int(rng.integers(2, 65))
        r = rng.uniform(0, 1, size=g)
        if r.std() < 1e-3:
            continue
        a = advantages(r)
        assert abs(a.sum()) <= 1e-12
        assert 1.0 - 1e-6 <= a.std() <= 1.0


def test_kl_estimate_values():
    assert kl_estimate(-1.5, -1.5) == 0.0
    assert kl_estimate(-math.log(2.0), 0.0) == pytest.approx(2.0 - math.log(2.0) - 1.0,
                                                             abs=1e-12)
    assert kl_estimate(0.0, -math.log(2.0)) == pytest.approx(0.5 + math.log(2.0) - 1.0,
                                                             abs=1e-12)
    with pytest.raises(ValidationError):
        kl_estimate(float("-inf"), 0.0)


def test_kl_estimate_nonnegative():
    rng = np.random.default_rng(4)
    for _ in range(500):
        a, b = rng.normal(0, 3, size=2)
        k = kl_estimate(a, b)
        assert k >= 0.0
        if a != b:
            assert k > 0.0


def test_grpo_objective_identity_policies():
    group = RolloutGroup(
        outputs=("a", "b"),
        rewards=(0.3, 0.7),
        advantages=(-1.0, 1.0),
        logp_current=(-1.0, -2.0),
        logp_old=(-1.0, -2.0),
        logp_ref=(-1.0, -2.0),
    )
    # ratio 1, KL 0: objective is the mean advantage, which is 0
    assert grpo_objective(group, beta=5.0) == pytest.approx(0.0, abs=1e-12)


def test_grpo_objective_hand_case():
    ln2 = math.log(2.0)
    group = RolloutGroup(
        outputs=("a", "b"),
        rewards=(0.0, 1.0),
        advantages=(0.0, 1.0),
        logp_current=(-1.0, -2.0 + ln2),
        logp_old=(-1.0, -2.0),
        logp_ref=(-1.0, -2.0),
    )
    kl1 = math.exp(-ln2) + ln2 - 1.0
    expected = 0.5 * ((1.0 * 0.0 - 0.1 * 0.0) + (2.0 * 1.0 - 0.1 * kl1))
    assert grpo_objective(group, beta=0.1) == pytest.approx(expected, abs=1e-12)


def test_rollout_group_length_validation():
    with pytest.raises(ValidationError):
        RolloutGroup(outputs=("a",), rewards=(1.0, 2.0), advantages=(0.0,),
                     logp_current=(0.0,), logp_old=(0.0,), logp_ref=(0.0,))


def test_sequence_nll():
    assert sequence_nll(["a", "b"], [0.0, 0.0]) == (0.0, False)
    value, capped = sequence_nll(["a", "b"], [math.log(0.5), math.log(0.5)])
    assert value == pytest.approx(2.0 * math.log(2.0), abs=1e-12)
    assert not capped
    value, capped = sequence_nll(["a"], [float("-inf")])
    assert value == NLL_CAP and capped
    with pytest.raises(ValidationError):
        sequence_nll(["a", "b"], [0.0])


def test_sequence_nll_additive_over_concatenation():
    rng = np.random.default_rng(5)
    lp1 = list(rng.uniform(-3, 0, size=4))
    lp2 = list(rng.uniform(-3, 0, size=3))
    whole = sequence_nll(list("abcdefg"), lp1 + lp2).value
    parts = sequence_nll(list("abcd"), lp1).value + sequence_nll(list("efg"), lp2).value
    assert whole == pytest.approx(parts, abs=1e-12)


def test_reward_config_validation():
    with pytest.raises(ValidationError):
        RewardConfig(w_score=0.5, w_succ=0.5, w_src=0.5)
    with pytest.raises(ValidationError):
        RewardConfig(gamma=1.5)
    with pytest.raises(ValidationError):
        RewardConfig(sigma=-1.0)
    with pytest.raises(ValidationError):
        RewardConfig(group_size=1)


def test_toy_policy_sampling_and_logp_consistency():
    policy = ToyPolicy.uniform()
    rng = np.random.default_rng(6)
    score, success, source = policy.sample(rng)
    assert 1 <= score <= 10
    assert source in ("policy", "teleoperation")
    # uniform heads: logp = log(1/10) + log(1/2) + log(1/2)
    assert policy.logp(score, success, source) == pytest.approx(
        math.log(0.1) + 2 * math.log(0.5), abs=1e-12)
    back = ToyPolicy.from_dict(policy.as_dict())
    assert np.array_equal(back.score_logits, policy.score_logits)


def test_grpo_train_constant_reward_leaves_logits_unchanged():
    # gamma 1 makes the reward purely structural, and the toy policy always
    # emits well-formed text, so every rollout earns exactly 1.0
    cfg = RewardConfig(gamma=1.0, beta=0.0)
    start = ToyPolicy.uniform()
    trained, trace = grpo_train(start, GT, cfg, iterations=40,
                                learning_rate=0.1, seed=11)
    assert all(s.mean_reward == 1.0 for s in trace)
    np.testing.assert_array_equal(trained.score_logits, start.score_logits)
    np.testing.assert_array_equal(trained.success_logits, start.success_logits)
    np.testing.assert_array_equal(trained.source_logits, start.source_logits)


def test_grpo_train_improves_mean_reward():
    trained, trace = grpo_train(ToyPolicy.uniform(), GT, CFG, iterations=500,
                                learning_rate=0.1, seed=17)
    rewards = [s.mean_reward for s in trace]
    first_decile = float(np.mean(rewards[:50]))
    last_decile = float(np.mean(rewards[-50:]))
    assert last_decile > first_decile
    assert last_decile >= 0.9


def test_grpo_train_seed_determinism():
    _, t1 = grpo_train(ToyPolicy.uniform(), GT, CFG, iterations=60,
                       learning_rate=0.1, seed=23)
    _, t2 = grpo_train(ToyPolicy.uniform(), GT, CFG, iterations=60,
                       learning_rate=0.1, seed=23)
    assert t1 == t2
    _, t3 = grpo_train(ToyPolicy.uniform(), GT, CFG, iterations=60,
                       learning_rate=0.1, seed=24)
    assert t1 != t3


def test_grpo_train_with_cot_keeps_format_reward_full():
    cfg = RewardConfig(beta=0.0)
    _, trace = grpo_train(ToyPolicy.uniform(), GT, cfg, iterations=30,
                          learning_rate=0.1, seed=29, require_cot=True)
    assert all(s.r_fmt_mean == 1.0 for s in trace)


def test_grpo_train_validation():
    with pytest.raises(ValidationError):
        grpo_train(ToyPolicy.uniform(), GT, CFG, iterations=0,
                   learning_rate=0.1, seed=1)
    with pytest.raises(ValidationError):
        grpo_train(ToyPolicy.uniform(), GT, CFG, iterations=1,
                   learning_rate=0.0, seed=1)


def test_weight_ratio_direction_on_fixed_seed_bank():
    # the 4:3:3 content weighting should do at least as well on the score
    # head as the uniform 1:1:1 weighting, up to a small tolerance
    def final_score_reward(w):
        finals = []
        for seed in (17, 23, 31):
            cfg = RewardConfig(w_score=w[0], w_succ=w[1], w_src=w[2])
            _, trace = grpo_train(ToyPolicy.uniform(), GT, cfg, iterations=300,
                                  learning_rate=0.1, seed=seed)
            finals.append(np.mean([s.r_score_mean for s in trace[-30:]]))
        return float(np.mean(finals))

    weighted = final_score_reward((0.4, 0.3, 0.3))
    uniform = final_score_reward((1 / 3, 1 / 3, 1 / 3))
    assert weighted >= uniform - 0.02
