import math

import numpy as np
import pytest

from banditroute.numerics import SeededRng
from banditroute.policy import (
    HEAD_KINDS,
    PolicyNetwork,
    PolicyOutput,
    entropy,
    select_argmax,
    select_sample,
)
from banditroute.reward import Context, PreferenceVector
from helpers import fd_gradient, max_relative_error, random_gradcheck_case, small_dims

BALANCED = PreferenceVector(0.5, 0.5)


def _ctx(d_e=8, pref=BALANCED, seed=0):
    return Context(embedding=np.random.default_rng(seed).normal(size=d_e), preference=pref)


def _bias_name(head):
    return {"linear": "head_b", "mlp": "head_b2", "bilinear": "bl_b"}[head]


def _net_with_logits(logits, head="linear"):
    """All weights zero, head bias set: logits equal the bias exactly."""
    dims = small_dims(k_arms=len(logits))
    net = PolicyNetwork.initialize(head, dims, seed=0)
    net.set_flat(np.zeros(net.n_params))
    net.params[_bias_name(head)][:] = np.asarray(logits, dtype=np.float64)
    return net


class TestForward:
    @pytest.mark.parametrize("head", HEAD_KINDS)
    def test_zero_weights_give_uniform_policy(self, head):
        dims = small_dims(k_arms=4)
        net = PolicyNetwork.initialize(head, dims, seed=1)
        net.set_flat(np.zeros(net.n_params))
        out = net.forward(_ctx())
        np.testing.assert_allclose(out.probs, 0.25, atol=1e-15)

    def test_softmax_arithmetic(self):
        net = _net_with_logits([math.log(2.0), 0.0])
        out = net.forward(_ctx())
        np.testing.assert_allclose(out.probs, [2 / 3, 1 / 3], atol=1e-15)

    @pytest.mark.parametrize("head", HEAD_KINDS)
    def test_shift_invariance(self, head):
        net = _net_with_logits([0.3, -1.2, 0.9], head)
        out1 = net.forward(_ctx())
        net.params[_bias_name(head)][:] += 5.0
        out2 = net.forward(_ctx())
        np.testing.assert_allclose(out1.probs, out2.probs, atol=1e-15)
        assert select_argmax(out1) == select_argmax(out2)

    def test_probs_normalized_for_large_logits(self):
        net = _net_with_logits([500.0, -500.0])
        out = net.forward(_ctx())
        assert abs(out.probs.sum() - 1.0) <= 1e-12
        assert np.all(out.probs > 0.0)

    def test_clamp_preserves_shift_invariance(self):
        net = _net_with_logits([100.0, 0.0])
        out1 = net.forward(_ctx())
        assert out1.clamped
        net.params["head_b"][:] += 7.0
        out2 = net.forward(_ctx())
        np.testing.assert_allclose(out1.probs, out2.probs, atol=1e-15)

    def test_embedding_dim_checked(self):
        net = PolicyNetwork.initialize("linear", small_dims(d_e=8), seed=0)
        with pytest.raises(ValueError, match="embedding"):
            net.forward(Context(embedding=np.zeros(5), preference=BALANCED))

    def test_preference_changes_policy(self):
        # smoke check that the preference path is wired in
        net = PolicyNetwork.initialize("mlp", small_dims(), seed=2)
        emb = np.random.default_rng(3).normal(size=8)
        p1 = net.probabilities(emb, PreferenceVector(1.0, 0.0))
        p2 = net.probabilities(emb, PreferenceVector(0.0, 1.0))
        assert not np.allclose(p1, p2)


class TestEntropy:
    def test_uniform(self):
        dims = small_dims(k_arms=4)
        net = PolicyNetwork.initialize("linear", dims, seed=0)
        net.set_flat(np.zeros(net.n_params))
        assert entropy(net.forward(_ctx())) == pytest.approx(math.log(4.0), abs=1e-12)

    def test_degenerate(self):
        net = _net_with_logits([30.0, 0.0])
        assert entropy(net.forward(_ctx())) < 1e-10

    def test_two_thirds_one_third(self):
        # direct evaluation oracle: -(2/3)ln(2/3) - (1/3)ln(1/3)
        net = _net_with_logits([math.log(2.0), 0.0])
        assert entropy(net.forward(_ctx())) == pytest.approx(0.6365141682948128, abs=1e-12)


class TestBackward:
    @pytest.mark.parametrize("head", HEAD_KINDS)
    def test_zero_advantage_zero_beta_gives_zero_gradient(self, head):
        net = PolicyNetwork.initialize(head, small_dims(), seed=5)
        out = net.forward(_ctx())
        grad = net.backward(out, 0, advantage=0.0, entropy_coef=0.0)
        np.testing.assert_array_equal(grad, np.zeros(net.n_params))

    @pytest.mark.parametrize("head", HEAD_KINDS)
    def test_matches_finite_differences(self, head):
        for seed in (3, 4, 5):
            net, theta, ctx, action, advantage = random_gradcheck_case(head, seed)
            out = net.forward(ctx)
            analytic = net.backward(out, action, advantage, entropy_coef=0.05)
            numeric = fd_gradient(net, ctx, action, advantage, 0.05, theta)
            assert max_relative_error(analytic, numeric) <= 1e-6

    @pytest.mark.parametrize("head", HEAD_KINDS)
    def test_log_softmax_gradient_identity(self, head):
        # d(-log pi[a])/do_j = pi_j - 1{j=a}; the head bias slice equals d/do
        net = PolicyNetwork.initialize(head, small_dims(), seed=7)
        out = net.forward(_ctx(seed=7))
        action = 2
        grad = net.backward(out, action, advantage=1.0, entropy_coef=0.0)
        bias_slice = net.param_slices()[_bias_name(head)]
        expected = out.probs.copy()
        expected[action] -= 1.0
        np.testing.assert_allclose(grad[bias_slice], expected, atol=1e-14)

    def test_action_out_of_range(self):
        net = PolicyNetwork.initialize("linear", small_dims(), seed=0)
        out = net.forward(_ctx())
        with pytest.raises(ValueError, match="out of range"):
            net.backward(out, 3, 1.0, 0.0)

    def test_backward_requires_forward_cache(self):
        net = PolicyNetwork.initialize("linear", small_dims(), seed=0)
        bogus = PolicyOutput(logits=np.zeros(3), log_probs=np.full(3, -math.log(3)),
                             probs=np.full(3, 1 / 3), cache={})
        with pytest.raises(ValueError, match="forward"):
            net.backward(bogus, 0, 1.0, 0.0)


class TestSelection:
    def test_argmax_basic(self):
        out = PolicyOutput(logits=np.zeros(3), log_probs=np.log([0.2, 0.5, 0.3]),
                           probs=np.array([0.2, 0.5, 0.3]), cache={})
        assert select_argmax(out) == 1

    def test_argmax_tie_breaks_low(self):
        out = PolicyOutput(logits=np.zeros(2), log_probs=np.log([0.5, 0.5]),
                           probs=np.array([0.5, 0.5]), cache={})
        assert select_argmax(out) == 0

    def test_argmax_matches_logits(self):
        rng = np.random.default_rng(0)
        net = PolicyNetwork.initialize("mlp", small_dims(), seed=9)
        for seed in range(20):
            out = net.forward(_ctx(seed=seed))
            assert select_argmax(out) == int(np.argmax(out.logits))

    def test_sample_degenerate(self):
        out = PolicyOutput(logits=np.zeros(3), log_probs=np.array([0.0, -np.inf, -np.inf]),
                           probs=np.array([1.0, 0.0, 0.0]), cache={})
        rng = SeededRng(0)
        assert all(select_sample(out, rng) == 0 for _ in range(100))

    def test_sample_frequency(self):
        out = PolicyOutput(logits=np.zeros(2), log_probs=np.log([0.5, 0.5]),
                           probs=np.array([0.5, 0.5]), cache={})
        rng = SeededRng(77)
        draws = np.array([select_sample(out, rng) for _ in range(100_000)])
        assert abs((draws == 0).mean() - 0.5) <= 0.01

    def test_sample_reproducible(self):
        net = PolicyNetwork.initialize("linear", small_dims(), seed=1)
        out = net.forward(_ctx(seed=1))
        seq1 = [select_sample(out, SeededRng(5)) for _ in range(1)]
        a = SeededRng(5)
        b = SeededRng(5)
        assert [select_sample(out, a) for _ in range(50)] == \
               [select_sample(out, b) for _ in range(50)]


class TestParameters:
    @pytest.mark.parametrize("head", HEAD_KINDS)
    def test_flatten_roundtrip_is_identity(self, head):
        net = PolicyNetwork.initialize(head, small_dims(), seed=13)
        theta = net.get_flat()
        net.set_flat(theta)
        np.testing.assert_array_equal(net.get_flat(), theta)

    def test_param_slices_cover_vector(self):
        net = PolicyNetwork.initialize("mlp", small_dims(), seed=0)
        slices = net.param_slices()
        total = sum(s.stop - s.start for s in slices.values())
        assert total == net.n_params

    def test_set_flat_validates(self):
        net = PolicyNetwork.initialize("linear", small_dims(), seed=0)
        with pytest.raises(ValueError):
            net.set_flat(np.zeros(net.n_params + 1))
        bad = net.get_flat()
        bad[0] = np.inf
        with pytest.raises(ValueError):
            net.set_flat(bad)

    def test_init_is_seeded(self):
        a = PolicyNetwork.initialize("mlp", small_dims(), seed=3).get_flat()
        b = PolicyNetwork.initialize("mlp", small_dims(), seed=3).get_flat()
        c = PolicyNetwork.initialize("mlp", small_dims(), seed=4).get_flat()
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_unknown_head_rejected(self):
        with pytest.raises(ValueError, match="head kind"):
            PolicyNetwork.initialize("transformer", small_dims(), seed=0)


class TestCheckpoint:
    @pytest.mark.parametrize("head", HEAD_KINDS)
    def test_roundtrip_exact(self, head, tmp_path):
        from banditroute.checkpoint import load_checkpoint, save_checkpoint

        net = PolicyNetwork.initialize(head, small_dims(), seed=21)
        net.train_steps = 17
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, net.to_checkpoint_dict())
        restored = PolicyNetwork.from_checkpoint_dict(load_checkpoint(path))
        np.testing.assert_array_equal(restored.get_flat(), net.get_flat())
        assert restored.head_kind == net.head_kind
        assert restored.dims == net.dims
        assert restored.train_steps == 17
        ctx = _ctx(seed=2)
        np.testing.assert_array_equal(restored.forward(ctx).probs, net.forward(ctx).probs)

    def test_rejects_wrong_kind(self):
        with pytest.raises(ValueError, match="policy"):
            PolicyNetwork.from_checkpoint_dict({"kind": "linucb"})
