import numpy as np
import pytest

from banditroute.bandits import (
    EpsilonGreedyAgent,
    LinTSAgent,
    LinUCBAgent,
    agent_from_checkpoint_dict,
    joint_features,
    make_agent,
)
from banditroute.numerics import SeededRng
from banditroute.reward import PreferenceVector


class TestJointFeatures:
    def test_layout(self):
        z = joint_features(np.array([1.0, 2.0]), PreferenceVector(0.3, 0.7))
        np.testing.assert_array_equal(z, [1.0, 2.0, 0.3, 0.7])
        assert z.dtype == np.float64


class TestLinUCB:
    def test_fresh_state_ties_break_to_arm_zero(self):
        # with A = I and b = 0 every arm scores alpha * ||z||
        agent = LinUCBAgent(k_arms=3, dim=4, alpha=1.3)
        z = np.array([1.0, -2.0, 0.5, 3.0])
        scores = agent.ucb_scores(z)
        np.testing.assert_allclose(scores, 1.3 * np.linalg.norm(z), atol=1e-12)
        assert agent.select(z, SeededRng(0)) == 0

    def test_one_dimensional_arithmetic(self):
        # lambda=1, one update (z=1, r=1) on arm 0: A=2, b=1, theta=0.5
        agent = LinUCBAgent(k_arms=2, dim=1, alpha=0.7, ridge_lambda=1.0)
        agent.update(np.array([1.0]), 0, 1.0)
        np.testing.assert_allclose(agent.stats.gram[0], [[2.0]])
        np.testing.assert_allclose(agent.stats.response[0], [1.0])
        assert agent.stats.theta_hat(0)[0] == pytest.approx(0.5, abs=1e-14)
        score = agent.ucb_scores(np.array([1.0]))[0]
        assert score == pytest.approx(0.5 + 0.7 * np.sqrt(0.5), abs=1e-12)

    def test_update_leaves_other_arms_untouched(self):
        agent = LinUCBAgent(k_arms=3, dim=2)
        before_gram = agent.stats.gram[1].copy()
        before_resp = agent.stats.response[1].copy()
        agent.update(np.array([1.0, 2.0]), 0, 0.5)
        np.testing.assert_array_equal(agent.stats.gram[1], before_gram)
        np.testing.assert_array_equal(agent.stats.response[1], before_resp)

    def test_repeated_update_additivity(self):
        agent = LinUCBAgent(k_arms=2, dim=2)
        z = np.array([0.5, -1.5])
        agent.update(z, 0, 1.0)
        agent.update(z, 0, 1.0)
        np.testing.assert_allclose(agent.stats.gram[0], np.eye(2) + 2.0 * np.outer(z, z))


class TestRidgeEquivalence:
    def test_matches_closed_form_after_hand_updates(self):
        agent = LinUCBAgent(k_arms=2, dim=2, ridge_lambda=1.0)
        X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, -1.0], [0.5, 0.5]])
        y = np.array([1.0, -0.5, 0.25, 2.0, 0.0])
        for z, r in zip(X, y):
            agent.update(z, 0, float(r))
        closed = np.linalg.solve(X.T @ X + np.eye(2), X.T @ y)
        np.testing.assert_allclose(agent.stats.theta_hat(0), closed, atol=1e-8)

    def test_sherman_morrison_tracks_true_inverse(self):
        rng = np.random.default_rng(2)
        agent = LinUCBAgent(k_arms=2, dim=4, ridge_lambda=0.5)
        for _ in range(200):
            agent.update(rng.normal(size=4), 0, float(rng.normal()))
        true_inv = np.linalg.inv(agent.stats.gram[0])
        np.testing.assert_allclose(agent.stats.gram_inv[0], true_inv, atol=1e-8)

    def test_accuracy_across_refactor_boundary(self):
        rng = np.random.default_rng(4)
        agent = LinUCBAgent(k_arms=2, dim=3)
        X, y = [], []
        for _ in range(1100):
            z = rng.normal(size=3)
            r = float(z @ np.array([1.0, -2.0, 0.5]))
            agent.update(z, 0, r)
            X.append(z)
            y.append(r)
        X, y = np.array(X), np.array(y)
        closed = np.linalg.solve(X.T @ X + np.eye(3), X.T @ y)
        np.testing.assert_allclose(agent.stats.theta_hat(0), closed, atol=1e-8)


class TestLinTS:
    def test_zero_nu_degenerates_to_greedy(self):
        rng = np.random.default_rng(6)
        ts = LinTSAgent(k_arms=3, dim=4, nu=0.0)
        eg = EpsilonGreedyAgent(k_arms=3, dim=4, epsilon=0.0)
        for _ in range(30):
            z = rng.normal(size=4)
            arm = int(rng.integers(0, 3))
            r = float(rng.normal())
            ts.update(z, arm, r)
            eg.update(z, arm, r)
        srng = SeededRng(1)
        for _ in range(50):
            z = rng.normal(size=4)
            assert ts.select(z, srng) == eg.select(z, srng)

    def test_selection_deterministic_given_seed(self):
        agent = LinTSAgent(k_arms=3, dim=4, nu=0.5)
        z = np.arange(4.0)
        picks1 = [agent.select(z, SeededRng(3)) for _ in range(1)]
        a, b = SeededRng(3), SeededRng(3)
        assert [agent.select(z, a) for _ in range(20)] == \
               [agent.select(z, b) for _ in range(20)]

    def test_rejects_negative_nu(self):
        with pytest.raises(ValueError):
            LinTSAgent(k_arms=2, dim=2, nu=-0.1)


class TestEpsilonGreedy:
    def test_zero_epsilon_is_pure_greedy(self):
        agent = EpsilonGreedyAgent(k_arms=3, dim=2, epsilon=0.0, ridge_lambda=1.0)
        # with gram = I, theta_hat equals the response vector
        agent.stats.response[0] = [1.0, 0.0]
        agent.stats.response[1] = [0.0, 2.0]
        agent.stats.response[2] = [-1.0, -1.0]
        rng = SeededRng(0)
        assert agent.select(np.array([1.0, 0.0]), rng) == 0
        assert agent.select(np.array([0.0, 1.0]), rng) == 1

    def test_full_epsilon_explores_all_arms(self):
        agent = EpsilonGreedyAgent(k_arms=3, dim=2, epsilon=1.0)
        rng = SeededRng(8)
        picks = {agent.select(np.ones(2), rng) for _ in range(200)}
        assert picks == {0, 1, 2}

    def test_epsilon_bounds_checked(self):
        with pytest.raises(ValueError):
            EpsilonGreedyAgent(k_arms=2, dim=2, epsilon=1.5)


class TestErrors:
    def test_bad_arm(self):
        agent = LinUCBAgent(k_arms=2, dim=2)
        with pytest.raises(ValueError, match="out of range"):
            agent.update(np.zeros(2), 5, 0.0)

    def test_non_finite_reward(self):
        agent = LinUCBAgent(k_arms=2, dim=2)
        with pytest.raises(ValueError, match="finite"):
            agent.update(np.zeros(2), 0, np.nan)

    def test_dimension_mismatch(self):
        agent = LinUCBAgent(k_arms=2, dim=2)
        with pytest.raises(ValueError, match="shape"):
            agent.update(np.zeros(3), 0, 0.0)

    def test_bad_lambda(self):
        with pytest.raises(ValueError):
            LinUCBAgent(k_arms=2, dim=2, ridge_lambda=0.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="agent kind"):
            make_agent("ucb1", 2, 2)


class TestSerialization:
    @pytest.mark.parametrize("kind", ["linucb", "lints", "epsilon-greedy"])
    def test_checkpoint_roundtrip_preserves_decisions(self, kind, tmp_path):
        from banditroute.checkpoint import load_checkpoint, save_checkpoint

        rng = np.random.default_rng(5)
        agent = make_agent(kind, k_arms=3, dim=5)
        for _ in range(40):
            agent.update(rng.normal(size=5), int(rng.integers(0, 3)), float(rng.normal()))
        path = tmp_path / "agent.json"
        save_checkpoint(path, agent.to_checkpoint_dict())
        restored = agent_from_checkpoint_dict(load_checkpoint(path))
        assert restored.kind == kind
        emb = rng.normal(size=3)
        pref = PreferenceVector(0.4, 0.6)
        for _ in range(20):
            emb = rng.normal(size=3)
            assert restored.decide(emb, pref) == agent.decide(emb, pref)

    def test_unknown_checkpoint_kind(self):
        with pytest.raises(ValueError, match="agent checkpoint"):
            agent_from_checkpoint_dict({"kind": "mystery"})
