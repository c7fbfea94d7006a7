"""Preference-conditioned contextual-bandit routing across candidate LLMs.

Learns, from bandit feedback only, which of K arms to select per query so
as to maximize a user-weighted score/cost reward.  Ships a logged-data
bandit simulator, a policy-gradient trainer, three linear bandit
baselines, and an evaluation/sweep harness.
"""

from .bandits import EpsilonGreedyAgent, LinTSAgent, LinUCBAgent, joint_features, make_agent
from .checkpoint import load_checkpoint, load_router, save_checkpoint
from .data import (
    BanditEnvironment,
    EvalCapability,
    LoggedDataset,
    LoggedRecord,
    SyntheticSpec,
    gen_synthetic,
    hash_featurize,
    ingest,
    split_of,
    write_jsonl,
)
from .estimators import (
    EpsilonGreedyRouter,
    LinTSRouter,
    LinUCBRouter,
    ReinforceRouter,
    resolve_reward_spec,
)
from .evaluation import (
    DEFAULT_SWEEP_GRID,
    EvaluationReport,
    SweepPoint,
    TaskMetrics,
    compare,
    evaluate,
    mean_realized_reward,
    oracle_decisions,
    relative_deltas,
    sweep_preferences,
)
from .exceptions import (
    BanditRouteError,
    EvalCapabilityError,
    NotPositiveDefiniteError,
    NumericalDivergenceError,
    SchemaError,
)
from .numerics import AdamState, SeededRng, adam_step, sample_simplex_preference, spd_solve
from .policy import PolicyDims, PolicyNetwork, PolicyOutput, entropy, select_argmax, select_sample
from .reward import (
    Arm,
    ArmSet,
    Context,
    Outcome,
    PreferenceVector,
    RewardSpec,
    compute_reward,
    normalize_cost,
)
from .training import TrainingConfig, TrainingTrace, batch_baseline, expected_reward, train, \
    train_agent, train_epoch

__version__ = "0.1.0"
