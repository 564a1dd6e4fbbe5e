from safe_explore.agents.dqn import (
    BufferTooSmall,
    DQNLearner,
    MLPParams,
    dqn_train_step,
    featurize,
    target_sync,
)
from safe_explore.agents.policies import (
    EpsilonSchedule,
    epsilon_greedy,
    full_guidance_policy,
    guided_exploration_policy,
    select,
)
from safe_explore.agents.replay import ReplayBuffer
from safe_explore.agents.tabular import Experience, QTable, q_update

__all__ = [
    "BufferTooSmall",
    "DQNLearner",
    "EpsilonSchedule",
    "Experience",
    "MLPParams",
    "QTable",
    "ReplayBuffer",
    "dqn_train_step",
    "epsilon_greedy",
    "featurize",
    "full_guidance_policy",
    "guided_exploration_policy",
    "q_update",
    "select",
    "target_sync",
]
