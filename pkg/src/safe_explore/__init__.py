"""Safe exploration with symbolic safety rules over qualitative spatial relations.

Modules: :mod:`~safe_explore.qsr` (relations), :mod:`~safe_explore.rules`
(rule language and shield), :mod:`~safe_explore.envs` (road-crossing
grids), :mod:`~safe_explore.agents` (Q-learning, DQN, safe-epsilon-greedy),
:mod:`~safe_explore.rule_learner` (learned safety check) and
:mod:`~safe_explore.harness` (experiments, metrics, CLI).
"""

__version__ = "0.1.0"
