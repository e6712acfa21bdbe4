"""Risk-sensitive memory gating for coding agents.

The controller decides, per debugging step, whether to inject retrieved issue
memory, abstain, or ask for feedback, and learns from decomposed rewards that
penalize false-positive injections more than they reward successful reuse.
"""

from .policy import Action, Decision, Outcome, PolicyState, RewardConfig, compute_reward, decide, update

__all__ = [
    "Action",
    "Decision",
    "Outcome",
    "PolicyState",
    "RewardConfig",
    "compute_reward",
    "decide",
    "update",
]

__version__ = "0.1.0"
