"""Adversarial active exploration for learning inverse dynamics models.

A PPO agent is rewarded with the prediction loss of a recurrent inverse
dynamics model, so it gathers the transitions the model currently gets wrong.
Everything runs on numpy: small analytic environments, a hand-written
network toolkit, scripted experts and the evaluation protocol.
"""

from .collectors import CollectorConfig, make_collector, shape_reward
from .envs import ENV_IDS, Env, env_spec
from .experiment import TrialConfig, TrialLog, emit, kde, make_config, run_sweep, run_trial
from .expert import evaluate, expert_action, generate_demos
from .inverse import InverseModel, SampleBuffer, train_inverse
from .ppo import PolicyAgent, PPOConfig, ppo_update

__all__ = [
    "CollectorConfig", "make_collector", "shape_reward",
    "ENV_IDS", "Env", "env_spec",
    "TrialConfig", "TrialLog", "emit", "kde", "make_config", "run_sweep", "run_trial",
    "evaluate", "expert_action", "generate_demos",
    "InverseModel", "SampleBuffer", "train_inverse",
    "PolicyAgent", "PPOConfig", "ppo_update",
]
__version__ = "0.1.0"
