"""Q-learning with a paused, full replay refresh and RND novelty."""
from .agent import AgentConfig, ParrAgent, RefreshReport, compute_target, compute_targets
from .envs import ChainMDP, KeyDoorWorld, StickyActions, clip_reward, sticky_wrap, value_iteration
from .nn import NetSpec, ParamSet, backward, forward, gradient_check, init_params, optimizer_step
from .novelty import NoveltyConfig, NoveltyPair, refresh_novelty
from .replay import Experience, ReplayBuffer, ReplayRecord
from .sumtree import BACKEND as SUMTREE_BACKEND

__version__ = "0.1.0"
