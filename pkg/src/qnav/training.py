"""Episode-batched training and evaluation loops shared by the CLI and tests."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .environment import EnvConfig
from .navq import (
    Mode,
    Policy,
    TrainConfig,
    Trajectory,
    random_episode,
    reinforce_update,
    run_episode,
)


@dataclass(frozen=True)
class UpdateRecord:
    index: int
    episodes: int
    mean_return: float
    policy_loss: float
    adv_loss: Optional[float]
    wall_ms: float


def episode_seeds(seed: int, count: int, stream: int) -> np.ndarray:
    """Deterministic per-episode seeds; separate ``stream`` values never overlap in use."""
    return np.random.default_rng([int(seed), int(stream)]).integers(0, 2**31 - 1, size=count)


def train(policy: Policy, env_config: EnvConfig, config: TrainConfig, episodes: int, *,
          robust: Optional[Callable] = None,
          on_update: Optional[Callable[[UpdateRecord, Policy], None]] = None):
    """Run ``episodes`` sampled episodes, updating after every ``episodes_per_update``.

    ``robust(policy, batch) -> (policy, LossReport)`` replaces the plain
    REINFORCE step when given. Returns the final policy and the update log.
    """
    env_seeds = episode_seeds(config.rng_seed, episodes, 1)
    sample_seeds = episode_seeds(config.rng_seed, episodes, 2)
    history: List[UpdateRecord] = []
    batch: List[Trajectory] = []
    start = time.perf_counter()
    for e in range(episodes):
        batch.append(run_episode(policy, env_config, int(env_seeds[e]), Mode.SAMPLE,
                                 sample_seed=int(sample_seeds[e]), gamma=config.gamma))
        if len(batch) == config.episodes_per_update or e == episodes - 1:
            mean_return = float(np.mean([t.total_reward for t in batch]))
            if robust is None:
                policy, loss = reinforce_update(policy, batch, config)
                adv = None
            else:
                policy, report = robust(policy, batch)
                loss, adv = report.clean_loss, report.adv_loss
            now = time.perf_counter()
            record = UpdateRecord(len(history), len(batch), mean_return, loss, adv, (now - start) * 1e3)
            start = now
            history.append(record)
            if on_update is not None:
                on_update(record, policy)
            batch = []
    return policy, history


def evaluate(policy: Policy, env_config: EnvConfig, seeds: Sequence[int], *, observe=None,
             mode: Mode = Mode.GREEDY) -> np.ndarray:
    return np.array([
        run_episode(policy, env_config, int(s), mode, sample_seed=int(s), observe=observe).total_reward
        for s in seeds
    ])


def random_baseline(env_config: EnvConfig, seeds: Sequence[int]) -> np.ndarray:
    return np.array([random_episode(env_config, int(s), sample_seed=int(s)) for s in seeds])
