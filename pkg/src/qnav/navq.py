"""Quantum policy-gradient navigation agent.

The policy reads ``<Z>`` on qubits ``0..4`` (one per :class:`Action`) and
turns them into probabilities with ``softmax(beta * z)``. Circuit angles get
exact parameter-shift gradients; attention weights get central finite
differences. Updates are plain REINFORCE gradient ascent.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import environment as env
from .environment import Action, EnvConfig
from .errors import NonFiniteGradient
from .fusion import (
    AttentionWeights,
    CircuitParams,
    FusionModel,
    SensorFrame,
    apply_ansatz,
    encode_frames,
    encode_values,
    extract_features,
    frames_to_values,
    run_ansatz,
    z_features,
)

ACTION_COUNT = len(Action)
MAX_EPISODE_STEPS = 200
ALPHA_FD_STEP = 1e-5
SHIFT = math.pi / 2


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class Policy:
    circuit: CircuitParams
    attention: AttentionWeights = field(default_factory=AttentionWeights.ones)
    beta: float = 2.0
    action_count: int = ACTION_COUNT

    def __post_init__(self):
        if self.action_count > self.circuit.num_qubits:
            raise ValueError(
                f"{self.action_count} actions need at least as many readout qubits, "
                f"circuit has {self.circuit.num_qubits}"
            )
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"softmax temperature must be finite and positive, got {self.beta}")
        object.__setattr__(self, "_model", FusionModel(self.circuit, self.attention))

    @classmethod
    def initial(cls, depth: int = 3, num_qubits: int = 5, *, seed: int = 0, init_scale: float = 0.1,
                dims=None, beta: float = 2.0) -> "Policy":
        rng = np.random.default_rng([seed, 0x1417])
        circuit = CircuitParams(depth, num_qubits, rng.normal(0.0, init_scale, size=(depth, num_qubits)))
        attention = AttentionWeights.ones(dims) if dims is not None else AttentionWeights.ones()
        return cls(circuit, attention, beta)

    @property
    def model(self) -> FusionModel:
        return self._model

    @property
    def layout(self):
        return self._model.layout

    def replace_params(self, thetas: np.ndarray = None, alpha: np.ndarray = None) -> "Policy":
        circuit = self.circuit if thetas is None else self.circuit.with_thetas(thetas)
        attention = self.attention if alpha is None else self.attention.from_flat(alpha)
        return Policy(circuit, attention, self.beta, self.action_count)

    def features_batch(self, values: np.ndarray, alpha: np.ndarray = None) -> np.ndarray:
        return self._model.features_batch(values, alpha)

    def logits_batch(self, values: np.ndarray, alpha: np.ndarray = None) -> np.ndarray:
        return self.beta * self.features_batch(values, alpha)[..., : self.action_count]

    def probs_batch(self, values: np.ndarray) -> np.ndarray:
        return softmax(self.logits_batch(values))

    def log_probs_batch(self, values: np.ndarray, alpha: np.ndarray = None) -> np.ndarray:
        return log_softmax(self.logits_batch(values, alpha))


def action_distribution(policy: Policy, frames: Sequence[SensorFrame]) -> np.ndarray:
    """Encode, run the ansatz gate by gate, read out Z and apply the softmax head."""
    fused = encode_frames(frames, policy.attention, policy.circuit.num_qubits)
    z = extract_features(apply_ansatz(fused, policy.circuit))
    return softmax(policy.beta * z[: policy.action_count])


def shifted_thetas(thetas: np.ndarray, shift: float = SHIFT) -> np.ndarray:
    """Stack of ``2*L*Q`` parameter grids: ``+shift`` copies first, then ``-shift``."""
    n = thetas.size
    offsets = np.eye(n).reshape(n, *thetas.shape) * shift
    return np.concatenate([thetas + offsets, thetas - offsets])


def shift_jacobian(policy: Policy, values: np.ndarray) -> np.ndarray:
    """``d z_k / d theta_{l,q}`` for every row of ``values``; shape ``(L, Q, T, Q)``."""
    q = policy.circuit.num_qubits
    amps, _ = encode_values(values, policy.attention.flat(), q)
    stacked = shifted_thetas(policy.circuit.thetas)
    n = stacked.shape[0] // 2
    batch = np.broadcast_to(amps, (2 * n,) + amps.shape)
    z = z_features(run_ansatz(batch, stacked, q), q)
    jac = (z[:n] - z[n:]) / 2.0
    return jac.reshape(policy.circuit.thetas.shape + jac.shape[1:])


def parameter_shift_gradient(policy: Policy, frames: Sequence[SensorFrame], qubit: int) -> np.ndarray:
    """Gradient of ``<Z_qubit>`` with respect to every circuit angle, shape ``(L, Q)``."""
    if not 0 <= qubit < policy.circuit.num_qubits:
        raise IndexError(f"qubit {qubit} out of range")
    values = frames_to_values(frames, policy.layout)[None, :]
    return shift_jacobian(policy, values)[:, :, 0, qubit]


# -- trajectories ------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryStep:
    frames: Tuple[SensorFrame, ...]
    action: Action
    log_prob: float
    reward: float


@dataclass
class Trajectory:
    steps: List[TrajectoryStep] = field(default_factory=list)
    gamma: float = 0.99
    env_seed: Optional[int] = None
    goal_reached: bool = False
    collision: bool = False

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps])

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())

    @property
    def returns(self) -> np.ndarray:
        return discounted_returns(self.rewards, self.gamma)

    @property
    def actions(self) -> np.ndarray:
        return np.array([int(s.action) for s in self.steps], dtype=np.int64)

    def values(self, layout) -> np.ndarray:
        return np.stack([frames_to_values(s.frames, layout) for s in self.steps])


def discounted_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        out[t] = running
    return out


class Mode(enum.Enum):
    SAMPLE = "sample"
    GREEDY = "greedy"


FramesHook = Callable[[Policy, List[SensorFrame]], List[SensorFrame]]


def run_episode(policy: Policy, env_config: EnvConfig, env_seed: int, mode: Mode = Mode.SAMPLE, *,
                sample_seed: int = 0, gamma: float = 0.99, max_steps: int = MAX_EPISODE_STEPS,
                observe: Optional[FramesHook] = None) -> Trajectory:
    """Roll out one episode.

    ``observe`` may rewrite the frames the policy sees (attacks); the world
    itself is untouched, and the trajectory records the frames as observed.
    """
    mode = Mode(mode)
    rng = np.random.default_rng([int(env_seed), int(sample_seed), 0xAC7])
    result = env.reset(env_config, env_seed)
    traj = Trajectory(gamma=gamma, env_seed=env_seed)
    layout = policy.layout
    while not result.done and len(traj) < max_steps:
        frames = result.frames if observe is None else observe(policy, result.frames)
        logp = policy.log_probs_batch(frames_to_values(frames, layout))
        if mode is Mode.GREEDY:
            action = int(np.argmax(logp))
        else:
            cdf = np.cumsum(np.exp(logp))
            action = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)
        result = env.step(result.state, Action(action))
        traj.steps.append(TrajectoryStep(tuple(frames), Action(action), float(logp[action]), result.reward))
    traj.goal_reached = result.goal_reached
    traj.collision = result.collision
    return traj


def random_episode(env_config: EnvConfig, env_seed: int, *, sample_seed: int = 0,
                   max_steps: int = MAX_EPISODE_STEPS) -> float:
    """Total reward of a uniform-random policy; the learning-signal baseline."""
    rng = np.random.default_rng([int(env_seed), int(sample_seed), 0x4A4D])
    result = env.reset(env_config, env_seed)
    total, steps = 0.0, 0
    while not result.done and steps < max_steps:
        result = env.step(result.state, Action(int(rng.integers(ACTION_COUNT))))
        total += result.reward
        steps += 1
    return total


# -- updates -------------------------------------------------------------------

class Baseline(enum.Enum):
    NONE = "none"
    MEAN_RETURN = "mean_return"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    episodes_per_update: int = 16
    baseline: Baseline = Baseline.MEAN_RETURN
    gamma: float = 0.99
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "baseline", Baseline(self.baseline))


@dataclass(frozen=True)
class PolicyGradient:
    """Surrogate loss ``-mean(log pi(a|s) * advantage)`` and ascent directions."""

    loss: float
    theta: np.ndarray
    alpha: np.ndarray

    def is_finite(self) -> bool:
        return math.isfinite(self.loss) and bool(np.all(np.isfinite(self.theta))) and bool(
            np.all(np.isfinite(self.alpha)))


def surrogate_loss(policy: Policy, values: np.ndarray, actions: np.ndarray, advantages: np.ndarray,
                   alpha: np.ndarray = None) -> float:
    logp = policy.log_probs_batch(values, alpha)
    taken = logp[np.arange(len(actions)), actions]
    return float(-np.mean(taken * advantages))


def policy_gradient(policy: Policy, values: np.ndarray, actions: np.ndarray,
                    advantages: np.ndarray) -> PolicyGradient:
    """Gradient of ``J = mean(log pi(a_t|s_t) * A_t)``; ascent moves parameters along it."""
    actions = np.asarray(actions, dtype=np.int64)
    advantages = np.asarray(advantages, dtype=np.float64)
    t_idx = np.arange(len(actions))
    n_act = policy.action_count

    logp = policy.log_probs_batch(values)
    loss = float(-np.mean(logp[t_idx, actions] * advantages))
    probs = np.exp(logp)

    jac = shift_jacobian(policy, values)[..., :n_act]  # (L, Q, T, A)
    dlogp = policy.beta * (jac[:, :, t_idx, actions] - np.einsum("lqta,ta->lqt", jac, probs))
    g_theta = np.mean(dlogp * advantages, axis=-1)

    alpha = policy.attention.flat()
    g_alpha = np.zeros_like(alpha)
    if policy.attention.trainable:
        probes = np.concatenate([alpha + np.eye(alpha.size) * ALPHA_FD_STEP,
                                 alpha - np.eye(alpha.size) * ALPHA_FD_STEP])
        logp_probe = policy.log_probs_batch(values[None, :, :], probes[:, None, :])
        objective = np.mean(logp_probe[:, t_idx, actions] * advantages, axis=-1)
        g_alpha = (objective[: alpha.size] - objective[alpha.size:]) / (2 * ALPHA_FD_STEP)
    return PolicyGradient(loss, g_theta, g_alpha)


def batch_arrays(policy: Policy, batch: Sequence[Trajectory], baseline: Baseline):
    """Stack observations, actions and advantages of every step in ``batch``."""
    if not batch or not any(len(t) for t in batch):
        raise ValueError("reinforce update needs at least one non-empty trajectory")
    trajs = [t for t in batch if len(t)]
    values = np.concatenate([t.values(policy.layout) for t in trajs])
    actions = np.concatenate([t.actions for t in trajs])
    returns = np.concatenate([t.returns for t in trajs])
    if not np.all(np.isfinite(returns)):
        raise NonFiniteGradient("trajectory returns are not finite")
    base = float(np.mean(returns)) if Baseline(baseline) is Baseline.MEAN_RETURN else 0.0
    return values, actions, returns - base


def apply_ascent(policy: Policy, grad: PolicyGradient, learning_rate: float) -> Policy:
    if not grad.is_finite():
        raise NonFiniteGradient("policy gradient contains NaN or Inf; parameters left untouched")
    thetas = policy.circuit.thetas + learning_rate * grad.theta
    alpha = policy.attention.flat() + learning_rate * grad.alpha
    if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(alpha))):
        raise NonFiniteGradient("update produced non-finite parameters; parameters left untouched")
    return policy.replace_params(thetas, alpha)


def reinforce_update(policy: Policy, batch: Sequence[Trajectory], config: TrainConfig) -> Tuple[Policy, float]:
    values, actions, advantages = batch_arrays(policy, batch, config.baseline)
    grad = policy_gradient(policy, values, actions, advantages)
    return apply_ascent(policy, grad, config.learning_rate), grad.loss
