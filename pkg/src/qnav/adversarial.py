"""Sign-gradient input perturbations and the clean + lambda * adversarial objective.

Losses passed to the gradient helpers are functions of the Z readout vector
and must broadcast over leading axes: ``loss(z[..., Q]) -> [...]``. The
finite-difference probes evaluate them on stacks of perturbed inputs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import NonFiniteGradient
from .fusion import Layout, Modality, SensorFrame, frames_to_values, values_to_frames
from .navq import (
    Policy,
    PolicyGradient,
    TrainConfig,
    Trajectory,
    apply_ascent,
    batch_arrays,
    log_softmax,
    policy_gradient,
    surrogate_loss,
)

INPUT_FD_STEP = 1e-4

ZLoss = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.05
    steps: int = 1
    step_size: Optional[float] = None  # None: equal to epsilon (single-step sign attack)
    target_modalities: Tuple[Modality, ...] = tuple(Modality)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.steps < 1:
            raise ValueError(f"steps must be at least 1, got {self.steps}")
        step_size = self.epsilon if self.step_size is None else float(self.step_size)
        if step_size < 0 or (step_size == 0 and self.epsilon > 0):
            raise ValueError(f"step_size must be positive, got {step_size}")
        object.__setattr__(self, "step_size", step_size)
        object.__setattr__(self, "target_modalities",
                           tuple(sorted(Modality(m) for m in self.target_modalities)))

    def mask(self, layout: Layout) -> np.ndarray:
        out = np.zeros(layout.size)
        for modality, sl in layout.slices().items():
            if modality in self.target_modalities:
                out[sl] = 1.0
        return out


@dataclass(frozen=True)
class PerturbedFrames:
    frames: List[SensorFrame]
    delta_norm: float


@dataclass(frozen=True)
class LossReport:
    clean_loss: float
    adv_loss: float
    lam: float
    total: float


# -- losses on the readout ---------------------------------------------------------

def action_nll(policy: Policy, actions) -> ZLoss:
    """``-log pi(a|z)``; ``actions`` is one action or one per batch row (last lead axis)."""
    actions = np.asarray(actions, dtype=np.int64)
    return weighted_nll(policy, actions, np.ones(actions.shape))


def weighted_nll(policy: Policy, actions, weights) -> ZLoss:
    """Per-row ``-weight * log pi(a|z)``, the per-step policy-gradient surrogate."""
    actions = np.asarray(actions, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)

    def loss(z: np.ndarray) -> np.ndarray:
        logp = log_softmax(policy.beta * z[..., : policy.action_count])
        if actions.ndim == 0:
            taken = logp[..., int(actions)]
        else:
            taken = np.take_along_axis(logp, np.broadcast_to(actions[:, None], logp.shape[:-1] + (1,)), -1)[..., 0]
        return -weights * taken

    return loss


# -- input gradients ------------------------------------------------------------------

def values_gradient(model, values: np.ndarray, loss: ZLoss, h: float = INPUT_FD_STEP) -> np.ndarray:
    """Central-difference gradient of ``loss(features(values))`` for each row of ``values``."""
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    d = values.shape[-1]
    probes = np.eye(d)[:, None, :] * h
    stacked = np.concatenate([values[None] + probes, values[None] - probes])  # (2D, B, D)
    out = np.asarray(loss(model.features_batch(stacked)), dtype=np.float64)
    grad = ((out[:d] - out[d:]) / (2 * h)).T  # (B, D)
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradient("input gradient is not finite")
    return grad


def input_gradient(model, frames: Sequence[SensorFrame], loss: ZLoss, h: float = INPUT_FD_STEP) -> List[np.ndarray]:
    """Per-frame gradients of a readout loss with respect to the sensor values.

    ``model`` is a :class:`~qnav.navq.Policy` or :class:`~qnav.fusion.FusionModel`;
    the result is aligned with ``frames``.
    """
    layout = model.layout
    grad = values_gradient(model, frames_to_values(frames, layout), loss, h)[0]
    slices = layout.slices()
    return [grad[slices[f.modality]].copy() for f in frames]


# -- attacks -------------------------------------------------------------------------------

def pgd_values(model, values: np.ndarray, loss: ZLoss, config: AttackConfig, mask: np.ndarray) -> np.ndarray:
    """Iterated ``clip(clip(x + step * sign(grad), ball), [0, 1])`` on masked components."""
    clean = np.atleast_2d(np.asarray(values, dtype=np.float64))
    if config.epsilon == 0:
        return clean.copy()
    low, high = clean - config.epsilon, clean + config.epsilon
    x = clean.copy()
    for _ in range(config.steps):
        x = x + config.step_size * np.sign(values_gradient(model, x, loss)) * mask
        x = np.clip(np.clip(x, low, high), 0.0, 1.0)
    return x


def pgd_perturb(policy: Policy, frames: Sequence[SensorFrame], config: AttackConfig,
                loss: Optional[ZLoss] = None) -> PerturbedFrames:
    """Ascend ``loss`` (default: NLL of the clean greedy action) within the epsilon ball."""
    layout = policy.layout
    clean = frames_to_values(frames, layout)
    if loss is None:
        greedy = int(np.argmax(policy.logits_batch(clean)))
        loss = action_nll(policy, greedy)
    adv = pgd_values(policy, clean, loss, config, config.mask(layout))[0]
    return PerturbedFrames(_reframe(frames, adv, layout), float(np.max(np.abs(adv - clean), initial=0.0)))


def _reframe(frames: Sequence[SensorFrame], values: np.ndarray, layout: Layout) -> List[SensorFrame]:
    by_modality = {f.modality: f for f in values_to_frames(values, layout, frames)}
    return [by_modality[f.modality] for f in frames]


class StructuredAttack(enum.Enum):
    GPS_JAM = "gps_jam"
    LIDAR_SPOOF = "lidar_spoof"
    CAMERA_PATCH = "camera_patch"


@dataclass(frozen=True)
class StructuredAttackConfig:
    spoof_floor: float = 0.125  # one lidar cell at the default 8-cell range
    spoof_rays: int = 3
    rng_seed: int = 0


def structured_attack(frames: Sequence[SensorFrame], kind, magnitude: float,
                      config: StructuredAttackConfig = StructuredAttackConfig()) -> PerturbedFrames:
    """Named physical-style attacks; only the targeted modality changes.

    * ``gps_jam``: adds ``magnitude * u`` with a fixed ``u ~ U(-1, 1)^d`` drawn from the seed.
    * ``lidar_spoof``: pulls the ``spoof_rays`` shortest rays toward ``spoof_floor``
      (reaching it at magnitude 1).
    * ``camera_patch``: flips a contiguous block of ``round(magnitude * d)`` cells.
    """
    kind = StructuredAttack(kind)
    if not 0.0 <= magnitude <= 1.0:
        raise ValueError(f"magnitude must lie in [0, 1], got {magnitude}")
    rng = np.random.default_rng([config.rng_seed, 0x57A7])
    target = {
        StructuredAttack.GPS_JAM: Modality.GPS,
        StructuredAttack.LIDAR_SPOOF: Modality.LIDAR,
        StructuredAttack.CAMERA_PATCH: Modality.CAMERA,
    }[kind]
    out, delta = [], 0.0
    for frame in frames:
        if frame.modality != target or magnitude == 0:
            out.append(frame)
            continue
        v = frame.values.copy()
        if kind is StructuredAttack.GPS_JAM:
            v = v + magnitude * rng.uniform(-1.0, 1.0, size=v.size)
        elif kind is StructuredAttack.LIDAR_SPOOF:
            nearest = np.argsort(v, kind="stable")[: config.spoof_rays]
            v[nearest] = (1.0 - magnitude) * v[nearest] + magnitude * config.spoof_floor
        else:
            width = int(round(magnitude * v.size))
            start = int(rng.integers(0, v.size - width + 1))
            v[start:start + width] = 1.0 - v[start:start + width]
        v = np.clip(v, 0.0, 1.0)
        delta = max(delta, float(np.max(np.abs(v - frame.values))))
        out.append(frame.with_values(v))
    return PerturbedFrames(out, delta)


# -- robust training ---------------------------------------------------------------------

def adversarial_replay(policy: Policy, values: np.ndarray, actions: np.ndarray, advantages: np.ndarray,
                       attack: AttackConfig) -> np.ndarray:
    """Perturb stored observations to maximize each step's own surrogate term."""
    loss = weighted_nll(policy, actions, advantages)
    return pgd_values(policy, values, loss, attack, attack.mask(policy.layout))


def robust_training_step(policy: Policy, batch: Sequence[Trajectory], lam: float, attack: AttackConfig,
                         train: TrainConfig) -> Tuple[Policy, LossReport]:
    """One ascent step on ``J_clean + lam * J_adv`` with freshly generated perturbations."""
    if not lam >= 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    values, actions, advantages = batch_arrays(policy, batch, train.baseline)
    clean = policy_gradient(policy, values, actions, advantages)
    adv_values = adversarial_replay(policy, values, actions, advantages, attack)
    if lam == 0:
        adv_loss = surrogate_loss(policy, adv_values, actions, advantages)
        grad = clean
    else:
        adv = policy_gradient(policy, adv_values, actions, advantages)
        adv_loss = adv.loss
        grad = PolicyGradient(clean.loss + lam * adv.loss, clean.theta + lam * adv.theta,
                              clean.alpha + lam * adv.alpha)
    report = LossReport(clean.loss, adv_loss, float(lam), clean.loss + lam * adv_loss)
    return apply_ascent(policy, grad, train.learning_rate), report


def degradation_percent(clean_return: float, attacked_return: float) -> float:
    if clean_return == 0:
        return 0.0 if attacked_return == 0 else math.copysign(math.inf, clean_return - attacked_return)
    return 100.0 * (clean_return - attacked_return) / abs(clean_return)
