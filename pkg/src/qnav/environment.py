"""Seeded lane-grid driving world that emits multi-modal sensor frames.

The road is ``lanes`` wide and ``length`` cells long. The vehicle starts in
the centre lane at cell 0 and the goal is the last cell. Obstacles are static
and never placed in the first ``safe_zone`` cells or on the goal row.

Everything is a pure function of ``(config, seed, action sequence)``: the
obstacle layout comes from ``seed`` and the sensor noise of step ``t`` from
``(seed, t)``, so a state can be re-rendered without replaying the episode.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .errors import ConfigError, StepAfterDone
from .fusion import Modality, SensorFrame

# (lane delta, position delta) for the eight lidar rays, forward first
LIDAR_DIRECTIONS: Tuple[Tuple[int, int], ...] = (
    (0, 1), (-1, 1), (1, 1), (-1, 0), (1, 0), (-1, -1), (1, -1), (0, -1),
)
# own lane 1..4 ahead, then left and right lanes 1..2 ahead
CAMERA_CELLS: Tuple[Tuple[int, int], ...] = (
    (0, 1), (0, 2), (0, 3), (0, 4), (-1, 1), (-1, 2), (1, 1), (1, 2),
)
_NOISY = (Modality.LIDAR, Modality.RADAR, Modality.CAMERA, Modality.GPS)


class Action(enum.IntEnum):
    STEER_LEFT = 0
    STEER_RIGHT = 1
    KEEP_LANE = 2
    ACCELERATE = 3
    BRAKE = 4


@dataclass(frozen=True)
class RewardConfig:
    progress: float = 1.0
    collision: float = -20.0
    goal: float = 50.0
    step_cost: float = 0.1


@dataclass(frozen=True)
class EnvConfig:
    lanes: int = 3
    length: int = 60
    obstacle_density: float = 0.1
    weather_factor: float = 0.3
    noise_std: float = 0.05
    lidar_range: int = 8
    radar_range: int = 16
    max_speed: int = 2
    start_speed: int = 1
    safe_zone: int = 4
    tick_us: int = 50_000
    rewards: RewardConfig = field(default_factory=RewardConfig)

    def validate(self, prefix: str = "environment") -> "EnvConfig":
        if self.lanes < 3:
            raise ConfigError(f"{prefix}.lanes", f"need at least 3 lanes, got {self.lanes}")
        if self.length < 20:
            raise ConfigError(f"{prefix}.length", f"need at least 20 cells, got {self.length}")
        if not 0.0 <= self.obstacle_density <= 0.3:
            raise ConfigError(f"{prefix}.obstacle_density", f"must lie in [0, 0.3], got {self.obstacle_density}")
        if not 0.0 <= self.weather_factor <= 1.0:
            raise ConfigError(f"{prefix}.weather_factor", f"must lie in [0, 1], got {self.weather_factor}")
        if self.noise_std < 0:
            raise ConfigError(f"{prefix}.noise_std", "must be non-negative")
        if self.lidar_range < 1 or self.radar_range < 1:
            raise ConfigError(f"{prefix}.lidar_range", "sensor ranges must be positive")
        if self.max_speed != 2:
            raise ConfigError(f"{prefix}.max_speed", "speed is limited to {0, 1, 2}")
        if not 0 <= self.start_speed <= self.max_speed:
            raise ConfigError(f"{prefix}.start_speed", f"must lie in [0, {self.max_speed}]")
        if not 1 <= self.safe_zone < self.length - 1:
            raise ConfigError(f"{prefix}.safe_zone", "must leave room for the road")
        return self


@dataclass(frozen=True)
class WorldState:
    config: EnvConfig
    grid: np.ndarray  # (lanes, length) bool obstacle occupancy
    lane: int
    position: int
    speed: int
    rng_seed: int
    step_index: int = 0
    done: bool = False

    @property
    def goal_position(self) -> int:
        return self.config.length - 1

    @property
    def goal_distance(self) -> int:
        return self.goal_position - self.position

    @property
    def weather_factor(self) -> float:
        return self.config.weather_factor


@dataclass(frozen=True)
class StepResult:
    state: WorldState
    frames: List[SensorFrame]
    reward: float
    done: bool
    collision: bool = False
    goal_reached: bool = False
    cells_advanced: int = 0


def _place_obstacles(config: EnvConfig, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 0x0B57])
    grid = rng.random((config.lanes, config.length)) < config.obstacle_density
    grid[:, : config.safe_zone] = False
    grid[:, config.length - 1] = False
    grid.flags.writeable = False
    return grid


def reset(config: EnvConfig, seed: int) -> StepResult:
    config.validate()
    state = WorldState(
        config=config,
        grid=_place_obstacles(config, seed),
        lane=config.lanes // 2,
        position=0,
        speed=config.start_speed,
        rng_seed=int(seed),
    )
    return StepResult(state, render_frames(state), 0.0, False)


def step(state: WorldState, action: Action) -> StepResult:
    if state.done:
        raise StepAfterDone("episode already finished; call reset()")
    action = Action(action)
    cfg = state.config
    lane, speed = state.lane, state.speed
    if action is Action.STEER_LEFT:
        lane = max(0, lane - 1)
    elif action is Action.STEER_RIGHT:
        lane = min(cfg.lanes - 1, lane + 1)
    elif action is Action.ACCELERATE:
        speed = min(cfg.max_speed, speed + 1)
    elif action is Action.BRAKE:
        speed = max(0, speed - 1)

    collision = goal = False
    advanced = 0
    if lane != state.lane and state.grid[lane, state.position]:
        collision = True
    else:
        for k in range(1, speed + 1):
            cell = state.position + k
            if state.grid[lane, cell]:
                collision = True
                break
            advanced = k
            if cell >= state.goal_position:
                goal = True
                break

    r = cfg.rewards
    reward = r.progress * advanced - r.step_cost
    if collision:
        reward += r.collision
    if goal:
        reward += r.goal
    done = collision or goal
    new_state = replace(
        state,
        lane=lane,
        position=state.position + advanced,
        speed=speed,
        step_index=state.step_index + 1,
        done=done,
    )
    return StepResult(new_state, render_frames(new_state), reward, done, collision, goal, advanced)


def _cell_blocked(state: WorldState, lane: int, pos: int) -> Optional[bool]:
    """True for an obstacle, False for free road, None when off the grid."""
    if not 0 <= lane < state.config.lanes or not 0 <= pos < state.config.length:
        return None
    return bool(state.grid[lane, pos])


def lidar_rays(state: WorldState) -> np.ndarray:
    """Distance to the first obstacle along each ray over ``lidar_range``; 1.0 means no hit."""
    rng_max = state.config.lidar_range
    rays = np.ones(len(LIDAR_DIRECTIONS))
    for i, (dl, dp) in enumerate(LIDAR_DIRECTIONS):
        for k in range(1, rng_max + 1):
            hit = _cell_blocked(state, state.lane + k * dl, state.position + k * dp)
            if hit is None:
                break
            if hit:
                rays[i] = k / rng_max
                break
    return rays


def radar_returns(state: WorldState) -> np.ndarray:
    """(closing speed, range) for the two nearest obstacles ahead; (0, 1) when absent."""
    cfg = state.config
    hits = []
    for lane in range(cfg.lanes):
        for pos in range(state.position + 1, min(cfg.length, state.position + cfg.radar_range + 1)):
            if state.grid[lane, pos]:
                dl, dp = lane - state.lane, pos - state.position
                hits.append((float(np.hypot(dl, dp)), dp, lane))
    hits.sort()
    out = [0.0, 1.0, 0.0, 1.0]
    for i, (dist, dp, _) in enumerate(hits[:2]):
        out[2 * i] = state.speed * (dp / dist) / cfg.max_speed
        out[2 * i + 1] = min(1.0, dist / cfg.radar_range)
    return np.array(out)


def camera_cells(state: WorldState) -> np.ndarray:
    """Occupancy of the cells ahead; off-road cells read as occupied."""
    out = np.zeros(len(CAMERA_CELLS))
    for i, (dl, dp) in enumerate(CAMERA_CELLS):
        lane, pos = state.lane + dl, state.position + dp
        if not 0 <= lane < state.config.lanes:
            out[i] = 1.0
        elif pos < state.config.length and state.grid[lane, pos]:
            out[i] = 1.0
    return out


def gps_fix(state: WorldState) -> np.ndarray:
    cfg = state.config
    return np.array([
        state.lane / (cfg.lanes - 1),
        state.position / (cfg.length - 1),
        state.speed / cfg.max_speed,
    ])


def render_frames(state: WorldState) -> List[SensorFrame]:
    cfg = state.config
    clean = {
        Modality.LIDAR: lidar_rays(state),
        Modality.RADAR: radar_returns(state),
        Modality.CAMERA: camera_cells(state),
        Modality.GPS: gps_fix(state),
    }
    std = cfg.noise_std * cfg.weather_factor
    realized = 0.0
    if std > 0:
        rng = np.random.default_rng([state.rng_seed, state.step_index, 0x5E45])
        abs_sum, count = 0.0, 0
        for modality in _NOISY:
            noise = rng.normal(0.0, std, size=clean[modality].shape)
            clean[modality] = np.clip(clean[modality] + noise, 0.0, 1.0)
            abs_sum += float(np.abs(noise).sum())
            count += noise.size
        # mean |noise| relative to its largest plausible value, 3 std
        realized = min(1.0, abs_sum / count / (3.0 * cfg.noise_std))
    clean[Modality.WEATHER] = np.array([cfg.weather_factor, realized])
    stamp = state.step_index * cfg.tick_us
    return [SensorFrame(m, clean[m], stamp) for m in Modality]


class DrivingEnv:
    """Stateful convenience wrapper around :func:`reset` and :func:`step`."""

    def __init__(self, config: EnvConfig = EnvConfig()):
        self.config = config.validate()
        self.state: Optional[WorldState] = None

    def reset(self, seed: int) -> StepResult:
        result = reset(self.config, seed)
        self.state = result.state
        return result

    def step(self, action: Action) -> StepResult:
        if self.state is None:
            raise RuntimeError("reset() must be called before step()")
        result = step(self.state, action)
        self.state = result.state
        return result
