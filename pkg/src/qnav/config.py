"""JSON experiment configuration with validation at load time.

Every error is a :class:`~qnav.errors.ConfigError` whose ``path`` names the
offending field, e.g. ``fusion.dims`` or ``navq.learning_rate``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .adversarial import AttackConfig, StructuredAttack
from .environment import Action, EnvConfig, RewardConfig
from .errors import ConfigError
from .fusion import DEFAULT_DIMS, Modality
from .navq import Baseline, TrainConfig

ATTACK_NAMES = ("pgd",) + tuple(a.value for a in StructuredAttack)


@dataclass(frozen=True)
class FusionSection:
    num_qubits: int = 5
    depth: int = 3
    dims: Tuple[Tuple[Modality, int], ...] = tuple(DEFAULT_DIMS.items())
    init_scale: float = 0.1

    @property
    def dims_map(self) -> Dict[Modality, int]:
        return dict(self.dims)


@dataclass(frozen=True)
class NavqSection:
    learning_rate: float = 0.05
    episodes_per_update: int = 16
    baseline: str = "mean_return"
    gamma: float = 0.99
    beta: float = 2.0
    episodes: int = 500


@dataclass(frozen=True)
class AdversarialSection:
    lam: float = 0.0
    epsilon: float = 0.05
    steps: int = 1
    step_size: Optional[float] = None
    target_modalities: Tuple[Modality, ...] = tuple(Modality)
    eval_epsilons: Tuple[float, ...] = (0.0, 0.02, 0.05, 0.1)
    eval_attacks: Tuple[str, ...] = ("pgd",)
    eval_episodes: int = 100

    def attack(self, epsilon: Optional[float] = None, seed: int = 0) -> AttackConfig:
        eps = self.epsilon if epsilon is None else epsilon
        step = self.step_size
        if step is not None and eps == 0:
            step = 0.0
        return AttackConfig(eps, self.steps, step, self.target_modalities, seed)


@dataclass(frozen=True)
class SecureBusSection:
    suite_id: int = 1
    registry_path: Optional[str] = None
    sensor_id: int = 1
    sign_frames: bool = False
    frames: int = 32


@dataclass(frozen=True)
class BenchSection:
    ticks: int = 1000
    latency_budget_ms: float = 50.0


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    environment: EnvConfig = field(default_factory=EnvConfig)
    fusion: FusionSection = field(default_factory=FusionSection)
    navq: NavqSection = field(default_factory=NavqSection)
    adversarial: AdversarialSection = field(default_factory=AdversarialSection)
    securebus: SecureBusSection = field(default_factory=SecureBusSection)
    bench: BenchSection = field(default_factory=BenchSection)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.navq.learning_rate, self.navq.episodes_per_update, Baseline(self.navq.baseline),
                           self.navq.gamma, self.seed)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return dataclasses.replace(self, seed=int(seed))

    def to_dict(self) -> Dict[str, Any]:
        return _plain(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if f.name == "dims":
                value = {Modality(m).label: d for m, d in value}
            out["lambda" if f.name == "lam" else f.name] = _plain(value)
        return out
    if isinstance(obj, Modality):
        return obj.label
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


# -- parsing ---------------------------------------------------------------------------

class _Section:
    """Pops typed fields out of one JSON object, reporting full field paths."""

    def __init__(self, data: Any, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path or "<root>", "expected a JSON object")
        self.data = dict(data)
        self.path = path

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def num(self, key, default, *, integer=False, lo=None, hi=None, lo_open=False):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        path = self._p(key)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if integer and not (isinstance(value, int) or float(value).is_integer()):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(path, "must be finite")
        if lo is not None and (value <= lo if lo_open else value < lo):
            raise ConfigError(path, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
        if hi is not None and value > hi:
            raise ConfigError(path, f"must be <= {hi}, got {value}")
        return int(value) if integer else float(value)

    def flag(self, key, default):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        if not isinstance(value, bool):
            raise ConfigError(self._p(key), f"expected true/false, got {value!r}")
        return value

    def text(self, key, default, choices=None, nullable=False):
        if key not in self.data:
            return default
        value = self.data.pop(key)
        if value is None and nullable:
            return None
        if not isinstance(value, str):
            raise ConfigError(self._p(key), f"expected a string, got {value!r}")
        if choices is not None and value not in choices:
            raise ConfigError(self._p(key), f"must be one of {sorted(choices)}, got {value!r}")
        return value

    def sub(self, key) -> "_Section":
        return _Section(self.data.pop(key, {}), self._p(key))

    def raw(self, key, default):
        return self.data.pop(key, default)

    def done(self) -> None:
        if self.data:
            raise ConfigError(self._p(sorted(self.data)[0]), "unknown field")


def _modalities(value, path) -> Tuple[Modality, ...]:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list of modality names")
    try:
        return tuple(sorted({Modality.parse(v) for v in value}))
    except (ValueError, AttributeError) as exc:
        raise ConfigError(path, str(exc)) from None


def _parse_environment(s: _Section) -> EnvConfig:
    d = EnvConfig()
    r = s.sub("rewards")
    rewards = RewardConfig(
        progress=r.num("progress", RewardConfig.progress),
        collision=r.num("collision", RewardConfig.collision),
        goal=r.num("goal", RewardConfig.goal),
        step_cost=r.num("step_cost", RewardConfig.step_cost),
    )
    r.done()
    cfg = EnvConfig(
        lanes=s.num("lanes", d.lanes, integer=True),
        length=s.num("length", d.length, integer=True),
        obstacle_density=s.num("obstacle_density", d.obstacle_density),
        weather_factor=s.num("weather_factor", d.weather_factor),
        noise_std=s.num("noise_std", d.noise_std),
        lidar_range=s.num("lidar_range", d.lidar_range, integer=True),
        radar_range=s.num("radar_range", d.radar_range, integer=True),
        max_speed=s.num("max_speed", d.max_speed, integer=True),
        start_speed=s.num("start_speed", d.start_speed, integer=True),
        safe_zone=s.num("safe_zone", d.safe_zone, integer=True),
        tick_us=s.num("tick_us", d.tick_us, integer=True, lo=1),
        rewards=rewards,
    )
    s.done()
    return cfg.validate(s.path)


def _parse_fusion(s: _Section) -> FusionSection:
    d = FusionSection()
    q = s.num("num_qubits", d.num_qubits, integer=True, lo=1, hi=20)
    depth = s.num("depth", d.depth, integer=True, lo=1)
    dims = d.dims
    if "dims" in s.data:
        raw = s.raw("dims", None)
        if not isinstance(raw, dict) or not raw:
            raise ConfigError(s._p("dims"), "expected an object mapping modality name to width")
        parsed = {}
        for name, width in raw.items():
            path = s._p(f"dims.{name}")
            try:
                modality = Modality.parse(name)
            except ValueError as exc:
                raise ConfigError(path, str(exc)) from None
            if isinstance(width, bool) or not isinstance(width, int) or width < 1:
                raise ConfigError(path, f"expected a positive integer, got {width!r}")
            parsed[modality] = width
        dims = tuple(sorted(parsed.items()))
    for modality, width in dims:
        if width != DEFAULT_DIMS[modality]:
            raise ConfigError(s._p(f"dims.{modality.label}"),
                              f"the environment emits {DEFAULT_DIMS[modality]} components, got {width}")
    missing = [m.label for m in DEFAULT_DIMS if m not in dict(dims)]
    if missing:
        raise ConfigError(s._p("dims"), f"missing modalities {missing}; the environment emits all of them")
    total = sum(w for _, w in dims)
    if total > 1 << q:
        raise ConfigError(s._p("dims"), f"sum of modality widths {total} exceeds 2^num_qubits = {1 << q}")
    if len(Action) > q:
        raise ConfigError(s._p("num_qubits"), f"{len(Action)} actions need at least {len(Action)} readout qubits")
    section = FusionSection(q, depth, dims, s.num("init_scale", d.init_scale, lo=0))
    s.done()
    return section


def _parse_navq(s: _Section) -> NavqSection:
    d = NavqSection()
    section = NavqSection(
        learning_rate=s.num("learning_rate", d.learning_rate, lo=0),
        episodes_per_update=s.num("episodes_per_update", d.episodes_per_update, integer=True, lo=1),
        baseline=s.text("baseline", d.baseline, {b.value for b in Baseline}),
        gamma=s.num("gamma", d.gamma, lo=0, hi=1, lo_open=True),
        beta=s.num("beta", d.beta, lo=0, lo_open=True),
        episodes=s.num("episodes", d.episodes, integer=True, lo=1),
    )
    s.done()
    return section


def _parse_adversarial(s: _Section) -> AdversarialSection:
    d = AdversarialSection()
    lam = s.num("lambda", d.lam, lo=0)
    epsilon = s.num("epsilon", d.epsilon, lo=0)
    steps = s.num("steps", d.steps, integer=True, lo=1)
    step_size = d.step_size
    if "step_size" in s.data and s.data["step_size"] is None:
        s.raw("step_size", None)
    else:
        step_size = s.num("step_size", d.step_size, lo=0, lo_open=True)
    targets = d.target_modalities
    if "target_modalities" in s.data:
        targets = _modalities(s.raw("target_modalities", None), s._p("target_modalities"))
    eps_grid = d.eval_epsilons
    if "eval_epsilons" in s.data:
        raw = s.raw("eval_epsilons", None)
        if not isinstance(raw, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and 0 <= v <= 1
                                                 for v in raw):
            raise ConfigError(s._p("eval_epsilons"), "expected a list of numbers in [0, 1]")
        eps_grid = tuple(float(v) for v in raw)
    attacks = d.eval_attacks
    if "eval_attacks" in s.data:
        raw = s.raw("eval_attacks", None)
        if not isinstance(raw, list):
            raise ConfigError(s._p("eval_attacks"), "expected a list of attack names")
        for name in raw:
            if name not in ATTACK_NAMES:
                raise ConfigError(s._p("eval_attacks"), f"unknown attack {name!r}; choose from {list(ATTACK_NAMES)}")
        attacks = tuple(raw)
    section = AdversarialSection(lam, epsilon, steps, step_size, targets, eps_grid, attacks,
                                 s.num("eval_episodes", d.eval_episodes, integer=True, lo=1))
    s.done()
    return section


def _parse_securebus(s: _Section) -> SecureBusSection:
    d = SecureBusSection()
    section = SecureBusSection(
        suite_id=s.num("suite_id", d.suite_id, integer=True, lo=0, hi=255),
        registry_path=s.text("registry_path", d.registry_path, nullable=True),
        sensor_id=s.num("sensor_id", d.sensor_id, integer=True, lo=0, hi=0xFFFF),
        sign_frames=s.flag("sign_frames", d.sign_frames),
        frames=s.num("frames", d.frames, integer=True, lo=1),
    )
    s.done()
    return section


def _parse_bench(s: _Section) -> BenchSection:
    d = BenchSection()
    section = BenchSection(
        ticks=s.num("ticks", d.ticks, integer=True, lo=1),
        latency_budget_ms=s.num("latency_budget_ms", d.latency_budget_ms, lo=0, lo_open=True),
    )
    s.done()
    return section


def parse_config(data: Mapping[str, Any]) -> ExperimentConfig:
    root = _Section(data, "")
    cfg = ExperimentConfig(
        seed=root.num("seed", 0, integer=True, lo=0),
        output_dir=root.text("output_dir", ExperimentConfig.output_dir),
        environment=_parse_environment(root.sub("environment")),
        fusion=_parse_fusion(root.sub("fusion")),
        navq=_parse_navq(root.sub("navq")),
        adversarial=_parse_adversarial(root.sub("adversarial")),
        securebus=_parse_securebus(root.sub("securebus")),
        bench=_parse_bench(root.sub("bench")),
    )
    root.done()
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return parse_config(data)


def default_config_dict() -> Dict[str, Any]:
    return ExperimentConfig().to_dict()
