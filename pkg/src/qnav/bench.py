"""Latency of one secured decision tick, stage by stage.

A tick is: pack and seal the sensor frames, push the frame through a local
stream socket, read and open it, encode, run the ansatz gate by gate, and
turn the Z readout into an action distribution.
"""
from __future__ import annotations

import socket
import time
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .environment import Action, EnvConfig, reset, step
from .fusion import SensorFrame, apply_ansatz, encode_frames, extract_features, pack_frames, unpack_frames
from .navq import Policy, softmax
from .securebus import SensorCredentials, connect, get_suite, open_frame, recv_frame_bytes, seal_frame, send_frame

STAGES = ("seal", "transport", "open", "encode", "ansatz", "action")


@dataclass(frozen=True)
class StageStats:
    p50_ms: float
    p99_ms: float
    mean_ms: float


@dataclass(frozen=True)
class BenchReport:
    ticks: int
    num_qubits: int
    depth: int
    budget_ms: float
    stages: Dict[str, StageStats]
    total: StageStats

    @property
    def passed(self) -> bool:
        return self.total.p99_ms < self.budget_ms

    def rows(self) -> List[Dict[str, object]]:
        out = [{"stage": name, "p50_ms": s.p50_ms, "p99_ms": s.p99_ms, "mean_ms": s.mean_ms}
               for name, s in self.stages.items()]
        out.append({"stage": "total", "p50_ms": self.total.p50_ms, "p99_ms": self.total.p99_ms,
                    "mean_ms": self.total.mean_ms})
        return out


def _stats(samples_ms: np.ndarray) -> StageStats:
    return StageStats(float(np.percentile(samples_ms, 50)), float(np.percentile(samples_ms, 99)),
                      float(np.mean(samples_ms)))


def sample_frames(env_config: EnvConfig, count: int, seed: int = 0) -> List[List[SensorFrame]]:
    """Frames from random-action rollouts, restarting whenever an episode ends."""
    rng = np.random.default_rng([seed, 0xBE7C])
    out: List[List[SensorFrame]] = []
    episode = 0
    result = reset(env_config, seed)
    while len(out) < count:
        out.append(list(result.frames))
        if result.done:
            episode += 1
            result = reset(env_config, seed + episode)
        else:
            result = step(result.state, Action(int(rng.integers(len(Action)))))
    return out


def run_bench(policy: Policy, frames: Sequence[Sequence[SensorFrame]], *, suite_id: int = 1, seed: int = 0,
              budget_ms: float = 50.0, sensor_id: int = 1) -> BenchReport:
    """Time every stage of ``len(frames)`` ticks over a connected socket pair."""
    suite = get_suite(suite_id, seed)
    creds = SensorCredentials.generate(suite, sensor_id)
    sensor, processor = connect(creds, {sensor_id: creds.record()}, suite)
    clock = time.perf_counter_ns
    timings = np.zeros((len(frames), len(STAGES)))
    tx, rx = socket.socketpair()
    try:
        for i, tick_frames in enumerate(frames):
            t0 = clock()
            frame = seal_frame(sensor, pack_frames(tick_frames))
            t1 = clock()
            send_frame(tx, frame)
            raw = recv_frame_bytes(rx)
            t2 = clock()
            received = unpack_frames(open_frame(processor, raw))
            t3 = clock()
            fused = encode_frames(received, policy.attention, policy.circuit.num_qubits)
            t4 = clock()
            evolved = apply_ansatz(fused, policy.circuit)
            t5 = clock()
            softmax(policy.beta * extract_features(evolved)[: policy.action_count])
            t6 = clock()
            timings[i] = np.diff([t0, t1, t2, t3, t4, t5, t6]) / 1e6
    finally:
        tx.close()
        rx.close()
    stages = {name: _stats(timings[:, k]) for k, name in enumerate(STAGES)}
    return BenchReport(len(frames), policy.circuit.num_qubits, policy.circuit.depth, budget_ms, stages,
                       _stats(timings.sum(axis=1)))
