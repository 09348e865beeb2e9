"""Attention-weighted amplitude encoding of sensor frames and the layered RY/CNOT ansatz.

Layout: modalities are concatenated in :class:`Modality` order (only the
modalities present in the attention weights), components in natural order,
starting at basis index 0. Component ``j`` of modality ``i`` therefore lands
on basis index ``offset[i] + j``; the tail ``2**Q - sum(d_i)`` amplitudes are
zero padding.

One ansatz layer is a full RY sublayer on qubits ``0..Q-1`` followed by the
ascending CNOT ladder ``CNOT(0,1), CNOT(1,2), ..., CNOT(Q-2,Q-1)``.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .errors import AllZeroInput, CapacityExceeded, ShapeMismatch
from .statevector import (
    GateKind,
    GateSpec,
    QuantumState,
    _apply_gates,
    _cnot,
    _ry,
    expectation_z,
    z_signs,
)


class Modality(enum.IntEnum):
    LIDAR = 0
    RADAR = 1
    CAMERA = 2
    GPS = 3
    WEATHER = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, name: str) -> "Modality":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown modality {name!r}") from None


DEFAULT_DIMS: Dict[Modality, int] = {
    Modality.LIDAR: 8,
    Modality.RADAR: 4,
    Modality.CAMERA: 8,
    Modality.GPS: 3,
    Modality.WEATHER: 2,
}
DEFAULT_QUBITS = 5
DEFAULT_DEPTH = 3
# above this the dense unitary costs more than replaying the gates
UNITARY_MAX_QUBITS = 10


@dataclass(frozen=True)
class SensorFrame:
    """One modality's normalized reading; every component lies in [0, 1]."""

    modality: Modality
    values: np.ndarray
    timestamp_us: int = 0

    def __post_init__(self):
        object.__setattr__(self, "modality", Modality(self.modality))
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.modality.label} frame has non-finite components")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError(f"{self.modality.label} frame components must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def with_values(self, values) -> "SensorFrame":
        return SensorFrame(self.modality, values, self.timestamp_us)


@dataclass(frozen=True)
class AttentionWeights:
    """Per-component attention weights, one vector per modality."""

    weights: Mapping[Modality, np.ndarray]
    trainable: bool = True

    def __post_init__(self):
        clean = {}
        for modality in sorted(self.weights):
            w = np.array(self.weights[modality], dtype=np.float64).reshape(-1)
            if w.size == 0:
                raise ShapeMismatch(f"{Modality(modality).label} attention weights are empty")
            if not np.all(np.isfinite(w)):
                raise ValueError(f"{Modality(modality).label} attention weights are not finite")
            if not np.any(w != 0.0):
                raise ValueError(f"{Modality(modality).label} attention weights are all zero")
            w.flags.writeable = False
            clean[Modality(modality)] = w
        object.__setattr__(self, "weights", clean)

    @classmethod
    def ones(cls, dims: Mapping[Modality, int] = DEFAULT_DIMS, trainable: bool = True) -> "AttentionWeights":
        return cls({m: np.ones(d) for m, d in dims.items()}, trainable)

    @property
    def dims(self) -> Dict[Modality, int]:
        return {m: w.size for m, w in self.weights.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights[m] for m in self.weights])

    def from_flat(self, flat: np.ndarray) -> "AttentionWeights":
        out, start = {}, 0
        for m, w in self.weights.items():
            out[m] = np.asarray(flat[start:start + w.size], dtype=np.float64)
            start += w.size
        return AttentionWeights(out, self.trainable)


@dataclass(frozen=True)
class CircuitParams:
    """Trainable angles of an ``depth`` x ``num_qubits`` RY/CNOT ansatz."""

    depth: int
    num_qubits: int
    thetas: np.ndarray

    def __post_init__(self):
        if self.depth < 1 or self.num_qubits < 1:
            raise ValueError("depth and num_qubits must be positive")
        thetas = np.array(self.thetas, dtype=np.float64)
        if thetas.shape != (self.depth, self.num_qubits):
            raise ShapeMismatch(f"thetas shape {thetas.shape} != ({self.depth}, {self.num_qubits})")
        if not np.all(np.isfinite(thetas)):
            raise ValueError("thetas must be finite")
        thetas.flags.writeable = False
        object.__setattr__(self, "thetas", thetas)

    @classmethod
    def zeros(cls, depth: int = DEFAULT_DEPTH, num_qubits: int = DEFAULT_QUBITS) -> "CircuitParams":
        return cls(depth, num_qubits, np.zeros((depth, num_qubits)))

    @classmethod
    def random(cls, depth: int, num_qubits: int, rng, scale: float = math.pi) -> "CircuitParams":
        rng = np.random.default_rng(rng)
        return cls(depth, num_qubits, rng.uniform(-scale, scale, size=(depth, num_qubits)))

    def with_thetas(self, thetas: np.ndarray) -> "CircuitParams":
        return CircuitParams(self.depth, self.num_qubits, thetas)


@dataclass(frozen=True)
class Layout:
    """Injective map from (modality, component) to basis index."""

    dims: Tuple[Tuple[Modality, int], ...]

    @classmethod
    def from_dims(cls, dims: Mapping[Modality, int]) -> "Layout":
        return cls(tuple((Modality(m), int(dims[m])) for m in sorted(dims)))

    @property
    def size(self) -> int:
        return sum(d for _, d in self.dims)

    @property
    def modalities(self) -> List[Modality]:
        return [m for m, _ in self.dims]

    def offset(self, modality: Modality) -> int:
        start = 0
        for m, d in self.dims:
            if m == modality:
                return start
            start += d
        raise KeyError(modality)

    def index(self, modality: Modality, component: int) -> int:
        d = dict(self.dims)[modality]
        if not 0 <= component < d:
            raise IndexError(f"component {component} out of range for {modality.label}")
        return self.offset(modality) + component

    def slices(self) -> Dict[Modality, slice]:
        out, start = {}, 0
        for m, d in self.dims:
            out[m] = slice(start, start + d)
            start += d
        return out


@dataclass(frozen=True)
class FusedState:
    state: QuantumState
    norm_factor: float
    layout: Layout


def frames_to_values(frames: Sequence[SensorFrame], layout: Layout) -> np.ndarray:
    """Concatenate frame values in layout order, checking each modality's width."""
    by_modality = {}
    for frame in frames:
        if frame.modality in by_modality:
            raise ShapeMismatch(f"duplicate {frame.modality.label} frame")
        by_modality[frame.modality] = frame
    parts = []
    for modality, d in layout.dims:
        frame = by_modality.get(modality)
        if frame is None:
            raise ShapeMismatch(f"missing {modality.label} frame")
        if frame.values.size != d:
            raise ShapeMismatch(f"{modality.label} frame has {frame.values.size} components, expected {d}")
        parts.append(frame.values)
    extra = set(by_modality) - set(layout.modalities)
    if extra:
        raise ShapeMismatch(f"unexpected frames: {sorted(m.label for m in extra)}")
    return np.concatenate(parts)


def values_to_frames(values: np.ndarray, layout: Layout, template: Sequence[SensorFrame] = ()) -> List[SensorFrame]:
    stamps = {f.modality: f.timestamp_us for f in template}
    return [SensorFrame(m, values[sl], stamps.get(m, 0)) for m, sl in layout.slices().items()]


def encode_values(values: np.ndarray, alpha: np.ndarray, num_qubits: int) -> Tuple[np.ndarray, np.ndarray]:
    """Batched real encoding: rows of ``values * alpha`` normalized and zero padded.

    Returns ``(amplitudes, norm_factor)`` with shapes ``(..., 2**Q)`` and ``(...)``.
    Inputs are not range-checked, so finite-difference probes may step outside [0, 1].
    """
    weighted = np.asarray(values, dtype=np.float64) * alpha
    dim = 1 << num_qubits
    if weighted.shape[-1] > dim:
        raise CapacityExceeded(f"{weighted.shape[-1]} components do not fit in {dim} amplitudes")
    norm_factor = np.einsum("...i,...i->...", weighted, weighted)
    if np.any(norm_factor == 0.0):
        raise AllZeroInput("weighted sensor input is all zero; cannot normalize")
    amps = np.zeros(weighted.shape[:-1] + (dim,))
    amps[..., : weighted.shape[-1]] = weighted / np.sqrt(norm_factor)[..., None]
    return amps, norm_factor


def encode_frames(frames: Sequence[SensorFrame], weights: AttentionWeights, num_qubits: int) -> FusedState:
    layout = Layout.from_dims(weights.dims)
    if layout.size > 1 << num_qubits:
        raise CapacityExceeded(f"{layout.size} sensor components exceed 2^{num_qubits} = {1 << num_qubits}")
    values = frames_to_values(frames, layout)
    amps, norm_factor = encode_values(values, weights.flat(), num_qubits)
    return FusedState(QuantumState(amps, num_qubits), float(norm_factor), layout)


def ansatz_gates(params: CircuitParams) -> List[GateSpec]:
    gates = []
    for layer in range(params.depth):
        for q in range(params.num_qubits):
            gates.append(GateSpec(GateKind.RY, q, angle=float(params.thetas[layer, q])))
        for q in range(params.num_qubits - 1):
            gates.append(GateSpec(GateKind.CNOT, q + 1, control=q))
    return gates


def run_ansatz(amps: np.ndarray, thetas: np.ndarray, num_qubits: int) -> np.ndarray:
    """Apply the ansatz to a batch of amplitude rows.

    ``thetas`` is ``(L, Q)`` or ``(B, L, Q)``; in the second form every
    parameter set is paired with the matching row of ``amps``.
    """
    batched = thetas.ndim == 3
    depth = thetas.shape[-2]
    for layer in range(depth):
        for q in range(num_qubits):
            angle = thetas[:, layer, q] if batched else thetas[layer, q]
            amps = _ry(amps, q, angle, num_qubits)
        for q in range(num_qubits - 1):
            amps = _cnot(amps, q, q + 1, num_qubits)
    return amps


def ansatz_unitary(params: CircuitParams) -> np.ndarray:
    """Real orthogonal matrix of the ansatz (RY and CNOT are both real)."""
    eye = np.eye(1 << params.num_qubits)
    # rows of eye are basis states; the outputs are the columns of U
    return run_ansatz(eye, params.thetas, params.num_qubits).T


def apply_ansatz(fused: FusedState, params: CircuitParams) -> QuantumState:
    state = fused.state if isinstance(fused, FusedState) else fused
    if params.num_qubits != state.num_qubits:
        raise ShapeMismatch(f"circuit has {params.num_qubits} qubits, state has {state.num_qubits}")
    return QuantumState(_apply_gates(state.amplitudes, ansatz_gates(params), state.num_qubits), state.num_qubits)


def extract_features(state: QuantumState) -> np.ndarray:
    return np.array([expectation_z(state, q) for q in range(state.num_qubits)])


def z_features(amps: np.ndarray, num_qubits: int) -> np.ndarray:
    """Batched Z readout for real or complex amplitude rows: ``(..., 2**Q) -> (..., Q)``."""
    probs = amps.real ** 2 + amps.imag ** 2 if np.iscomplexobj(amps) else amps * amps
    return probs @ z_signs(num_qubits)


@dataclass(frozen=True)
class FusionModel:
    """Encoder plus circuit; evaluates Z features for batches of raw value rows."""

    circuit: CircuitParams
    attention: AttentionWeights = field(default_factory=AttentionWeights.ones)

    def __post_init__(self):
        if self.layout.size > 1 << self.circuit.num_qubits:
            raise CapacityExceeded(
                f"{self.layout.size} sensor components exceed 2^{self.circuit.num_qubits}"
            )

    @property
    def layout(self) -> Layout:
        return Layout.from_dims(self.attention.dims)

    @property
    def num_qubits(self) -> int:
        return self.circuit.num_qubits

    def unitary(self) -> np.ndarray:
        cached = self.__dict__.get("_unitary")
        if cached is None:
            cached = ansatz_unitary(self.circuit)
            object.__setattr__(self, "_unitary", cached)
        return cached

    def evolve(self, amps: np.ndarray) -> np.ndarray:
        if self.num_qubits > UNITARY_MAX_QUBITS:
            return run_ansatz(amps, self.circuit.thetas, self.num_qubits)
        return amps @ self.unitary().T

    def features_batch(self, values: np.ndarray, alpha: np.ndarray = None) -> np.ndarray:
        alpha = self.attention.flat() if alpha is None else alpha
        amps, _ = encode_values(values, alpha, self.num_qubits)
        return z_features(self.evolve(amps), self.num_qubits)

    def features(self, frames: Sequence[SensorFrame]) -> np.ndarray:
        return self.features_batch(frames_to_values(frames, self.layout))


# -- transport codec -----------------------------------------------------------

_FRAME_HEAD = struct.Struct("<BHQ")


def pack_frames(frames: Sequence[SensorFrame]) -> bytes:
    """Serialize frames for transport: ``u8 count`` then, per frame,
    ``u8 modality, u16 width, u64 timestamp_us`` and ``width`` little-endian f64 values."""
    out = bytearray([len(frames)])
    for f in frames:
        out += _FRAME_HEAD.pack(int(f.modality), f.values.size, f.timestamp_us)
        out += f.values.astype("<f8").tobytes()
    return bytes(out)


def unpack_frames(data: bytes) -> List[SensorFrame]:
    """Inverse of :func:`pack_frames`; raises ``ValueError`` on malformed input."""
    data = bytes(data)
    if not data:
        raise ValueError("empty sensor payload")
    frames, pos = [], 1
    for _ in range(data[0]):
        if len(data) < pos + _FRAME_HEAD.size:
            raise ValueError("truncated sensor payload")
        modality, width, stamp = _FRAME_HEAD.unpack_from(data, pos)
        pos += _FRAME_HEAD.size
        end = pos + 8 * width
        if len(data) < end:
            raise ValueError("truncated sensor payload")
        frames.append(SensorFrame(Modality(modality), np.frombuffer(data[pos:end], dtype="<f8"), stamp))
        pos = end
    if pos != len(data):
        raise ValueError(f"{len(data) - pos} trailing bytes in sensor payload")
    return frames


# -- checkpoints ---------------------------------------------------------------

CHECKPOINT_MAGIC = "QNAV-CHECKPOINT"
CHECKPOINT_VERSION = 1


def dump_checkpoint(circuit: CircuitParams, attention: AttentionWeights) -> str:
    """Text checkpoint; floats are written with 17 significant digits (exact round trip).

    Layout::

        QNAV-CHECKPOINT 1
        depth <L> qubits <Q>
        theta <l> <theta_l0> ... <theta_l(Q-1)>        (L lines, row-major)
        modalities <count>
        alpha <modality> <d> <w_0> ... <w_(d-1)>       (one line per modality, layout order)
    """
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"depth {circuit.depth} qubits {circuit.num_qubits}"]
    for layer, row in enumerate(circuit.thetas):
        lines.append(f"theta {layer} " + " ".join(f"{v:.17g}" for v in row))
    lines.append(f"modalities {len(attention.weights)}")
    for modality, w in attention.weights.items():
        lines.append(f"alpha {modality.label} {w.size} " + " ".join(f"{v:.17g}" for v in w))
    return "\n".join(lines) + "\n"


def parse_checkpoint(text: str) -> Tuple[CircuitParams, AttentionWeights]:
    lines = [ln.split() for ln in text.splitlines() if ln.strip()]
    try:
        if lines[0] != [CHECKPOINT_MAGIC, str(CHECKPOINT_VERSION)]:
            raise ValueError(f"unsupported checkpoint header {' '.join(lines[0])!r}")
        _, depth, _, qubits = lines[1]
        depth, qubits = int(depth), int(qubits)
        thetas = []
        for layer in range(depth):
            row = lines[2 + layer]
            if row[0] != "theta" or int(row[1]) != layer or len(row) != 2 + qubits:
                raise ValueError(f"bad theta row {layer}")
            thetas.append([float(v) for v in row[2:]])
        pos = 2 + depth
        if lines[pos][0] != "modalities":
            raise ValueError("missing modalities line")
        count = int(lines[pos][1])
        weights = {}
        for row in lines[pos + 1: pos + 1 + count]:
            d = int(row[2])
            if row[0] != "alpha" or len(row) != 3 + d:
                raise ValueError(f"bad alpha row for {row[1]}")
            weights[Modality.parse(row[1])] = [float(v) for v in row[3:]]
        if len(weights) != count:
            raise ValueError("truncated checkpoint")
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed checkpoint: {exc}") from None
    return CircuitParams(depth, qubits, np.array(thetas)), AttentionWeights(weights)


def save_checkpoint(path, circuit: CircuitParams, attention: AttentionWeights) -> None:
    Path(path).write_text(dump_checkpoint(circuit, attention))


def load_checkpoint(path) -> Tuple[CircuitParams, AttentionWeights]:
    return parse_checkpoint(Path(path).read_text())
