"""Dense statevector simulator restricted to the RY/CNOT gate set.

Qubit 0 is the least-significant bit of the basis index: for two qubits the
amplitude order is |q1 q0> = 00, 01, 10, 11, so ``prepare_basis(1, 2)`` sets
qubit 0 and leaves qubit 1 unset.

The private array kernels (``_ry``, ``_cnot``) accept
arbitrary leading batch dimensions so the training code can push many states
or many parameter sets through the same gate in one numpy call.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

NORM_TOL = 1e-10


@dataclass(frozen=True)
class QuantumState:
    """Unit-norm complex amplitude vector of length ``2**num_qubits``."""

    amplitudes: np.ndarray
    num_qubits: int

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError(f"num_qubits must be positive, got {self.num_qubits}")
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if amps.shape[0] != 1 << self.num_qubits:
            raise ValueError(
                f"expected {1 << self.num_qubits} amplitudes for {self.num_qubits} qubits, "
                f"got {amps.shape[0]}"
            )
        norm = float(np.vdot(amps, amps).real)
        if not abs(norm - 1.0) <= NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amplitudes, self.amplitudes).real))


class GateKind(enum.Enum):
    RY = "RY"
    CNOT = "CNOT"


@dataclass(frozen=True)
class GateSpec:
    kind: GateKind
    target: int
    control: Optional[int] = None
    angle: float = 0.0

    def validate(self, num_qubits: int) -> None:
        _check_qubit(self.target, num_qubits)
        if self.kind is GateKind.CNOT:
            if self.control is None:
                raise ValueError("CNOT needs a control qubit")
            _check_qubit(self.control, num_qubits)
            if self.control == self.target:
                raise ValueError("CNOT control and target must differ")


def _check_qubit(qubit: int, num_qubits: int) -> None:
    if not 0 <= qubit < num_qubits:
        raise IndexError(f"qubit {qubit} out of range for {num_qubits} qubits")


# -- array kernels -----------------------------------------------------------

def _ry(amps: np.ndarray, qubit: int, angle, num_qubits: int) -> np.ndarray:
    """Return RY(angle) applied to ``qubit`` of every state in ``amps[..., :]``.

    ``angle`` is a scalar or an array matching a prefix of the leading batch shape.
    """
    lead = amps.shape[:-1]
    view = amps.reshape(lead + (1 << (num_qubits - 1 - qubit), 2, 1 << qubit))
    half = np.asarray(angle, dtype=np.float64) / 2.0
    c = np.cos(half)
    s = np.sin(half)
    if c.ndim:
        # per-batch angles: pad so they broadcast over the remaining lead axes and (hi, lo)
        pad = (1,) * (len(lead) - c.ndim) + (1, 1)
        c = c.reshape(c.shape + pad)
        s = s.reshape(s.shape + pad)
    a0 = view[..., 0, :]
    a1 = view[..., 1, :]
    out = np.empty_like(view)
    out[..., 0, :] = c * a0 - s * a1
    out[..., 1, :] = s * a0 + c * a1
    return out.reshape(amps.shape)


@lru_cache(maxsize=None)
def _cnot_permutation(control: int, target: int, num_qubits: int) -> np.ndarray:
    idx = np.arange(1 << num_qubits)
    perm = np.where((idx >> control) & 1, idx ^ (1 << target), idx)
    perm.flags.writeable = False
    return perm


def _cnot(amps: np.ndarray, control: int, target: int, num_qubits: int) -> np.ndarray:
    # the permutation is its own inverse, so gathering with it is the same as scattering
    return amps[..., _cnot_permutation(control, target, num_qubits)]


@lru_cache(maxsize=None)
def z_signs(num_qubits: int) -> np.ndarray:
    """(2**Q, Q) matrix of +1/-1: +1 where qubit q's bit is 0 in basis index b."""
    idx = np.arange(1 << num_qubits)[:, None]
    bits = (idx >> np.arange(num_qubits)[None, :]) & 1
    signs = (1 - 2 * bits).astype(np.float64)
    signs.flags.writeable = False
    return signs


def _apply_gates(amps: np.ndarray, gates: Iterable[GateSpec], num_qubits: int) -> np.ndarray:
    for gate in gates:
        if gate.kind is GateKind.RY:
            amps = _ry(amps, gate.target, gate.angle, num_qubits)
        else:
            amps = _cnot(amps, gate.control, gate.target, num_qubits)
    return amps


# -- public operations -------------------------------------------------------

def prepare_basis(index: int, num_qubits: int) -> QuantumState:
    if num_qubits < 1:
        raise ValueError(f"num_qubits must be positive, got {num_qubits}")
    dim = 1 << num_qubits
    if not 0 <= index < dim:
        raise IndexError(f"basis index {index} out of range [0, {dim})")
    amps = np.zeros(dim, dtype=np.complex128)
    amps[index] = 1.0
    return QuantumState(amps, num_qubits)


def apply_ry(state: QuantumState, qubit: int, angle: float) -> QuantumState:
    _check_qubit(qubit, state.num_qubits)
    return QuantumState(_ry(state.amplitudes, qubit, float(angle), state.num_qubits), state.num_qubits)


def apply_cnot(state: QuantumState, control: int, target: int) -> QuantumState:
    _check_qubit(control, state.num_qubits)
    _check_qubit(target, state.num_qubits)
    if control == target:
        raise ValueError("CNOT control and target must differ")
    return QuantumState(_cnot(state.amplitudes, control, target, state.num_qubits), state.num_qubits)


def apply_gate(state: QuantumState, gate: GateSpec) -> QuantumState:
    gate.validate(state.num_qubits)
    if gate.kind is GateKind.RY:
        return apply_ry(state, gate.target, gate.angle)
    return apply_cnot(state, gate.control, gate.target)


def apply_circuit(state: QuantumState, gates: Iterable[GateSpec]) -> QuantumState:
    gates = list(gates)
    for gate in gates:
        gate.validate(state.num_qubits)
    return QuantumState(_apply_gates(state.amplitudes, gates, state.num_qubits), state.num_qubits)


def expectation_z(state: QuantumState, qubit: int) -> float:
    """<Z> on ``qubit``: sum of |amp|^2 weighted +1 where the bit is 0, -1 where it is 1."""
    _check_qubit(qubit, state.num_qubits)
    probs = state.probabilities()
    value = float(probs @ z_signs(state.num_qubits)[:, qubit])
    return min(1.0, max(-1.0, value))


def sample_basis(state: QuantumState, rng_seed) -> int:
    """Draw one basis index with Born-rule probabilities.

    ``rng_seed`` may be an int seed or an existing ``numpy.random.Generator``.
    """
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    cdf = np.cumsum(state.probabilities())
    u = rng.random() * cdf[-1]
    index = int(np.searchsorted(cdf, u, side="right"))
    # guard against u landing on the float top edge
    return min(index, int(np.flatnonzero(state.probabilities())[-1]))
