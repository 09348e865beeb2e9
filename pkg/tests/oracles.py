"""Brute-force reference implementations used only by the tests.

Everything here is written from the textbook definitions (Kronecker
products, per-basis-state loops) and shares no code with ``qnav``.
"""
from __future__ import annotations

import math
from functools import reduce

import numpy as np

I2 = np.eye(2)


def ry_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]])


def single_qubit_operator(gate: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Full 2^Q operator; qubit 0 is the least significant bit, i.e. the rightmost factor."""
    factors = [gate if q == qubit else I2 for q in reversed(range(num_qubits))]
    return reduce(np.kron, factors)


def cnot_operator(control: int, target: int, num_qubits: int) -> np.ndarray:
    dim = 2 ** num_qubits
    op = np.zeros((dim, dim))
    for x in range(dim):
        y = x ^ (1 << target) if (x >> control) & 1 else x
        op[y, x] = 1.0
    return op


def gate_operator(kind: str, target: int, control, angle: float, num_qubits: int) -> np.ndarray:
    if kind == "RY":
        return single_qubit_operator(ry_matrix(angle), target, num_qubits)
    return cnot_operator(control, target, num_qubits)


def layered_ansatz_operator(thetas: np.ndarray, num_qubits: int) -> np.ndarray:
    """Product of per-gate matrices: each layer is RY on every qubit then CNOT(q, q+1) ascending."""
    op = np.eye(2 ** num_qubits)
    for row in np.atleast_2d(thetas):
        for q in range(num_qubits):
            op = single_qubit_operator(ry_matrix(row[q]), q, num_qubits) @ op
        for q in range(num_qubits - 1):
            op = cnot_operator(q, q + 1, num_qubits) @ op
    return op


def z_expectation(amplitudes: np.ndarray, qubit: int) -> float:
    total = 0.0
    for x, a in enumerate(amplitudes):
        total += abs(a) ** 2 * (1.0 if ((x >> qubit) & 1) == 0 else -1.0)
    return total


def weighted_amplitudes(values_per_modality, alphas_per_modality, num_qubits: int) -> np.ndarray:
    """Amplitude vector alpha_ij * s_ij / sqrt(N), modalities concatenated in the given order."""
    weighted = []
    for values, alphas in zip(values_per_modality, alphas_per_modality):
        for s, a in zip(values, alphas):
            weighted.append(a * s)
    norm_sq = sum(w * w for w in weighted)
    out = np.zeros(2 ** num_qubits)
    for k, w in enumerate(weighted):
        out[k] = w / math.sqrt(norm_sq)
    return out


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - np.max(x))
    return e / e.sum()


def causal_cone(num_qubits: int, depth: int, readout: int):
    """Superset of the (layer, qubit) angles that can influence <Z_readout> in the ladder ansatz.

    Walks the circuit backwards in the Heisenberg picture, tracking which
    qubits may carry Z-type and X-type Pauli factors. Conjugating by
    CNOT(c, t) sends Z_t to Z_c Z_t and X_c to X_c X_t; an RY on a qubit
    with any factor mixes Z and X there.
    """
    z_live, x_live = {readout}, set()
    cone = set()
    for layer in reversed(range(depth)):
        for c in reversed(range(num_qubits - 1)):
            if c + 1 in z_live:
                z_live.add(c)
            if c in x_live:
                x_live.add(c + 1)
        for q in range(num_qubits):
            if q in z_live or q in x_live:
                cone.add((layer, q))
                z_live.add(q)
                x_live.add(q)
    return cone
