"""Garbled evaluation of the boolean circuits (free-XOR, point-and-permute).

Labels are single uint64 words (toy security scale, keeps everything in
numpy). The lane axis batches independent evaluations of the same circuit,
so one garble pass covers, say, every row of a softmax step.

XOR gates are free: out = a ^ b under a global delta whose low bit is 1;
that low bit doubles as the permute bit. Each AND gate ships four rows of
(padded label, check word); a wrong or tampered row fails the check and
raises instead of decrypting garbage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuits import AND, BoolCircuit

_K1 = np.uint64(0x9E3779B97F4A7C15)
_K2 = np.uint64(0xBF58476D1CE4E5B9)
_K3 = np.uint64(0x94D049BB133111EB)
_ONE = np.uint64(1)


class CorruptTable(RuntimeError):
    pass


def _rotl(x: np.ndarray, r: int) -> np.ndarray:
    return (x << np.uint64(r)) | (x >> np.uint64(64 - r))


def _prf(a: np.ndarray, b: np.ndarray, tweak: int) -> np.ndarray:
    """Fixed-key ARX mix of two labels and a gate tweak."""
    x = a ^ _rotl(b, 29) ^ np.uint64(tweak * int(_K1) & 0xFFFFFFFFFFFFFFFF)
    x = x ^ (x >> np.uint64(30))
    x = x * _K2
    x = x ^ (x >> np.uint64(27))
    x = x * _K3
    x = x + _rotl(a, 13) + b
    x = x ^ (x >> np.uint64(31))
    x = x * _K2
    return x ^ (x >> np.uint64(32))


@dataclass
class GarbledTables:
    """Everything the evaluator sees."""

    tables: np.ndarray  # (n_and, 4, 2, lanes) uint64
    const_labels: np.ndarray  # (2, lanes): active labels for wires 0 and 1
    decode: np.ndarray  # (n_out, lanes) uint8 permute bits of output zero-labels

    @property
    def table_bytes(self) -> int:
        return self.tables.nbytes


@dataclass
class GarblerState:
    """Stays with the garbler; leaks every input pair, so never send it."""

    delta: np.ndarray  # (lanes,)
    input_zero: np.ndarray  # (n_in, lanes) labels for bit value 0

    def encode(self, bits: np.ndarray, rows: slice | None = None) -> np.ndarray:
        """Active labels for given input bits, shape (n, lanes)."""
        zero = self.input_zero if rows is None else self.input_zero[rows]
        return zero ^ (np.asarray(bits, dtype=np.uint64) * self.delta)

    def pairs(self, rows: slice) -> tuple[np.ndarray, np.ndarray]:
        """(label-for-0, label-for-1) of selected input wires, for OT."""
        zero = self.input_zero[rows]
        return zero, zero ^ self.delta


def garble(
    circ: BoolCircuit, lanes: int, rng: np.random.Generator
) -> tuple[GarbledTables, GarblerState]:
    def fresh(n):
        return rng.integers(0, 1 << 64, size=(n, lanes), dtype=np.uint64)

    delta = fresh(1)[0] | _ONE  # low bit set: free-XOR + permute bit
    zero = np.zeros((circ.n_wires, lanes), dtype=np.uint64)
    zero[: 2 + circ.n_inputs] = fresh(2 + circ.n_inputs)
    n_and = circ.and_count
    tables = np.zeros((n_and, 4, 2, lanes), dtype=np.uint64)
    base = 2 + circ.n_inputs
    va = np.array([0, 0, 1, 1], dtype=np.uint64)[:, None]
    vb = np.array([0, 1, 0, 1], dtype=np.uint64)[:, None]
    j = 0
    for i in range(circ.n_gates):
        a0 = zero[circ.lhs[i]]
        b0 = zero[circ.rhs[i]]
        if circ.op[i] != AND:
            zero[base + i] = a0 ^ b0
            continue
        w0 = fresh(1)[0]
        zero[base + i] = w0
        la = a0[None, :] ^ (va * delta[None, :])
        lb = b0[None, :] ^ (vb * delta[None, :])
        out_active = w0[None, :] ^ ((va & vb) * delta[None, :])
        rows = (((la & _ONE) << _ONE) | (lb & _ONE)).astype(np.int64)
        np.put_along_axis(tables[j, :, 0, :], rows, out_active ^ _prf(la, lb, 2 * i), axis=0)
        np.put_along_axis(tables[j, :, 1, :], rows, _prf(lb, la, 2 * i + 1), axis=0)
        j += 1
    const_labels = np.stack([zero[0], zero[1] ^ delta])
    decode = (zero[list(circ.outputs)] & _ONE).astype(np.uint8)
    return GarbledTables(tables, const_labels, decode), GarblerState(
        delta, zero[2 : 2 + circ.n_inputs]
    )


def evaluate(circ: BoolCircuit, gt: GarbledTables, active_inputs: np.ndarray) -> np.ndarray:
    """Walk the gates with active labels only; returns active output labels."""
    lanes = gt.const_labels.shape[1]
    if active_inputs.shape != (circ.n_inputs, lanes):
        raise ValueError("active input labels have the wrong shape")
    active = np.zeros((circ.n_wires, lanes), dtype=np.uint64)
    active[0] = gt.const_labels[0]
    active[1] = gt.const_labels[1]
    active[2 : 2 + circ.n_inputs] = active_inputs
    base = 2 + circ.n_inputs
    lane_idx = np.arange(lanes)
    j = 0
    for i in range(circ.n_gates):
        la = active[circ.lhs[i]]
        lb = active[circ.rhs[i]]
        if circ.op[i] != AND:
            active[base + i] = la ^ lb
            continue
        rows = (((la & _ONE) << _ONE) | (lb & _ONE)).astype(np.int64)
        ct = gt.tables[j, rows, :, lane_idx]  # (lanes, 2)
        if not np.array_equal(ct[:, 1], _prf(lb, la, 2 * i + 1)):
            raise CorruptTable(f"check word mismatch at gate {i}")
        active[base + i] = ct[:, 0] ^ _prf(la, lb, 2 * i)
        j += 1
    return active[list(circ.outputs)]


def decode_outputs(gt: GarbledTables, active_outputs: np.ndarray) -> np.ndarray:
    return (active_outputs & _ONE).astype(np.uint8) ^ gt.decode
