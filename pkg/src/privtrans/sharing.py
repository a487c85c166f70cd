"""Additive secret sharing over the ring and HE-backed matrix triples.

Masks and shares are sampled uniformly over the WHOLE ring (not the value
range): a masked message x - r is then itself ring-uniform, which is what
the chi-square acceptance test checks.

A MatTriple carries client masks L, R plus row-encrypted Enc(L), Enc(R)
and Enc(L @ R), and the server's next-layer mask. For the attention-score
product Q @ K^T the two masks are the same matrix and its transpose, so
the product ciphertext decrypts to mask @ mask.T.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .costs import CostReport
from .ring import FixedTensor, RingParams, mat_mul
from .she import Ciphertext, HEParams, KeyPair, SecretKey, decrypt, encrypt, he_add, he_mul_plain, he_rotate


@dataclass
class ShareMat:
    """One party's additive share of a logical tensor."""

    owner: str  # "client" or "server"
    value: FixedTensor
    of: str = ""


def rand_ring(shape, rng: np.random.Generator, ring: RingParams) -> FixedTensor:
    return FixedTensor(rng.integers(0, 1 << 64, size=shape, dtype=np.uint64), ring)


def share(x: FixedTensor, rng: np.random.Generator, of: str = "") -> tuple[ShareMat, ShareMat]:
    r = rand_ring(x.shape, rng, x.ring)
    return ShareMat("client", x - r, of), ShareMat("server", r, of)


def reconstruct(a: ShareMat, b: ShareMat) -> FixedTensor:
    if a.owner == b.owner:
        raise ValueError("need one share from each party")
    if a.of != b.of:
        raise ValueError(f"share labels differ: {a.of!r} vs {b.of!r}")
    return a.value + b.value


def local_scalar_mul(s: ShareMat, k: int) -> ShareMat:
    """Multiply a share by a public ring scalar; both parties do this locally."""
    return ShareMat(s.owner, s.value.scalar_mul(k), s.of)


# -- row-encrypted matrices -------------------------------------------------
# One ciphertext per matrix row; enough for triple algebra, which only ever
# multiplies encrypted rows by plaintext scalars / vectors.


def enc_rows(x: FixedTensor, key: KeyPair, report: CostReport | None = None) -> list[Ciphertext]:
    if x.cols > key.params.slots:
        raise ValueError(f"{x.cols} columns exceed {key.params.slots} slots")
    return [encrypt(x.data[i], key, report) for i in range(x.rows)]


def dec_rows(
    cts: list[Ciphertext], cols: int, sk: SecretKey, ring: RingParams, report: CostReport | None = None
) -> FixedTensor:
    rows = [decrypt(ct, sk, report)[:cols] for ct in cts]
    return FixedTensor(np.stack(rows), ring)


def plain_left_matmul(
    p: FixedTensor, rows_ct: list[Ciphertext], report: CostReport | None = None
) -> list[Ciphertext]:
    """Enc rows of p @ B from plaintext p [a x b] and Enc(B) rows [b of them].

    Row i is a scalar combination sum_j p[i,j] * Enc(B[j]); additive ops
    only, no rotations.
    """
    if p.cols != len(rows_ct):
        raise ValueError("inner dimension mismatch")
    out = []
    for i in range(p.rows):
        acc = None
        for j in range(p.cols):
            term = he_mul_plain(rows_ct[j], int(p.data[i, j]), report)
            acc = term if acc is None else he_add(acc, term, report)
        out.append(acc)
    return out


def rotate_reduce_sum(ct: Ciphertext, report: CostReport | None = None) -> Ciphertext:
    """Leave the sum of all M slots in every slot (log2 M rotations)."""
    step = ct.params.slots // 2
    while step >= 1:
        ct = he_add(ct, he_rotate(ct, step, report), report)
        step //= 2
    return ct


def enc_left_matmul(
    rows_ct: list[Ciphertext],
    cols: int,
    r_plain: FixedTensor,
    report: CostReport | None = None,
) -> list[Ciphertext]:
    """Enc rows of L @ r_plain from Enc(L) rows [a x b] and plaintext [b x c].

    Each output entry is an encrypted inner product: mask the row with the
    plaintext column, rotate-reduce, then select the destination slot.
    """
    if cols != r_plain.rows:
        raise ValueError("inner dimension mismatch")
    slots = rows_ct[0].params.slots
    out = []
    for ct in rows_ct:
        acc = None
        for k in range(r_plain.cols):
            col = np.zeros(slots, dtype=np.uint64)
            col[: r_plain.rows] = r_plain.data[:, k]
            total = rotate_reduce_sum(he_mul_plain(ct, col, report), report)
            sel = np.zeros(slots, dtype=np.uint64)
            sel[k] = 1
            term = he_mul_plain(total, sel, report)
            acc = term if acc is None else he_add(acc, term, report)
        out.append(acc)
    return out


# -- matrix triples ----------------------------------------------------------


class TripleReuse(RuntimeError):
    pass


@dataclass
class MatTriple:
    """Offline material for one masked matrix product L-shape @ R-shape."""

    triple_id: int
    left_mask: FixedTensor
    right_mask: FixedTensor
    left_ct: list[Ciphertext]
    right_ct: list[Ciphertext]
    product_ct: list[Ciphertext]
    used: bool = field(default=False, compare=False)

    def mark_used(self) -> None:
        # single-use: replaying a triple would let masked values cancel
        if self.used:
            raise TripleReuse(f"triple {self.triple_id} already consumed")
        self.used = True


def make_product_triple(
    left: FixedTensor,
    right: FixedTensor,
    key: KeyPair,
    triple_id: int = 0,
    report: CostReport | None = None,
) -> MatTriple:
    """Client-side triple from given masks: encrypt L, R, and L @ R rows."""
    if left.cols != right.rows:
        raise ValueError("mask shapes do not chain")
    return MatTriple(
        triple_id=triple_id,
        left_mask=left,
        right_mask=right,
        left_ct=enc_rows(left, key, report),
        right_ct=enc_rows(right, key, report),
        product_ct=enc_rows(mat_mul(left, right), key, report),
    )


def gen_product_triple(
    left_shape, right_shape, key: KeyPair, rng: np.random.Generator,
    triple_id: int = 0, report: CostReport | None = None,
) -> MatTriple:
    ring = key.params.ring
    return make_product_triple(
        rand_ring(left_shape, rng, ring), rand_ring(right_shape, rng, ring), key, triple_id, report
    )


def gen_triple(
    shape, key: KeyPair, rng: np.random.Generator,
    triple_id: int = 0, report: CostReport | None = None,
) -> MatTriple:
    """Attention-score triple: one mask, right side is its transpose."""
    ring = key.params.ring
    rc = rand_ring(shape, rng, ring)
    return make_product_triple(rc, rc.transpose(), key, triple_id, report)


# -- offline material file ----------------------------------------------------

MAGIC = b"PRM1"
VERSION = 1


def _write_mat(buf: io.BufferedIOBase, data: np.ndarray) -> None:
    buf.write(struct.pack("<II", *data.shape))
    buf.write(np.ascontiguousarray(data, dtype="<u8").tobytes())


def _read_mat(buf: io.BufferedIOBase) -> np.ndarray:
    rows, cols = struct.unpack("<II", buf.read(8))
    raw = buf.read(rows * cols * 8)
    return np.frombuffer(raw, dtype="<u8").reshape(rows, cols).astype(np.uint64)


def _write_cts(buf, cts: list[Ciphertext]) -> None:
    buf.write(struct.pack("<I", len(cts)))
    for ct in cts:
        buf.write(struct.pack("<qI", ct.noise_used, ct.key_id))
        _write_mat(buf, ct.slots.reshape(1, -1))
        _write_mat(buf, ct._mask.reshape(1, -1))


def _read_cts(buf, params: HEParams) -> list[Ciphertext]:
    (count,) = struct.unpack("<I", buf.read(4))
    out = []
    for _ in range(count):
        noise, key_id = struct.unpack("<qI", buf.read(12))
        slots = _read_mat(buf).ravel()
        mask = _read_mat(buf).ravel()
        out.append(Ciphertext(slots, mask, key_id, params, noise))
    return out


def save_offline_material(path, triples: list[MatTriple], params: HEParams, layout_id: str = "rows") -> None:
    """Versioned binary: magic, little-endian header (ring params, shapes,
    layout id), then raw 64-bit words."""
    header = {
        "ring": {
            "modulus_bits": params.ring.modulus_bits,
            "value_bits": params.ring.value_bits,
            "frac_bits": params.ring.frac_bits,
        },
        "slots": params.slots,
        "layout_id": layout_id,
        "count": len(triples),
        "shapes": [[list(t.left_mask.shape), list(t.right_mask.shape)] for t in triples],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        for t in triples:
            fh.write(struct.pack("<I", t.triple_id))
            _write_mat(fh, t.left_mask.data)
            _write_mat(fh, t.right_mask.data)
            _write_cts(fh, t.left_ct)
            _write_cts(fh, t.right_ct)
            _write_cts(fh, t.product_ct)


def load_offline_material(path, params: HEParams) -> list[MatTriple]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError("bad magic; not an offline-material file")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise ValueError(f"unsupported version {version}")
        header = json.loads(fh.read(hlen))
        ring = RingParams(**header["ring"])
        if ring != params.ring or header["slots"] != params.slots:
            raise ValueError("file params do not match session params")
        triples = []
        for _ in range(header["count"]):
            (tid,) = struct.unpack("<I", fh.read(4))
            left = FixedTensor(_read_mat(fh), ring)
            right = FixedTensor(_read_mat(fh), ring)
            triples.append(
                MatTriple(
                    triple_id=tid,
                    left_mask=left,
                    right_mask=right,
                    left_ct=_read_cts(fh, params),
                    right_ct=_read_cts(fh, params),
                    product_ct=_read_cts(fh, params),
                )
            )
        return triples
