"""Independent brute-force oracles used to freeze expected test values.

Everything here is plain Python integer arithmetic or textbook float math,
deliberately sharing no code with the package under test (the one import
is the model's dataclasses, for the double-precision forward pass below).
"""

import math

import numpy as np

LN_EPS = 2.0 ** -12


def to_signed(v: int, m: int) -> int:
    v %= 1 << m
    return v - (1 << m) if v >= 1 << (m - 1) else v


def to_unsigned(v: int, m: int) -> int:
    return v % (1 << m)


def matmul_mod(a, b, m: int):
    """Schoolbook matrix product of int lists, reduced mod 2^m."""
    rows, inner, cols = len(a), len(b), len(b[0])
    assert len(a[0]) == inner
    out = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        for k in range(inner):
            aik = a[i][k]
            for j in range(cols):
                out[i][j] = (out[i][j] + aik * b[k][j]) % (1 << m)
    return out


def trunc_sat(v: int, m: int, frac_bits: int, value_bits: int) -> int:
    """Arithmetic shift right then saturate, on one ring element."""
    s = to_signed(v, m) >> frac_bits  # python >> floors, matching arithmetic shift
    lim = (1 << (value_bits - 1)) - 1
    s = max(-lim, min(lim, s))
    return to_unsigned(s, m)


def encode(x: float, frac_bits: int, m: int) -> int:
    scaled = x * (1 << frac_bits)
    q = math.floor(scaled + 0.5) if scaled >= 0 else math.ceil(scaled - 0.5)
    return to_unsigned(q, m)


def decode(v: int, frac_bits: int, m: int) -> float:
    return to_signed(v, m) / (1 << frac_bits)


def softmax(row):
    mx = max(row)
    es = [math.exp(x - mx) for x in row]
    s = sum(es)
    return [e / s for e in es]


def layernorm(row, eps=LN_EPS):
    n = len(row)
    mu = sum(row) / n
    var = sum((x - mu) ** 2 for x in row) / n
    inv = 1.0 / math.sqrt(var + eps)
    return [(x - mu) * inv for x in row]


def relu(row):
    return [max(x, 0.0) for x in row]


# -- double-precision transformer forward --------------------------------
#
# Mirrors the fixed-point graph structurally (same norm placement, same
# encoded 1/sqrt(n) scale, same layernorm epsilon) but computes in float64
# with exact softmax/gelu, so any disagreement beyond the stated tolerance
# comes from the ring arithmetic under test.


def _softmax_rows(rows: np.ndarray) -> np.ndarray:
    e = np.exp(rows - rows.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _layernorm_rows(rows: np.ndarray) -> np.ndarray:
    mu = rows.mean(axis=1, keepdims=True)
    var = ((rows - mu) ** 2).mean(axis=1, keepdims=True)
    return (rows - mu) / np.sqrt(var + LN_EPS)


def _act(cfg, x: np.ndarray) -> np.ndarray:
    if cfg.activation == "relu":
        return np.maximum(x, 0.0)
    erf = np.vectorize(math.erf)
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def float_forward(cfg, weights, tokens) -> np.ndarray:
    """Logits (n, d_out) from the decoded weights, in float64."""
    eta = cfg.eta / cfg.ring.scale
    x = weights.w_e.to_float()[np.asarray(tokens)] * cfg.delta + cfg.lam.to_float()
    for blk in weights.blocks:
        wq, wk, wv, wo = (t.to_float() for t in (blk.w_q, blk.w_k, blk.w_v, blk.w_o))
        wf1, wf2 = blk.w_f1.to_float(), blk.w_f2.to_float()

        def attention(inp):
            q, k, v = inp @ wq, inp @ wk, inp @ wv
            heads = []
            for h in range(cfg.H):
                sl = slice(h * cfg.d_head, (h + 1) * cfg.d_head)
                p = _softmax_rows(q[:, sl] @ k[:, sl].T * eta)
                heads.append(p @ v[:, sl])
            return np.concatenate(heads, axis=1) @ wo

        def ffn(inp):
            return _act(cfg, inp @ wf1) @ wf2

        if cfg.norm == "post":
            x = _layernorm_rows(x + attention(x))
            x = _layernorm_rows(x + ffn(x))
        else:
            x = x + attention(_layernorm_rows(x))
            x = x + ffn(_layernorm_rows(x))
    if cfg.norm == "pre":
        x = _layernorm_rows(x)
    return x @ weights.w_head.to_float()
