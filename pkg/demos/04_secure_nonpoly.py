"""
Nonpolynomial stages under garbled circuits
===========================================

Softmax, GELU, layer norm and truncation cannot be expressed as ring
polynomials, so the protocol evaluates them as boolean circuits: the
shares enter, a fresh mask comes out, and neither party sees the value
in between. A semantic backend runs the identical stage on plain words
for fast testing; the GC backend garbles, transfers labels by oblivious
transfer, and must agree bit for bit.
"""

# %%
import numpy as np

from privtrans.ring import DEFAULT_RING
from privtrans.securefn import SecureFnSpec, eval_secure, plain_apply
from privtrans.transcript import Transcript

F = DEFAULT_RING.frac_bits
rng = np.random.default_rng(3)

# %%
# A spec names the stage, the circuit bitwidth, and how many ring words
# travel together per lane (a softmax row needs its whole row at once).
spec = SecureFnSpec("softmax_row", 64, count=4)
vals = np.array([[1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0]])
raw = (vals * (1 << F)).astype(np.int64).view(np.uint64)

# %%
# Split into shares, evaluate, reconstruct. The secure path matches the
# stage run on plain words, which itself tracks real softmax closely.
xc = rng.integers(0, 1 << 64, raw.shape, dtype=np.uint64)
xs = raw - xc
c, s = eval_secure(spec, xc, xs, np.random.default_rng(1))
got = DEFAULT_RING.to_signed(c + s).astype(np.float64) / (1 << F)
print("secure softmax:\n", got)
ref = np.exp(vals) / np.exp(vals).sum(axis=1, keepdims=True)
print("real softmax:\n", ref.round(4))
print("max error:", float(np.abs(got - ref).max()))

# %%
# The GC backend evaluates the same stage gate by gate. With the output
# masks pinned, semantic and garbled runs are indistinguishable.
spec16 = SecureFnSpec("relu", 16)
raw16 = rng.integers(0, 1 << 16, (6, 1), dtype=np.uint64)
xc16 = rng.integers(0, 1 << 16, raw16.shape, dtype=np.uint64)
xs16 = (raw16 - xc16) & np.uint64(0xFFFF)
masks = rng.integers(0, 1 << 16, raw16.shape, dtype=np.uint64)
c_sem, s_sem = eval_secure(spec16, xc16, xs16, np.random.default_rng(2), masks=masks)
c_gc, s_gc = eval_secure(spec16, xc16, xs16, np.random.default_rng(2), masks=masks, backend="gc")
assert np.array_equal(c_sem, c_gc) and np.array_equal(s_sem, s_gc)
print("gc backend == semantic backend on relu lanes")

# %%
# The garbled run leaves an audit trail: tables and OT messages land in
# the transcript, so the cost of a stage is measurable, not guessed.
t = Transcript()
eval_secure(spec16, xc16, xs16, np.random.default_rng(2), masks=masks,
            backend="gc", transcript=t, step="Others")
print(f"gc bytes for 6 relu lanes: {t.bytes_sent('Others', 'online')}")

# %%
# plain_apply is the reference path: the same stage pipeline with zero
# shares and zero masks, useful for tolerance studies.
plain = plain_apply(spec, raw)
assert np.array_equal(plain, c + s)
print("plain_apply agrees with the reconstructed secure run")
