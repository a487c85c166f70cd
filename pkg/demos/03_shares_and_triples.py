"""
Additive shares and multiplication triples
==========================================

The protocol's workhorse is the additive share: x split into two uniform
ring words that only sum to x jointly. Linear ops happen share-locally;
products need a precomputed triple. This script shows both, ending with
the masked Q*K^T product used inside attention.
"""

# %%
import numpy as np

from privtrans.costs import CostReport
from privtrans.ring import DEFAULT_RING, FixedTensor, mat_mul
from privtrans.sharing import make_product_triple, reconstruct, share
from privtrans.she import HEParams, keygen

rng = np.random.default_rng(42)
x = FixedTensor.from_float(np.array([[1.5, -2.0], [0.25, 8.0]]), DEFAULT_RING)

# %%
# share() draws one share uniformly; the other is the difference. Each
# share alone is indistinguishable from noise.
a, b = share(x, rng)
print("client share:\n", a.value.data)
print("server share:\n", b.value.data)
print("reconstructed:\n", reconstruct(a, b).to_float())

# %%
# Addition of shares is addition of secrets; no communication at all.
# Public scalars multiply share-locally the same way.
from privtrans.sharing import ShareMat, local_scalar_mul

y = FixedTensor.from_float(np.array([[10.0, 10.0], [10.0, 10.0]]), DEFAULT_RING)
ya, yb = share(y, rng)
summed = reconstruct(ShareMat("client", a.value + ya.value), ShareMat("server", b.value + yb.value))
print("x + y:\n", summed.to_float())
tripled = reconstruct(local_scalar_mul(a, 3), local_scalar_mul(b, 3))
print("3 * x:\n", tripled.to_float())

# %%
# Products need help: a multiplication triple fixes masks (Rl, Rr) and
# carries Enc(Rl), Enc(Rr), Enc(Rl*Rr) so the cross terms of
# (Q - Rl)(K - Rr) can be assembled without ever multiplying two
# ciphertexts.
key = keygen(HEParams(slots=8), seed=1)
q = FixedTensor(rng.integers(0, 1 << 62, (3, 4), dtype=np.uint64), DEFAULT_RING)
k = FixedTensor(rng.integers(0, 1 << 62, (3, 4), dtype=np.uint64), DEFAULT_RING)
r = FixedTensor(rng.integers(0, 1 << 64, (3, 4), dtype=np.uint64), DEFAULT_RING)

report = CostReport()
with report.at("QxK", "offline"):
    triple = make_product_triple(r, r.transpose(), key, report=report)
print(f"triple built with {report.total('he_enc')} encryptions, "
      f"{report.total('ct_ct_mul')} ct x ct multiplications")

# %%
# The full masked product runs inside an engine session (see demo 05);
# here we just check the algebra the triple enables:
#   QK^T = (Q-R)(K-R)^T + R(K-R)^T + (Q-R)R^T + RR^T
qm, km = q - r, k - r
lhs = (
    mat_mul(qm, km.transpose())
    + mat_mul(r, km.transpose())
    + mat_mul(qm, r.transpose())
    + mat_mul(r, r.transpose())
)
assert lhs == mat_mul(q, k.transpose())
print("masked-product algebra reconstructs Q*K^T exactly")

# %%
# Triples are single-use by construction: the mask would leak if two
# different masked values reused it. The engine enforces this.
print("triple id:", triple.triple_id, "| used flag starts", triple.used)
