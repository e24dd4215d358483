"""
Dynamic path warping versus soft DTW
====================================

Both losses align a generated path sequence with a target sequence through
a dynamic program over the matrix of pairwise path distances.  DTW may
match one generated path to several targets, which pulls it toward their
average.  Dynamic path warping (DPW) matches every generated path to
exactly one target, in order, and lets targets be skipped.
"""

# %%
# A tiny distance matrix: rows are targets, columns generated paths.
# Generated path 1 sits between targets 1 and 2.
import numpy as np

from supervec.dpw import dpw_bruteforce, dpw_forward, dpw_match, dtw_path, n_matchings, softdtw_forward

D = np.array([
    [0.0, 5.0, 5.0],
    [5.0, 1.0, 5.0],
    [5.0, 1.0, 5.0],
    [5.0, 5.0, 0.0],
])

print("DTW path (target, generated):", dtw_path(D))
print("DPW matching (target per generated path):", dpw_match(D))

# %%
# With ``gamma = 0`` the DPW recursion is the exact minimum over all
# monotone matchings, which brute force enumeration confirms.
print(dpw_forward(D, 0.0)[0], dpw_bruteforce(D)[0], n_matchings(*D.shape))

# %%
# A positive ``gamma`` replaces every min by a soft minimum, so the value
# drops below the hard minimum by at most ``gamma * ln(count)``.
for gamma in (1.0, 0.1, 0.01):
    print(f"gamma={gamma}: dpw {dpw_forward(D, gamma)[0]:.4f}  softdtw {softdtw_forward(D, gamma)[0]:.4f}")

# %%
# The averaging experiment fits three fresh paths to a four-path face
# (face, two eyebrows, mouth) under a pixel loss plus an alignment loss.
# Soft DTW produces a path halfway between the two eyebrows; DPW does not.
from supervec.experiments import averaging_experiment

for kind in ("softdtw", "dpw"):
    rep = averaging_experiment(loss_kind=kind)
    print(f"{kind:8s} nearest targets {rep.nearest}  averaging events {rep.averaging_events}  "
          f"recon {rep.recon:.4f}")
