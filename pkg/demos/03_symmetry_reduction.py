"""
Symmetry reduction
==================

The Taylor-Green forcing is invariant under a group of order 16 acting on
space-time.  Restricting to invariant fields, one coefficient per group
orbit of modes carries all the information.
"""
# %%
import numpy as np

from nsorbit import spectral as sp
from nsorbit import symmetry as sy

G = sy.preset_group("taylor-green-16")
print("|G| =", len(G))

box = sp.SupportBox(4, 4, 0, 2)
cat = sy.OrbitCatalog(G, box)
print("orbit-size histogram:", cat.histogram())
print("fraction of modes forced to vanish:", cat.trivial_fraction())

# %%
# Sigma lifts reduced coefficients to a full field, Pi projects back.
n = np.stack([g.ravel() for g in sp.wavenumbers(box, sparse=False)], axis=1)
lay = sy.ReducedLayout(G, n[n[:, 2] == 0])
rng = np.random.default_rng(2)
phi = sy.symmetrize_input(rng.standard_normal(len(lay)) + 1j * rng.standard_normal(len(lay)), lay)
w = sy.lift_Sigma(phi, lay, box)
print("reduced size", len(lay), "full size", w.size)
print("Pi Sigma phi - phi:", np.abs(sy.project_Pi(w, lay) - phi).max())

# %%
# Every group element maps the lifted field to itself.
print("action-law check:", sy.check_action_laws(G, sp.SupportBox(2, 2, 0, 1))["beta"], "violations")
