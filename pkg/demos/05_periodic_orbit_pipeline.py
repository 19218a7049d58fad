"""
A periodic orbit at nu = 0.286
==============================

Newton-refine the shipped approximate orbit, ask for truncation
parameters, and look at quarter-period snapshots.  The full validation at
the desk configuration takes several minutes (``nsorbit validate --config
desk``); at that scale it reports which inequality fails and by how much.
"""
# %%
import numpy as np

from nsorbit import cli
from nsorbit import postprocess as pp
from nsorbit import solver as so
from nsorbit import symmetry as sy
from nsorbit import validator as va
from nsorbit import vorticity as vo

G = sy.preset_group("taylor-green-16")
d = so.load_sample()
orb = va.ReducedOrbit.from_field(d["Omega"], d["omega"], G, d["box"], essentially2D=True)
res = so.newton(orb.Omega, orb.phi, orb.layout, vo.taylor_green_forcing(), "0.286")
print("residual history", ["%.1e" % h for h in res.history], "Omega", res.Omega, "period", 2 * np.pi / res.Omega)

# %%
cfg = cli.load_config("desk")
s = cli.suggest_parameters(cfg, res.Omega, res.field(cfg.box))
for row in s["ladder"]:
    print({k: round(v, 4) if isinstance(v, float) else v for k, v in row.items()})
print("suggested", s["Ndagger"], s["Ntilde"], "reachable:", s["reachable"])

# %%
# Snapshots a quarter period apart: the group element with a quarter-period
# time shift relates consecutive frames by a reflection.
w = res.field(cfg.box)
times, (x1, x2, vals) = pp.quarter_period_snapshots(w, res.Omega, 32)
for t, v in zip(times, vals):
    print(f"t={t:.3f}  min={v.min():+.3f}  max={v.max():+.3f}")
