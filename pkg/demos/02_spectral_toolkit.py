"""
Fourier fields on the space-time torus
======================================

A field is an array of shape ``(3, 2Nx1+1, 2Nx2+1, 2Nx3+1, 2Nt+1)`` of
Fourier coefficients, indexed by ``n = (n1, n2, n3, n4)`` with the zero
mode at the centre.
"""
# %%
import numpy as np

from nsorbit import spectral as sp
from nsorbit import vorticity as vo

box = sp.SupportBox(2, 2, 0, 1)
print("box", box, "shape", box.shape)

# %%
# Taylor-Green vorticity forcing and its velocity: curl and Biot-Savart invert
# each other on mean-free divergence-free data.
f = vo.taylor_green_forcing().fomega
u = sp.biot_savart(f)
print("div u   =", np.abs(sp.divergence(u)).max())
print("curl u - f =", np.abs(sp.curl(u) - f).max())

# %%
# Convolutions: direct and FFT evaluation agree; the rigorous version
# encloses the float one.
rng = np.random.default_rng(1)
a = rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)
b = rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)
d = sp.convolve(a, b, method="direct")
g = sp.convolve(a, b, method="fft")
print("direct vs fft:", np.abs(d - g).max(), "support", sp.box_of(d))

# %%
# Weighted l1 norm with geometric weight eta^|n|_1.
for eta in (1.0, 1.2):
    print(f"eta={eta}: ||a|| = {sp.norm(a, 'plain', eta)}")
