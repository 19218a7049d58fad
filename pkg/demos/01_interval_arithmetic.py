"""
Outward-rounded interval arithmetic
===================================

Every bound in a validation run is a ``RigorousReal`` (a closed interval
with float endpoints) or an array of them.  Results that are exact in
binary floating point stay points; everything else is widened by at most
one ulp per operation.
"""
# %%
import math
from fractions import Fraction

import numpy as np

from nsorbit.rigor import CIArray, IArray, PointMatrix, RigorousReal

one = RigorousReal.point(1)
print("1 + 1      ", one + one)
print("1 / 64     ", one / RigorousReal.point(64))
print("1 / 3      ", one / RigorousReal.point(3))
print("0.1 + 0.2  ", RigorousReal.point(0.1) + RigorousReal.point(0.2))

# %%
# The enclosure really contains the exact rational result.
q = one / RigorousReal.point(3)
print(Fraction(q.lo) <= Fraction(1, 3) <= Fraction(q.hi), (q.hi - q.lo) / math.ulp(1 / 3))

# %%
# Arrays: elementwise intervals, with complex values as pairs of them.
rng = np.random.default_rng(0)
x = IArray(rng.standard_normal(5))
y = IArray(rng.standard_normal(5))
print("widths of x*y:", (x * y).hi - (x * y).lo)
z = CIArray.point(rng.standard_normal(4) + 1j * rng.standard_normal(4))
print("|z|^2 enclosure contains the float value:", np.all((z * z.conj()).real.contains(np.abs(z.mid) ** 2)))

# %%
# Products of a float matrix with an interval matrix use a mid-rad bound
# on the rounding error of one BLAS call.
A = rng.standard_normal((50, 50))
B = CIArray.point(rng.standard_normal((50, 3)) + 0j)
E = PointMatrix(A).enclose(B)
print("max radius of A @ B:", float((E.real.hi - E.real.lo).max()) / 2)
