"""
nsorbit: computer-assisted proofs of time-periodic Navier-Stokes orbits on
the 3-torus.

Vorticity formulation in space-time Fourier coefficients, reduction by a
finite symmetry group, and a Newton-Kantorovich (radii polynomial) test with
interval-enclosed bounds ``Y0, Z0, Z1, Z2``.

Modules
-------
rigor        interval scalars/arrays, outward-rounded sums and products
spectral     Fourier fields on support boxes, convolution, Biot-Savart, norms, VFLD-1 I/O
vorticity    the zero map ``F``, its derivatives, Taylor-Green forcing
symmetry     space-time symmetries, group closure, reduced layouts, Sigma/Pi maps
validator    truncation schemes, the finite block and its inverse, the four bounds
solver       Newton refinement, time-integration bootstrap
postprocess  velocity/pressure with error bounds, snapshots, diagnostics
cli          command-line front end (``python -m nsorbit``)
"""
from . import errors, rigor, spectral, symmetry, vorticity, validator, solver, postprocess
from .errors import *  # noqa: F401,F403
from .validator import BoundsReport, ReducedOrbit, TruncationScheme, validate

__version__ = "0.1.0"
