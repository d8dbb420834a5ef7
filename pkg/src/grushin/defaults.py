"""Central registry of numerical defaults.

Every tolerance and grid parameter that affects reported numbers lives here,
so that verification runs are reproducible from the configuration alone.
Callers may override any of these through keyword arguments or run configs;
the values below are the calibrated desk-scale defaults.
"""

from __future__ import annotations

# -- Hermite evaluation -------------------------------------------------------

# Renormalisation cadence of the exponent-tracked recurrence (steps).
HERMITE_RENORM_EVERY = 16
# Mantissas are rescaled once they leave [2**-HERMITE_RENORM_LIMIT, 2**HERMITE_RENORM_LIMIT].
HERMITE_RENORM_LIMIT = 400

# -- Sobolev norms ------------------------------------------------------------

SOBOLEV_GRID_SIZE = 2 ** 14
SOBOLEV_PAD_FRACTION = 0.25
SOBOLEV_TAIL_TOL = 1e-8          # relative weighted energy allowed in the top octave
LOCAL_SOBOLEV_PTS_PER_DECADE = 129

# -- Difference calculus ------------------------------------------------------

EXPANSION_ORDER_CAP = 4          # refuse expansions with |beta|_1 above this
XI_FD_RELATIVE_STEP = 1e-4       # finite-difference step, relative to |xi|
GAUSS_LEGENDRE_ORDER = 12        # per unit cell in discrete-to-continuous checks
MONTE_CARLO_SAMPLES = 200_000    # fallback for high-order pushforward integrals

# -- Kernel engine ------------------------------------------------------------

SUPPORT_LEAKAGE_TOL = 1e-12      # relative symbol mass allowed outside annulus / n-cap
XI_NODES_PER_WAVELENGTH = 4.0    # radial quadrature resolution target
XI_NODES_PER_PANEL = 12
XI_MIN_PANELS = 6
XI_GEOMETRIC_LEVELS = 24         # geometric refinement towards xi = 0 (support touching 0)
TENSOR_PERIOD_FACTOR = 4.0       # x''-period of the uniform xi-lattice vs target extent
DYADIC_PIECE_STOP = 1e-12        # relative piece contribution below which summation stops
DYADIC_KMAX = 14                 # hard cap on dyadic scales 2**k
BOUNDARY_MASS_TOL = 1e-3         # default boundary-shell fraction allowed in norms
ORACLE_RESOLUTION = 0.05         # require h**2 * lambda_max <= this

# -- Estimates ----------------------------------------------------------------

YLIST_DEFAULT = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)   # |y'| values along the first axis
ESTIMATE_RATIO_CAP = 1e6         # sanity cap on empirical constants
