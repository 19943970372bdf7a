"""Package-wide numerical defaults.

Values are plain module attributes so callers (and the CLI) can override
them per run, e.g. ``config.MAX_ATOMS = 1024``.
"""

# Largest atom number accepted by the spin-operator builder; d = N + 1 and the
# superoperator dimension grows as d**2.
MAX_ATOMS = 512

# Largest superoperator dimension handled by the dense eigensolver (N <= 63).
DENSE_DIM_CAP = 4096

# |Im lambda| below this (in units of N*Gamma/2) counts as zero.
IM_ZERO_TOLERANCE = 1e-7

# |lambda| below this (in units of N*Gamma/2) identifies the steady-state eigenvalue.
ZERO_EIGENVALUE_TOLERANCE = 1e-8

# Shift-invert eigensolver
EIG_RESIDUAL_TOL = 1e-8
EIG_MAX_ITER = 20000
SHIFT_PERTURBATION = 1e-6

# Time integration
RTOL = 1e-8
ATOL = 1e-10
HERMITIZE_EVERY = 100
