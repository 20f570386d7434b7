"""Young-measure toolkit for linear-growth variational problems on BV.

Desk-scale numerics for generalized gradient Young measures (oscillation +
concentration bookkeeping), quasi-sublinear-from-below boundary checks,
measure-valued traces, and relaxation of functionals with Robin/Neumann
boundary terms.
"""

__version__ = "0.1.0"
