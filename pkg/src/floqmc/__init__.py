"""floqmc: Monte Carlo toolkit for the weakly measured honeycomb Floquet code.

Qubit dynamics are mapped to Gaussian Majorana evolution under a spacetime
gauge field; the measurement-trajectory ensemble is sampled with a nested
(comb-shaped) Markov chain.
"""

__version__ = "0.1.0"

from .kernels import BACKEND as kernel_backend  # noqa: F401
