"""Reduced basis models with DEIM hyper-reduction and adaptive training sets.

Subpackages/modules:

* ``fom``        - affine parametric full-order models and benchmark builders
* ``rom``        - POD bases, Galerkin projection, DEIM, reduced simulation
* ``estimator``  - a posteriori output error indicators and true-error metrics
* ``rbf``        - RBF interpolation of estimator data (compiled kernel core)
* ``greedy``     - the four greedy algorithms and training-set bookkeeping
* ``io``         - Matrix Market, parameter sampling, CSV persistence
* ``cli``        - the ``rbadapt`` command-line harness
"""

from . import estimator, fom, greedy, io, rbf, rom

__version__ = "0.1.0"

__all__ = ["estimator", "fom", "greedy", "io", "rbf", "rom", "__version__"]
