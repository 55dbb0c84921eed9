"""Online budgeted allocation (AdWords) under a primal-dual lens.

Modules: ``model`` (instances and the packing-LP reduction), ``lp`` (offline
simplex oracle and slackness checks), ``online`` (greedy and MSVV engines
with certificates), ``plp`` (training-based allocation for stochastic packing
LPs), ``gen`` (instance generators) and ``bench`` (batch experiments).
"""

from . import bench, gen, lp, model, online, plp

__version__ = "0.1.0"

__all__ = ["bench", "gen", "lp", "model", "online", "plp", "__version__"]
