"""Multivariate shared-component small area estimation.

Thin Python layer over the C++ core. Model specs are plain dicts (or JSON
strings) in the format read by ``sae fit --model``.
"""

import json

from ._core import (  # noqa: F401
    DirectEstimates,
    Error,
    Fit,
    Graph,
    LonelyPsuError,
    NumericalError,
    ParseError,
    Survey,
    ValidationError,
    __version__,
    direct_estimates,
    icar_marginal_variances,
    simulate_area,
    simulate_unit,
)
from . import _core


def _spec(spec):
    return spec if isinstance(spec, str) else json.dumps(spec)


def fit_area(spec, estimates, graph, *, chains=4, warmup=2000, draws=2000, seed=1, threads=1, fixed=None,
             augmented=False):
    """Stage-2 fit of an area-level model to direct estimates."""
    return _core._fit_area(_spec(spec), estimates, graph, chains, warmup, draws, seed, threads, fixed or {}, augmented)


def fit_unit(spec, survey, graph, q, *, chains=4, warmup=2000, draws=2000, seed=1, threads=1, fixed=None):
    """Unit-level fit; ``q`` holds the rural fraction of every region."""
    return _core._fit_unit(_spec(spec), survey, graph, list(q), chains, warmup, draws, seed, threads, fixed or {})


def loo_area(spec, estimates, graph, *, chains=2, warmup=1000, draws=1000, seed=1, threads=1, samples=1000,
             refit_warmup=250):
    """Leave-one-region-out LogScore of an area-level model (lower is better)."""
    return _core._loo_area(_spec(spec), estimates, graph, chains, warmup, draws, seed, threads, samples, refit_warmup)
