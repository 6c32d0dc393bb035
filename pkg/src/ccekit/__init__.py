"""Selecting cross-section averages for CCE panels with persistent factors.

Modules:
    matlin      pseudo-inverse, annihilators, log-determinants
    dgp         simulated panels with mildly integrated factors
    cce         cross-section averages and the pooled CCE estimator
    selection   MW / DVS information criteria and eigenvalue-ratio counts
    montecarlo  replication grids, tau sweeps and rate checks
    cli         the ``ccekit`` command
"""
__version__ = "0.1.0"

from ._errors import ConfigError, EstimationError, InadmissibleSubsetError, SelectionError
from .dgp import ErrorConfig, FactorConfig, PanelConfig, simulate_panel, make_rng
from .cce import CandidateSet, cce_pooled, cs_averages, regressor_candidates
from .selection import Criterion, Penalty, SubsetMask, build_cache, select
