"""Multi-AP cooperative beamforming for cell-free ISAC.

Semidefinite relaxation of the sensing-SCNR maximization under per-user rate
and per-AP power constraints, solved with an embedded interior-point method,
plus the benchmark schemes and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .scenario import LayoutSpec, ScenarioRealization, SystemConfig, build_geometry, sample_realization
from .metrics import BeamformingSolution
from .sdr import InfeasibleError, sdr_mcbf

__all__ = ["LayoutSpec", "ScenarioRealization", "SystemConfig", "build_geometry", "sample_realization",
           "BeamformingSolution", "InfeasibleError", "sdr_mcbf", "__version__"]
