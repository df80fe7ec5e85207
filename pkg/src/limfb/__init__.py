"""Limited-feedback MRT and ZF in Poisson cellular networks: analysis and simulation."""
from .analytic import CcdfQuery, Mode, NetRateBasis, SystemParams
from .results import CurveResult, CurveRow

__all__ = ["CcdfQuery", "CurveResult", "CurveRow", "Mode", "NetRateBasis", "SystemParams"]
__version__ = "0.1.0"
