# Core numerics for kgap
from .constants import APP_NAME
from .config_loader import load_config
from .distributions import EqualRevenue, Instance, PointMass, Tabulated, Triangle
from .errors import AuctionGapError
from .gap_numerics import ar_ap_gap, gap_table

__all__ = [
    "APP_NAME",
    "load_config",
    "EqualRevenue",
    "Instance",
    "PointMass",
    "Tabulated",
    "Triangle",
    "AuctionGapError",
    "ar_ap_gap",
    "gap_table",
]
