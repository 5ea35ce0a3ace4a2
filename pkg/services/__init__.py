# Service modules for kgap
from .report import write_report
from .simulator import SimResult, simulate_ap, simulate_ar, simulate_spm
from .verification import CheckResult, run_verification_suite

__all__ = [
    "write_report",
    "SimResult",
    "simulate_ap",
    "simulate_ar",
    "simulate_spm",
    "CheckResult",
    "run_verification_suite",
]
