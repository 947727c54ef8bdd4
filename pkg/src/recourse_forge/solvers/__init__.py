from .brute import brute_force_continuous, brute_force_discrete, brute_force_low_level
from .canonical import canonicalize_cfe
from .common import SolveResult, SolverConfig
from .continuous import solve_hl_continuous
from .discrete import solve_hl_discrete
from .lowlevel import LowLevelProblem, solve_low_level

__all__ = [
    "LowLevelProblem",
    "SolveResult",
    "SolverConfig",
    "brute_force_continuous",
    "brute_force_discrete",
    "brute_force_low_level",
    "canonicalize_cfe",
    "solve_hl_continuous",
    "solve_hl_discrete",
    "solve_low_level",
]
