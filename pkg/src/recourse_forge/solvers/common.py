from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..core import Cfe
from ..errors import ConfigError

BOUNDS = ("lp", "ascent", "maxmin")


@dataclass(frozen=True)
class SolverConfig:
    """Search limits and bound choice shared by the exact solvers.

    ``tie_rtol`` sets how close two costs must be (relative to the optimum) to
    count as tied. Costs here are sums of floats, so exact equality is too strict.
    """

    node_limit: int = 10**7
    time_limit: Optional[float] = None
    bound: str = "ascent"
    enforce_nonnegative: bool = False
    tie_rtol: float = 1e-9
    use_kernel: bool = True
    chunk_nodes: int = 200_000

    def __post_init__(self):
        if self.bound not in BOUNDS:
            raise ConfigError(f"bound must be one of {BOUNDS}, got {self.bound!r}")
        if self.node_limit < 1:
            raise ConfigError("node_limit must be positive")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ConfigError("time_limit must be positive")
        if not 0 <= self.tie_rtol < 1e-3:
            raise ConfigError("tie_rtol must be in [0, 1e-3)")

    def tol(self, cost: float) -> float:
        return self.tie_rtol * max(1.0, abs(cost))


@dataclass(frozen=True)
class SolveResult:
    cfe: Cfe
    optimal: bool
    nodes_explored: int
    wall_time: float
    already_positive: bool = False
