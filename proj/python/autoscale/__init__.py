"""Python access to the AutoScale data engine."""

from ._core import (
    EngineConfig,
    RoundRecord,
    WorldSpec,
    __version__,
    eg_update,
    epdms,
    half_cosine_schedule,
    jaccard,
    leverage_scores,
    load_run_config,
    pdms,
    priority,
    r_squared,
    read_round_log,
    run_harness,
    scott_bandwidth,
    swap_harness,
    synthetic_ratio,
)

__all__ = [
    "EngineConfig",
    "RoundRecord",
    "WorldSpec",
    "__version__",
    "eg_update",
    "epdms",
    "half_cosine_schedule",
    "jaccard",
    "leverage_scores",
    "load_run_config",
    "pdms",
    "priority",
    "r_squared",
    "read_round_log",
    "run_harness",
    "scott_bandwidth",
    "swap_harness",
    "synthetic_ratio",
]
