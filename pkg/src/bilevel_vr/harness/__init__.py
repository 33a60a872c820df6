from .config import ConfigError, RunConfig, dump_config, load_config, parse_config
from .runner import CSV_HEADER, MetricsRow, RunResult, compare_runs, read_csv, run_experiment, run_single

__all__ = [
    "CSV_HEADER",
    "ConfigError",
    "MetricsRow",
    "RunConfig",
    "RunResult",
    "compare_runs",
    "dump_config",
    "load_config",
    "parse_config",
    "read_csv",
    "run_experiment",
    "run_single",
]
