"""Configuration, execution, sweeps and file formats for the command line."""
from .config import ConfigError, ExperimentConfig, load_config
from .io import SnapshotError, read_csv, read_snapshot, write_snapshot
from .runner import RunOutcome, execute, resume, run, sweep

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "SnapshotError", "read_csv", "read_snapshot",
    "write_snapshot", "RunOutcome", "execute", "resume", "run", "sweep",
]
