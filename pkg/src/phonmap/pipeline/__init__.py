"""Configuration, stages and command line for end-to-end experiments."""

from .config import DEFAULTS, config_digest, load_config, stage_digest
from .stages import STAGES, Run, run_all, run_stage

__all__ = ["DEFAULTS", "STAGES", "Run", "config_digest", "load_config", "run_all", "run_stage", "stage_digest"]
