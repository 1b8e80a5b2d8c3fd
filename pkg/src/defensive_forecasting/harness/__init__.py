"""Streams, game orchestration, run configuration, benchmarks and the CLI."""

from .config import Doubling, RuleSpec, RunConfig, load_config
from .game import constant_forecaster_config, doubling_wrapper, run_game
from .streams import StreamSpec

__all__ = ["Doubling", "RuleSpec", "RunConfig", "StreamSpec", "constant_forecaster_config", "doubling_wrapper", "load_config", "run_game"]
