"""Experiment runner, config files and command-line interface."""

from .config import ExperimentConfig, ExpParams, dump_config, load_config, parse_config
from .experiments import (EXPERIMENTS, Table, exp_cpu_per_packet, exp_headroom, exp_latency_dist,
                          exp_mitigation_map)

__all__ = ["ExperimentConfig", "ExpParams", "dump_config", "load_config", "parse_config",
           "EXPERIMENTS", "Table", "exp_cpu_per_packet", "exp_headroom", "exp_latency_dist",
           "exp_mitigation_map"]
