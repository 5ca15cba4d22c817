"""Experiment front door: configuration, scenes, datasets and run modes."""

from .config import ExperimentConfig, OptimizerSettings
from .dataset import load_dataset, partition_views, read_ppm, write_ppm
from .experiment import (CSV_HEADER, RunResult, evaluate, metrics_csv, run_client, run_server, run_sim,
                         train_centralized)
from .scene import SceneSpec, Sphere, generate_scene

__all__ = [
    "ExperimentConfig", "OptimizerSettings",
    "load_dataset", "partition_views", "read_ppm", "write_ppm",
    "CSV_HEADER", "RunResult", "evaluate", "metrics_csv", "run_client", "run_server", "run_sim",
    "train_centralized",
    "SceneSpec", "Sphere", "generate_scene",
]
