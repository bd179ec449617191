from .digests import TrajectoryDigest, digest_trajectory
from .reflect import (
    ReflectionOutput,
    cluster_queries,
    extract_entity_literals,
    placeholder_violations,
    reflect,
)
from .train import EpisodeResult, TrainingSetup, consolidate, run_episode, train
from .verify import ErrorReport, verify

__all__ = [
    "TrajectoryDigest",
    "digest_trajectory",
    "ReflectionOutput",
    "cluster_queries",
    "extract_entity_literals",
    "placeholder_violations",
    "reflect",
    "EpisodeResult",
    "TrainingSetup",
    "consolidate",
    "run_episode",
    "train",
    "ErrorReport",
    "verify",
]
