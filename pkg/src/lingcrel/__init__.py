"""Causal representation learning for linear non-Gaussian models observed across environments."""
from .graph import Dag, all_dags, random_dag
from .recovery import RecoveredModel, RecoveryOptions, learn_causal_model
from .scm import LinearScm, mixing_matrices, random_model

__all__ = [
    "Dag",
    "LinearScm",
    "RecoveredModel",
    "RecoveryOptions",
    "all_dags",
    "learn_causal_model",
    "mixing_matrices",
    "random_dag",
    "random_model",
]
