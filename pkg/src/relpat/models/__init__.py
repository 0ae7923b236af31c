"""Embedding families, parameters, checkpoints and training."""
from .families import FAMILIES, Family, get_family
from .params import (CheckpointError, ModelParameters, compose_relations, init_params, inverse_relation,
                     load_checkpoint, path_score, read_checkpoint_header, relation_vector, save_checkpoint,
                     score, score_all_heads, score_all_tails, score_vec)
from .training import (Gradients, NegativeBatch, TrainConfig, TrainingError, TrainResult, adversarial_weights,
                       loss_and_grad, negative_sample, train, write_log)

__all__ = [
    "FAMILIES", "Family", "get_family", "CheckpointError", "ModelParameters", "compose_relations",
    "init_params", "inverse_relation", "load_checkpoint", "path_score", "read_checkpoint_header",
    "relation_vector", "save_checkpoint", "score", "score_all_heads", "score_all_tails", "score_vec",
    "Gradients", "NegativeBatch", "TrainConfig", "TrainingError", "TrainResult", "adversarial_weights",
    "loss_and_grad", "negative_sample", "train", "write_log",
]
