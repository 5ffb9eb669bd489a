"""Jointly learned label trees for extreme classification and language modeling."""
from .assign import AssignmentProblem, InfeasibleError, assign_labels, feasibility_check, rebuild_tree
from .baselines import flat_tree, huffman_tree, random_tree
from .corpus import load_classification_corpus, load_lm_corpus
from .inference import EvalReport, log_prob, perplexity, precision_at_1, predict_top1
from .kernels import BACKEND
from .model import Model, node_backward, node_forward, represent_bow, represent_context
from .modelfile import load_model, save_model
from .objective import (
    SplitDistribution,
    balancedness,
    boosting_node_bound,
    gradient_logp,
    gradient_p,
    objective_max,
    objective_value,
    purity,
)
from .stats import NodeStats, init_stats
from .trainer import TrainConfig, train
from .tree import Path, Tree, build_initial_tree, path_of, validate

__version__ = "0.1.0"
