"""Parameter search toward a monitoring FPR or reference graph statistics."""
from .metrics import evaluate_metrics, false_positive_rate, pr_curve, precision_at_recall
from .objectives import (DataInformedObjective, KnowledgeFreeObjective, compare_stats,
                         importance_spread)
from .pareto import ParetoArchive, dominates, nondominated_mask, nondomination_rank
from .search import (CalibrationError, Dimension, Journal, SearchSpace, TrialRecord,
                     default_space, optimize)
from .tree import DecisionTree, gini, gini_importance, train_tree

__all__ = [
    "CalibrationError", "DataInformedObjective", "DecisionTree", "Dimension", "Journal",
    "KnowledgeFreeObjective", "ParetoArchive", "SearchSpace", "TrialRecord", "compare_stats",
    "default_space", "dominates", "evaluate_metrics", "false_positive_rate", "gini",
    "gini_importance", "importance_spread", "nondominated_mask", "nondomination_rank",
    "optimize", "pr_curve", "precision_at_recall", "train_tree",
]
