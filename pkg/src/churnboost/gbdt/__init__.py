from .binning import BinMap, quantile_bins
from .booster import GbdtModel, feature_importance, predict, train
from .grower import Tree, grow_tree
from .objective import logistic_grad_hess, sigmoid
from .params import GbdtParams
from .split import SplitInfo, best_split, build_histogram

__all__ = [
    "BinMap", "GbdtModel", "GbdtParams", "SplitInfo", "Tree", "best_split", "build_histogram",
    "feature_importance", "grow_tree", "logistic_grad_hess", "predict", "quantile_bins", "sigmoid", "train",
]
