from .ensemble import (
    MODEL_KINDS,
    TreeEnsemble,
    fit_gbt,
    fit_model,
    fit_random_forest,
    load_model,
    predict,
    save_model,
)
from .search import HyperGrid, grid_search
from .tree import Tree, fit_cart

__all__ = [
    "MODEL_KINDS",
    "TreeEnsemble",
    "fit_gbt",
    "fit_model",
    "fit_random_forest",
    "load_model",
    "predict",
    "save_model",
    "HyperGrid",
    "grid_search",
    "Tree",
    "fit_cart",
]
