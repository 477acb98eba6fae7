"""Time-series feature catalog, feature matrices and importance grouping."""

from .catalog import GROUPS, SCHEMAS, FeatureSpec, SeriesContext, compute_feature
from .config import dump_config, load_config, specs_from_mapping
from .importance import GroupImportance, aggregate_importance, group_of, render_importance_table
from .matrix import (
    MISSING_FILL,
    VARIANCE_FLOOR,
    FeatureMatrix,
    FeatureVector,
    build_feature_matrix,
    extract_all,
    impute_and_prune,
)

__all__ = [
    "GROUPS", "SCHEMAS", "FeatureSpec", "SeriesContext", "compute_feature",
    "dump_config", "load_config", "specs_from_mapping",
    "GroupImportance", "aggregate_importance", "group_of", "render_importance_table",
    "MISSING_FILL", "VARIANCE_FLOOR", "FeatureMatrix", "FeatureVector",
    "build_feature_matrix", "extract_all", "impute_and_prune",
]
