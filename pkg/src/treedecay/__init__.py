"""Decay-stage classification of individual trees from ALS point clouds and CIR imagery."""

from .cloud import GeoRaster, PointCloud, decay_level
from .errors import (EmptyCloudError, FormatError, InputError, StageError, TreeDecayError)
from .evaluation import (AugmentConfig, cohens_kappa, confusion_matrix, crossval_run,
                         f1_per_class, kfold_split, overall_accuracy)
from .features import ViewFeatureExtractor, global_feature_vector
from .forest import DecayForestClassifier, RfConfig, fit_forest, load_forest, predict, save_forest
from .fusion import colorize, normalize_channels
from .io import read_geo_raster, read_las, read_text_cloud, write_las, write_text_cloud
from .pipeline import process_plot, tree_features
from .projection import CanvasSpec, TreeProjector, project_views
from .segmentation import SegParams, segment_trees
from .synthetic import SyntheticSpec, generate_dataset, generate_synthetic_tree
from .terrain import PtdParams, build_dtm, filter_ground, normalize_heights

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "CanvasSpec", "DecayForestClassifier", "EmptyCloudError", "FormatError",
    "GeoRaster", "InputError", "PointCloud", "PtdParams", "RfConfig", "SegParams", "StageError",
    "SyntheticSpec", "TreeDecayError", "TreeProjector", "ViewFeatureExtractor", "build_dtm",
    "cohens_kappa", "colorize", "confusion_matrix", "crossval_run", "decay_level",
    "f1_per_class", "filter_ground", "fit_forest", "generate_dataset", "generate_synthetic_tree",
    "global_feature_vector", "kfold_split", "load_forest", "normalize_channels",
    "normalize_heights", "overall_accuracy", "predict", "process_plot", "project_views",
    "read_geo_raster", "read_las", "read_text_cloud", "save_forest", "segment_trees",
    "tree_features", "write_las", "write_text_cloud",
]
