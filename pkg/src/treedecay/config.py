"""Flat ``key = value`` pipeline configuration with namespaced keys.

Precedence is command-line flags over the config file over the defaults
below.  Unknown keys and unparsable values are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TreeDecayError
from .evaluation import AugmentConfig
from .forest import RfConfig
from .pipeline import FeatureOptions
from .projection import FINAL_HEIGHT, FINAL_WIDTH
from .segmentation import SegParams
from .synthetic import SyntheticSpec
from .terrain import PtdParams


class ConfigError(TreeDecayError, ValueError):
    """Bad configuration key or value (a usage error)."""


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _rule(text):
    text = str(text).strip()
    if text.lower() in ("sqrt", "log2"):
        return text.lower()
    if text.lower() in ("none", "all"):
        return None
    return float(text) if any(c in text for c in ".eE") else int(text)


@dataclass(frozen=True)
class Key:
    default: object
    parse: type
    doc: str


KEYS = {
    "terrain.seed_cell": Key(5.0, float, "grid cell for the lowest-point seeds (m)"),
    "terrain.max_angle": Key(6.0, float, "largest facet angle accepted by densification (deg)"),
    "terrain.max_dist": Key(1.4, float, "largest vertical distance to the facet (m)"),
    "terrain.max_iterations": Key(50, int, "densification passes"),
    "terrain.dtm_cell": Key(1.0, float, "DTM resolution (m)"),
    "seg.threshold": Key(0.5, float, "2D joining distance (m)"),
    "seg.min_height": Key(2.0, float, "lowest seed/apex height (m)"),
    "seg.min_points": Key(16, int, "smallest kept segment"),
    "proj.px_per_m": Key(10.0, float, "render resolution (pixels per meter)"),
    "proj.downscale": Key(0.2, float, "block-average factor"),
    "proj.final_width": Key(FINAL_WIDTH, int, "output image width"),
    "proj.final_height": Key(FINAL_HEIGHT, int, "output image height"),
    "proj.margin": Key(1.0, float, "canvas margin around the largest tree (m)"),
    "feat.levels": Key(16, int, "GLCM gray levels"),
    "feat.hsv_bins": Key(8, int, "HSV bins per channel"),
    "feat.include_optional": Key(False, _bool, "append HOG and Harris blocks"),
    "rf.n_estimators": Key(800, int, "trees per forest"),
    "rf.max_depth": Key(64, int, "deepest node"),
    "rf.random_state": Key(42, int, "forest seed"),
    "rf.class_weight": Key("balanced", str, "balanced or uniform"),
    "rf.features_per_split": Key("sqrt", _rule, "sqrt, log2, none, a count or a fraction"),
    "rf.min_samples_leaf": Key(1, int, "smallest leaf"),
    "eval.k": Key(5, int, "cross-validation folds"),
    "eval.group_atomic": Key(True, _bool, "keep the four views of a tree in one fold"),
    "eval.augment": Key(True, _bool, "augment training trees when their clouds are available"),
    "eval.augment_copies": Key(1, int, "augmented copies per training tree"),
    "eval.rotation": Key(True, _bool, "random rotation about the vertical"),
    "eval.removal_fraction": Key(0.1, float, "point drop probability"),
    "eval.jitter_sigma": Key(0.02, float, "Gaussian jitter (m)"),
    "synth.height_mean": Key(22.0, float, "mean synthetic tree height (m)"),
    "synth.height_sd": Key(6.0, float, "synthetic tree height spread (m)"),
    "synth.color_sigma": Key(0.04, float, "per-point color noise"),
}


def defaults() -> dict:
    return {k: v.default for k, v in KEYS.items()}


def parse_value(key: str, text):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(text, str):
        return text
    try:
        return KEYS[key].parse(text.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_config_text(text: str, source: str = "config") -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            out[key] = parse_value(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return out


def parse_assignments(items) -> dict:
    """``KEY=VALUE`` strings from ``--set`` flags."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(key.strip(), value)
    return out


def resolve(file_values=None, flag_values=None) -> dict:
    """Merge defaults, then the file, then flags."""
    merged = defaults()
    for layer in (file_values or {}, flag_values or {}):
        for key, value in layer.items():
            merged[key] = parse_value(key, value)
    return merged


def dump(config: dict) -> str:
    return "".join(f"{k} = {config[k]}\n" for k in sorted(config))


# -- typed views --------------------------------------------------------------

def ptd_params(cfg) -> PtdParams:
    return PtdParams(cfg["terrain.seed_cell"], cfg["terrain.max_angle"], cfg["terrain.max_dist"],
                     cfg["terrain.max_iterations"])


def seg_params(cfg) -> SegParams:
    return SegParams(cfg["seg.threshold"], cfg["seg.min_height"], cfg["seg.min_points"])


def feature_options(cfg) -> FeatureOptions:
    return FeatureOptions(cfg["feat.levels"], cfg["feat.hsv_bins"], cfg["feat.include_optional"])


def rf_config(cfg) -> RfConfig:
    return RfConfig(cfg["rf.n_estimators"], cfg["rf.max_depth"], cfg["rf.random_state"],
                    cfg["rf.class_weight"], cfg["rf.features_per_split"],
                    cfg["rf.min_samples_leaf"])


def augment_config(cfg, seed: int) -> AugmentConfig:
    return AugmentConfig(cfg["eval.rotation"], cfg["eval.removal_fraction"],
                         cfg["eval.jitter_sigma"], seed)


def synthetic_spec(cfg, seed: int) -> SyntheticSpec:
    return SyntheticSpec(seed=seed, height_mean=cfg["synth.height_mean"],
                         height_sd=cfg["synth.height_sd"], color_sigma=cfg["synth.color_sigma"])


def canvas_options(cfg) -> dict:
    return dict(px_per_m=cfg["proj.px_per_m"], downscale=cfg["proj.downscale"],
                final_width=cfg["proj.final_width"], final_height=cfg["proj.final_height"])
