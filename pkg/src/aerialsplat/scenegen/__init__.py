"""Procedural toy cities, aerial camera orbits and ground-truth bundles."""
from .city import FACADE, GROUND, LABEL_NAMES, ROOF, Box, CityConfig, CityLayout, build_layout, generate_city
from .dataset import (DatasetError, GroundTruthBundle, holdout_split, load_bundle, make_dataset, save_bundle)
from .raycast import RayHits, cast_camera, cast_rays, sample_surface_points, visible_from
from .trajectory import TrajectoryConfig, aerial_camera, sample_aerial_cameras

__all__ = [
    "FACADE", "GROUND", "LABEL_NAMES", "ROOF", "Box", "CityConfig", "CityLayout", "DatasetError",
    "GroundTruthBundle", "RayHits", "TrajectoryConfig", "aerial_camera", "build_layout", "cast_camera",
    "cast_rays", "generate_city", "holdout_split", "load_bundle", "make_dataset", "sample_aerial_cameras",
    "sample_surface_points", "save_bundle", "visible_from",
]
