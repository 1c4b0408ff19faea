"""Ground filtering, terrain model and height normalization."""

from .delaunay import Triangulation, delaunay_triangulate, incircle, orient2d
from .dtm import Dtm, build_dtm, normalize_heights, read_dtm_text, write_dtm_text
from .ground import PtdParams, filter_ground, find_triangles

__all__ = [
    "Dtm", "PtdParams", "Triangulation", "build_dtm", "delaunay_triangulate", "filter_ground",
    "find_triangles", "incircle", "normalize_heights", "orient2d", "read_dtm_text",
    "write_dtm_text",
]
