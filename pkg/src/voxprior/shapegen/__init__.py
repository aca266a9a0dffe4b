"""Procedural TSDF shape generation: primitives, families, rasterization,
datasets."""

from .dataset import (
    Dataset,
    load_dataset,
    make_dataset,
    read_pgm,
    read_tsdf_file,
    split_indices,
    write_pgm,
    write_tsdf_file,
)
from .families import (
    ATTRIBUTE_NAMES,
    FAMILIES,
    PARAM_RANGES,
    ShapeSpec,
    build_scene,
    random_spec,
    sample_spec,
)
from .grid import (
    Silhouette,
    TsdfGrid,
    cell_centers,
    interior_connected,
    rasterize_tsdf,
    silhouette_project,
)
from .sdf import Box, Cylinder, Primitive, Scene, Sphere, primitive_sdf

__all__ = [
    "ATTRIBUTE_NAMES",
    "Box",
    "Cylinder",
    "Dataset",
    "FAMILIES",
    "PARAM_RANGES",
    "Primitive",
    "Scene",
    "ShapeSpec",
    "Silhouette",
    "Sphere",
    "TsdfGrid",
    "build_scene",
    "cell_centers",
    "interior_connected",
    "load_dataset",
    "make_dataset",
    "primitive_sdf",
    "random_spec",
    "rasterize_tsdf",
    "read_pgm",
    "read_tsdf_file",
    "sample_spec",
    "silhouette_project",
    "split_indices",
    "split_indices",
    "write_pgm",
    "write_tsdf_file",
]
