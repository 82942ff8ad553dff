"""Top-view semantic grid maps from labeled LiDAR scans."""

from __future__ import annotations

from .dense import AggregationParams, build_dense_gt, select_neighbor_scans
from .encoding import encode_cell, encode_grid, encode_histograms, label_distribution
from .evaluation import ConfusionMatrix, accumulate, iou, results
from .grid import GridSpec, MultiLayerGrid
from .kitti_io import PointCloud, Pose, open_sequence, read_labels, read_point_cloud, read_poses
from .polar import PolarSpec, build_grid, cast_rays, remap_to_cartesian
from .storage import GridFile, read_grid_file, write_grid_file

__version__ = "0.1.0"

__all__ = [
    "AggregationParams",
    "ConfusionMatrix",
    "GridFile",
    "GridSpec",
    "MultiLayerGrid",
    "PointCloud",
    "PolarSpec",
    "Pose",
    "accumulate",
    "build_dense_gt",
    "build_grid",
    "cast_rays",
    "encode_cell",
    "encode_grid",
    "encode_histograms",
    "iou",
    "label_distribution",
    "open_sequence",
    "read_grid_file",
    "read_labels",
    "read_point_cloud",
    "read_poses",
    "remap_to_cartesian",
    "results",
    "select_neighbor_scans",
    "write_grid_file",
]
