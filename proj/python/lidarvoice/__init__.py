"""LiDAR + camera object classification with spoken announcements."""

from ._lidarvoice import (
    CLASS_NAMES,
    Model,
    class_name,
    cluster_dbscan,
    downsample_points,
    format_phrase,
    kitti_ratio_counts,
    normalize_points,
    parse_label_file,
    preprocess,
    read_velodyne_bin,
    remove_statistical_outliers,
    round_half_up,
    synthetic_sample,
    write_velodyne_bin,
)

__all__ = [
    "CLASS_NAMES",
    "Model",
    "class_name",
    "cluster_dbscan",
    "downsample_points",
    "format_phrase",
    "kitti_ratio_counts",
    "normalize_points",
    "parse_label_file",
    "preprocess",
    "read_velodyne_bin",
    "remove_statistical_outliers",
    "round_half_up",
    "synthetic_sample",
    "write_velodyne_bin",
]
