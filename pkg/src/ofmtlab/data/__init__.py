from .augment import DEFAULT_POLICY, AffineDraw, AugmentPolicy, affine_matrix, augment_image, sample_affine, sample_transform
from .clips import GestureClip, export_dataset, load_clip_dir, load_frame_dataset, read_frame, write_frame
from .splits import DatasetSplit, stratified_kfold, train_test_split
from .synthetic import (
    DIGIT_STROKES,
    SyntheticTruth,
    distance_to_polyline,
    generate_synthetic,
    path_mask,
    render_frames,
    trajectory_overlap,
)

__all__ = [
    "DEFAULT_POLICY", "AffineDraw", "AugmentPolicy", "affine_matrix", "augment_image", "sample_affine", "sample_transform",
    "GestureClip", "export_dataset", "load_clip_dir", "load_frame_dataset", "read_frame", "write_frame",
    "DatasetSplit", "stratified_kfold", "train_test_split",
    "DIGIT_STROKES", "SyntheticTruth", "distance_to_polyline", "generate_synthetic", "path_mask",
    "render_frames", "trajectory_overlap",
]
