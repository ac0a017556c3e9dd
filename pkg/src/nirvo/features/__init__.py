"""Scale-invariant detectors, descriptors and matching."""

from .describe import (
    BINARY, GRADIENT_HISTOGRAM, HAAR, Descriptor, DescriptorSet, describe, read_descriptors, write_descriptors,
)
from .dog import detect_dog
from .fast import detect_fast_pyramid
from .hessian import detect_fast_hessian
from .keypoint import Keypoint, read_keypoints_csv, write_keypoints_csv
from .matching import Match, match

# extractor label -> (detector with its default parameters, descriptor kind)
EXTRACTORS = {
    "FAST": (detect_fast_pyramid, BINARY),
    "SIFT": (detect_dog, GRADIENT_HISTOGRAM),
    "SURF": (detect_fast_hessian, HAAR),
}

__all__ = [
    "BINARY", "GRADIENT_HISTOGRAM", "HAAR", "EXTRACTORS",
    "Descriptor", "DescriptorSet", "Keypoint", "Match",
    "describe", "detect_dog", "detect_fast_hessian", "detect_fast_pyramid", "match",
    "read_descriptors", "read_keypoints_csv", "write_descriptors", "write_keypoints_csv",
]
