"""Near-infrared versus visible feature extraction and visual-odometry evaluation.

Subpackages and modules:

* ``core``: images, intrinsics, rotations, IMU streams and ground truth
* ``preprocess``: undistortion, vignette detection and cropping, CLAHE
* ``features``: FAST pyramid, DoG and fast-Hessian detectors, descriptors, matching
* ``epipolar``: five-point solver, RANSAC, decomposition, validity
* ``metrics``: feature counts, VOP and inlier ratio, report CSVs
* ``synth``: synthetic snow-wall scenes with grain-size dependent albedo
* ``harness``: configs, ingestion, experiment runs and the ``nirvo`` CLI
"""

__version__ = "0.1.0"
