"""Visuo-tactile pose tracking and shape reconstruction on a synthetic testbed.

Modules, bottom up: ``geometry`` (SE(3)/SE(2)), ``tactile_map`` (depth and
gradient maps), ``simulator`` (objects, sensor, trajectories), ``odometry``
(tactile registration and the vision oracle), ``loop_closure``,
``factor_graph``, ``reconstruction`` and ``harness`` (end-to-end runs).
"""

from .geometry import PlanarPose, PointCloud, Pose, Twist, pose_error

__version__ = "0.1.0"

__all__ = ["PlanarPose", "PointCloud", "Pose", "Twist", "pose_error", "__version__"]
