"""Multi-pass tactile refinement of a 5.5 mm slide over a textured plane.

    python3 demos/refinement.py
"""

import math

import numpy as np

from vtslam.geometry import PlanarPose, Pose
from vtslam.odometry import RefinementConfig, RefinementTrace, refine
from vtslam.simulator import Plane, SensorConfig, SyntheticObject, Texture, contact_pose, render_tactile
from vtslam.tactile_map import warp

sensor = SensorConfig(100, 100, 0.24, 2.0)
obj = SyntheticObject(Plane(), Texture(0.3, 2.0, 3, 0))
pose = contact_pose(Plane(), np.zeros(3), np.array([1.0, 0, 0]), 1.0, sensor)
prev = render_tactile(obj, Pose.from_translation([12.0, -7.0, 0.0]) @ pose, sensor)[1]

truth = PlanarPose(5.5 * math.cos(0.7), 5.5 * math.sin(0.7), math.radians(3.0))
curr = warp(prev, truth)

trace = RefinementTrace()
P, low, n = refine(prev, curr, RefinementConfig(), trace=trace)

print(f"true motion     x {truth.x:6.3f}  y {truth.y:6.3f}  yaw {math.degrees(truth.yaw):6.3f} deg")
for i, A in enumerate(trace.accumulated, 1):
    e = A.inverse() @ truth
    print(f"after pass {i}    x {A.x:6.3f}  y {A.y:6.3f}  yaw {math.degrees(A.yaw):6.3f} deg   residual {math.hypot(e.x, e.y):.3f} mm")
print(f"{n} passes, low confidence: {low}")
