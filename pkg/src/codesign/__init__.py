"""Co-design toolkit: robot kinematics and workpiece placement optimized jointly.

Design parameters (link geometry, workpiece pose) are embedded in the kinematic
chain as constant "design joints" and optimized together with the moving-joint
trajectory by direct collocation.
"""

from codesign.kinematics import (
    DhLink,
    KinematicChain,
    Pose,
    enumerate_structures,
    forward_kinematics,
    geometric_jacobian,
    placement_links,
    placement_transform,
)
from codesign.toolpath import Toolpath, Waypoint, figure_eight, resample

__all__ = [
    "DhLink",
    "KinematicChain",
    "Pose",
    "Toolpath",
    "Waypoint",
    "enumerate_structures",
    "figure_eight",
    "forward_kinematics",
    "geometric_jacobian",
    "placement_links",
    "placement_transform",
    "resample",
]

__version__ = "0.1.0"
