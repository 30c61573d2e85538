"""DH-parameterized kinematic chains with mixed moving and design variables.

Every chain variable, moving or design, is one of the four DH parameters of
some link.  Each variable acts as a 1-DOF joint (theta/alpha rotate, d/a
translate), so forward kinematics and the geometric Jacobian treat both
classes uniformly; the moving/design split is an index partition.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from codesign import kernels

REVOLUTE = "revolute"
PRISMATIC = "prismatic"
FIXED = "fixed"

PARAM_NAMES = ("theta", "d", "a", "alpha")
# d and a translate; theta and alpha rotate
_ROTATIONAL = {"theta": True, "d": False, "a": False, "alpha": True}
_MOVING_PARAM = {REVOLUTE: "theta", PRISMATIC: "d", FIXED: None}

# Default design-joint boxes.  Size parameters must stay positive (placement
# links are exempt, their cuboid is configured explicitly); angles are
# unbounded here and get a finite sampling box only in the solver.
SIZE_BOUNDS = (0.0, 3.0)
ANGLE_BOUNDS = (-np.inf, np.inf)


class ChainError(ValueError):
    """Invalid chain construction or mismatched joint vector."""


@dataclass(eq=False)
class Pose:
    """Rigid pose: position in meters and a 3x3 rotation matrix."""

    p: np.ndarray
    R: np.ndarray

    @property
    def axis(self) -> np.ndarray:
        """Tool z-axis (third column of the rotation)."""
        return self.R[:, 2]

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T


@dataclass(frozen=True)
class DhLink:
    """One DH transform Rot_z(theta) Trans_z(d) Trans_x(a) Rot_x(alpha).

    ``kind`` names the moving variable (revolute -> theta, prismatic -> d,
    fixed -> none).  ``design`` lists the parameters that are design joints;
    the moving parameter can never be one of them.  ``bounds`` optionally
    overrides the per-parameter design box.  ``placement`` marks links of the
    workpiece-placement prefix, which are exempt from the positive-size rule
    and from size regularization.
    """

    kind: str
    theta: float = 0.0
    d: float = 0.0
    a: float = 0.0
    alpha: float = 0.0
    design: frozenset = frozenset()
    bounds: dict = field(default_factory=dict)
    placement: bool = False
    label: str = ""

    def __post_init__(self):
        if self.kind not in (REVOLUTE, PRISMATIC, FIXED):
            raise ChainError(f"unknown joint kind {self.kind!r}")
        design = frozenset(self.design)
        object.__setattr__(self, "design", design)
        unknown = design - set(PARAM_NAMES)
        if unknown:
            raise ChainError(f"unknown design parameters {sorted(unknown)}")
        moving = _MOVING_PARAM[self.kind]
        if moving in design:
            raise ChainError(f"{moving} is the moving variable and cannot be a design joint")
        for name in design:
            lo, hi = self.design_bounds(name)
            if lo > hi:
                raise ChainError(f"empty bounds for design parameter {name}")
            if name in ("d", "a") and not self.placement and lo < 0.0:
                raise ChainError(f"size design parameter {name} needs a lower bound >= 0")

    def design_bounds(self, name: str) -> tuple:
        if name in self.bounds:
            return tuple(self.bounds[name])
        if name in ("d", "a"):
            return SIZE_BOUNDS
        return ANGLE_BOUNDS

    def value(self, name: str) -> float:
        return getattr(self, name)


@dataclass(frozen=True)
class ChainVariable:
    """One entry of a chain's variable table, in canonical chain order."""

    index: int
    link: int
    param: str
    moving: bool
    rotational: bool
    name: str


@dataclass(eq=False)
class KinematicChain:
    """Serial chain of DH links between a base pose and a tool transform.

    The full joint vector ``q`` covers every variable (moving and design) in
    canonical order: links first to last, parameters theta, d, a, alpha within
    a link.  ``moving_indices``/``design_indices`` give the stable partition.
    """

    links: tuple
    base_pose: np.ndarray = None
    flange_to_tool: np.ndarray = None

    def __post_init__(self):
        self.links = tuple(self.links)
        if self.base_pose is None:
            self.base_pose = np.eye(4)
        if self.flange_to_tool is None:
            self.flange_to_tool = np.eye(4)
        self.base_pose = np.asarray(self.base_pose, dtype=float)
        self.flange_to_tool = np.asarray(self.flange_to_tool, dtype=float)
        if self.base_pose.shape != (4, 4) or self.flange_to_tool.shape != (4, 4):
            raise ChainError("base_pose and flange_to_tool must be 4x4 transforms")
        self._build_variable_table()
        self._packed = None

    def _build_variable_table(self):
        variables = []
        for li, link in enumerate(self.links):
            tag = link.label or f"link{li}"
            moving = _MOVING_PARAM[link.kind]
            for param in PARAM_NAMES:
                if param == moving:
                    variables.append(ChainVariable(len(variables), li, param, True,
                                                   _ROTATIONAL[param], f"{tag}_{param}"))
                elif param in link.design:
                    variables.append(ChainVariable(len(variables), li, param, False,
                                                   _ROTATIONAL[param], f"{tag}_{param}"))
        self.variables = tuple(variables)
        self.moving_indices = np.array([v.index for v in variables if v.moving], dtype=np.intp)
        self.design_indices = np.array([v.index for v in variables if not v.moving], dtype=np.intp)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_moving(self) -> int:
        return len(self.moving_indices)

    @property
    def n_design(self) -> int:
        return len(self.design_indices)

    def default_q(self) -> np.ndarray:
        """Joint vector holding every variable at its stored link value."""
        return np.array([self.links[v.link].value(v.param) for v in self.variables])

    def design_bounds(self) -> np.ndarray:
        """(n_design, 2) design boxes in design_indices order."""
        out = np.empty((self.n_design, 2))
        for row, idx in enumerate(self.design_indices):
            v = self.variables[idx]
            out[row] = self.links[v.link].design_bounds(v.param)
        return out

    def design_names(self) -> list:
        return [self.variables[i].name for i in self.design_indices]

    def split(self, q) -> tuple:
        """Partition a full joint vector into (q_m, q_d)."""
        q = self._check_q(q)
        return q[self.moving_indices], q[self.design_indices]

    def assemble(self, q_m, q_d) -> np.ndarray:
        """Inverse of split: interleave moving and design values."""
        q = np.empty(self.n_vars)
        q[self.moving_indices] = q_m
        q[self.design_indices] = q_d
        return q

    def with_design(self, q_d) -> "KinematicChain":
        """New chain whose design parameters are frozen at the given values."""
        q_d = np.asarray(q_d, dtype=float)
        if q_d.shape != (self.n_design,):
            raise ChainError(f"expected {self.n_design} design values, got {q_d.shape}")
        updates = {}
        for value, idx in zip(q_d, self.design_indices):
            v = self.variables[idx]
            updates.setdefault(v.link, {})[v.param] = value
        links = []
        for li, link in enumerate(self.links):
            if li in updates:
                new_design = link.design - set(updates[li])
                links.append(replace(link, design=new_design, **updates[li]))
            else:
                links.append(link)
        return KinematicChain(tuple(links), self.base_pose, self.flange_to_tool)

    def _check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_vars,):
            raise ChainError(f"expected joint vector of length {self.n_vars}, got {q.shape}")
        return q

    def packed(self):
        if self._packed is None:
            self._packed = PackedChain.from_chain(self)
        return self._packed

    def __getstate__(self):
        return {"links": self.links, "base_pose": self.base_pose,
                "flange_to_tool": self.flange_to_tool}

    def __setstate__(self, state):
        self.links = state["links"]
        self.base_pose = state["base_pose"]
        self.flange_to_tool = state["flange_to_tool"]
        self.__post_init__()


@dataclass(eq=False)
class PackedChain:
    """Flat array view of a chain for the numeric kernels."""

    params: np.ndarray      # (n_links, 4) float64, theta/d/a/alpha defaults
    var_link: np.ndarray    # (n_vars,) int32
    var_param: np.ndarray   # (n_vars,) int32, 0..3
    var_rot: np.ndarray     # (n_vars,) uint8, 1 if the variable rotates
    moving_idx: np.ndarray  # (n_moving,) int64 positions in the variable list
    design_idx: np.ndarray  # (n_design,) int64
    base_R: np.ndarray
    base_p: np.ndarray
    tool_R: np.ndarray
    tool_p: np.ndarray

    @classmethod
    def from_chain(cls, chain: KinematicChain) -> "PackedChain":
        params = np.array([[link.theta, link.d, link.a, link.alpha] for link in chain.links],
                          dtype=np.float64).reshape(len(chain.links), 4)
        param_pos = {name: i for i, name in enumerate(PARAM_NAMES)}
        var_link = np.array([v.link for v in chain.variables], dtype=np.int32)
        var_param = np.array([param_pos[v.param] for v in chain.variables], dtype=np.int32)
        var_rot = np.array([1 if v.rotational else 0 for v in chain.variables], dtype=np.uint8)
        return cls(
            params=params,
            var_link=var_link,
            var_param=var_param,
            var_rot=var_rot,
            moving_idx=chain.moving_indices.astype(np.int64),
            design_idx=chain.design_indices.astype(np.int64),
            base_R=np.ascontiguousarray(chain.base_pose[:3, :3]),
            base_p=np.ascontiguousarray(chain.base_pose[:3, 3]),
            tool_R=np.ascontiguousarray(chain.flange_to_tool[:3, :3]),
            tool_p=np.ascontiguousarray(chain.flange_to_tool[:3, 3]),
        )


def forward_kinematics(chain: KinematicChain, q) -> Pose:
    """Tool pose for the full joint vector (moving and design variables)."""
    q = chain._check_q(q)
    p, R = kernels.fk_pose(chain.packed(), q)
    return Pose(p=p, R=R)


def geometric_jacobian(chain: KinematicChain, q) -> np.ndarray:
    """6 x n_vars geometric Jacobian of the tool pose.

    Rows 0-2 are linear velocity, rows 3-5 angular.  Column i belongs to
    variable i of the canonical order, whether moving or design.
    """
    q = chain._check_q(q)
    return kernels.fk_jacobian(chain.packed(), q)[2]


def enumerate_structures(max_dof: int) -> list:
    """All R/P joint-type sequences of length 1..max_dof.

    2^n sequences for each fixed length n; 126 in total for max_dof=6 (the
    nominal count of 123 quoted elsewhere does not match the sum, so nothing
    is dropped here).  Order: length ascending, then alphabet order (R, P).
    """
    if not 1 <= max_dof <= 6:
        raise ValueError(f"max_dof must be in 1..6, got {max_dof}")
    out = []
    for n in range(1, max_dof + 1):
        out.extend("".join(c) for c in itertools.product("RP", repeat=n))
    return out


def structure_chain(structure: str, tool_offset: float = 0.1) -> KinematicChain:
    """Chain template for a joint-type sequence, all geometry as design joints.

    Revolute links move in theta and expose (d, a, alpha) as design joints;
    prismatic links move in d and expose (theta, a, alpha).  A fixed tool
    transform of ``tool_offset`` along z is appended identically for every
    structure so rankings compare like with like.
    """
    if not structure or any(c not in "RP" for c in structure):
        raise ChainError(f"structure must be a non-empty string over R/P, got {structure!r}")
    links = []
    for c in structure:
        if c == "R":
            links.append(DhLink(kind=REVOLUTE, design=frozenset({"d", "a", "alpha"})))
        else:
            links.append(DhLink(kind=PRISMATIC, design=frozenset({"theta", "a", "alpha"})))
    tool = np.eye(4)
    tool[2, 3] = tool_offset
    return KinematicChain(tuple(links), flange_to_tool=tool)


# Placement prefix: Trans(x, y, z) followed by Rz(r1) Ry(r2) Rx(r3), realized
# as six DH links with one design parameter each.  Fixed theta/alpha entries
# re-aim the translation axes and set up the Euler composition.
_HALF_PI = np.pi / 2.0


def placement_links(cuboid=None, rotation_bounds=None) -> tuple:
    """Six design-only links encoding workpiece pose (x, y, z, r1, r2, r3).

    ``cuboid`` is ((xlo, xhi), (ylo, yhi), (zlo, zhi)) confining the prismatic
    joints; ``rotation_bounds`` the analogous boxes for the revolute joints.
    """
    if cuboid is None:
        cuboid = ((-2.0, 2.0), (-2.0, 2.0), (-1.0, 1.0))
    if rotation_bounds is None:
        rotation_bounds = ((-np.pi, np.pi),) * 3
    (xb, yb, zb), (r1b, r2b, r3b) = cuboid, rotation_bounds
    return (
        DhLink(kind=FIXED, design=frozenset({"a"}), bounds={"a": tuple(xb)},
               placement=True, label="place_x"),
        DhLink(kind=FIXED, theta=_HALF_PI, design=frozenset({"a"}),
               bounds={"a": tuple(yb)}, placement=True, label="place_y"),
        DhLink(kind=FIXED, theta=-_HALF_PI, design=frozenset({"d"}),
               bounds={"d": tuple(zb)}, placement=True, label="place_z"),
        DhLink(kind=FIXED, alpha=-_HALF_PI, design=frozenset({"theta"}),
               bounds={"theta": tuple(r1b)}, placement=True, label="place_r1"),
        DhLink(kind=FIXED, alpha=_HALF_PI, design=frozenset({"theta"}),
               bounds={"theta": tuple(r2b)}, placement=True, label="place_r2"),
        DhLink(kind=FIXED, design=frozenset({"alpha"}), bounds={"alpha": tuple(r3b)},
               placement=True, label="place_r3"),
    )


def placement_transform(v) -> np.ndarray:
    """Rigid transform encoded by placement values (x, y, z, r1, r2, r3)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (6,):
        raise ChainError(f"placement takes 6 values, got {v.shape}")
    x, y, z, r1, r2, r3 = v
    c1, s1 = np.cos(r1), np.sin(r1)
    c2, s2 = np.cos(r2), np.sin(r2)
    c3, s3 = np.cos(r3), np.sin(r3)
    Rz = np.array([[c1, -s1, 0.0], [s1, c1, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[c2, 0.0, s2], [0.0, 1.0, 0.0], [-s2, 0.0, c2]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, c3, -s3], [0.0, s3, c3]])
    T = np.eye(4)
    T[:3, :3] = Rz @ Ry @ Rx
    T[:3, 3] = (x, y, z)
    return T


def with_placement(chain: KinematicChain, cuboid=None, rotation_bounds=None) -> KinematicChain:
    """Prepend a placement prefix to a chain."""
    return KinematicChain(placement_links(cuboid, rotation_bounds) + chain.links,
                          chain.base_pose, chain.flange_to_tool)
