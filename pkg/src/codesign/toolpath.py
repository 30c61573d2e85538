"""Figure-eight milling toolpath: timed waypoints with tangents and tool axes."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

# Waypoints with a smaller tangent norm are rejected: the force model
# normalizes by the tangent and must never divide by ~0.
TANGENT_EPSILON = 1e-9


class ToolpathError(ValueError):
    pass


@dataclass(eq=False)
class Waypoint:
    """One sample: time, position, desired tool z-axis, path tangent."""

    t: float
    position: np.ndarray
    target_axis: np.ndarray
    tangent: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.target_axis = np.asarray(self.target_axis, dtype=float).reshape(3)
        self.tangent = np.asarray(self.tangent, dtype=float).reshape(3)
        norm = np.linalg.norm(self.target_axis)
        if abs(norm - 1.0) > 1e-12:
            raise ToolpathError(f"target_axis must be unit length, got norm {norm}")
        if np.linalg.norm(self.tangent) <= TANGENT_EPSILON:
            raise ToolpathError(f"tangent norm below {TANGENT_EPSILON} at t={self.t}")


@dataclass(eq=False)
class Toolpath:
    """Ordered waypoints with strictly increasing timestamps."""

    waypoints: tuple

    def __post_init__(self):
        self.waypoints = tuple(self.waypoints)
        if len(self.waypoints) < 2:
            raise ToolpathError("a toolpath needs at least 2 waypoints")
        times = self.times
        if not np.all(np.diff(times) > 0):
            raise ToolpathError("waypoint times must be strictly increasing")

    def __len__(self):
        return len(self.waypoints)

    def __iter__(self):
        return iter(self.waypoints)

    def __getitem__(self, i):
        return self.waypoints[i]

    @property
    def times(self) -> np.ndarray:
        return np.array([w.t for w in self.waypoints])

    @property
    def positions(self) -> np.ndarray:
        return np.array([w.position for w in self.waypoints])

    @property
    def axes(self) -> np.ndarray:
        return np.array([w.target_axis for w in self.waypoints])

    @property
    def tangents(self) -> np.ndarray:
        return np.array([w.tangent for w in self.waypoints])

    @property
    def t0(self) -> float:
        return self.waypoints[0].t

    @property
    def tf(self) -> float:
        return self.waypoints[-1].t

    def content_hash(self) -> str:
        """Stable hash over the waypoint records, for comparing run bundles."""
        import hashlib

        h = hashlib.sha256()
        for w in self.waypoints:
            h.update(np.array([w.t]).tobytes())
            h.update(w.position.tobytes())
            h.update(w.target_axis.tobytes())
            h.update(w.tangent.tobytes())
        return h.hexdigest()


def figure_eight(center=(1.0, 0.0, 0.3), width=0.4, height=0.2, n=80,
                 duration=8.0) -> Toolpath:
    """Gerono lemniscate in the plane z = center_z.

    s(u) = center + (width sin u, height sin u cos u, 0) with u = 2 pi t /
    duration, sampled at n uniform times over [0, duration).  The tangent is
    the analytic time derivative; the target tool axis is the plane normal.
    """
    if n < 8:
        raise ToolpathError(f"need at least 8 samples, got {n}")
    if width <= 0 or height <= 0 or duration <= 0:
        raise ToolpathError("width, height and duration must be positive")
    center = np.asarray(center, dtype=float).reshape(3)
    axis = np.array([0.0, 0.0, 1.0])
    rate = 2.0 * np.pi / duration
    pts = []
    for k in range(n):
        t = duration * k / n
        u = rate * t
        pos = center + np.array([width * np.sin(u),
                                 height * np.sin(u) * np.cos(u), 0.0])
        tan = rate * np.array([width * np.cos(u),
                               height * np.cos(2.0 * u), 0.0])
        pts.append(Waypoint(t=t, position=pos, target_axis=axis, tangent=tan))
    return Toolpath(tuple(pts))


def resample(path: Toolpath, n: int) -> Toolpath:
    """Linear reinterpolation to n waypoints over the same time span.

    Positions and times interpolate linearly, axes renormalize, tangents are
    recomputed as chord differences (central inside, one-sided at the ends).
    """
    if n < 2:
        raise ToolpathError(f"need at least 2 waypoints, got {n}")
    if n == len(path):
        return Toolpath(path.waypoints)
    told = path.times
    tnew = np.linspace(told[0], told[-1], n)
    pos = np.column_stack([np.interp(tnew, told, path.positions[:, i]) for i in range(3)])
    axes = np.column_stack([np.interp(tnew, told, path.axes[:, i]) for i in range(3)])
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    tangents = np.empty_like(pos)
    tangents[1:-1] = (pos[2:] - pos[:-2]) / (tnew[2:] - tnew[:-2])[:, None]
    tangents[0] = (pos[1] - pos[0]) / (tnew[1] - tnew[0])
    tangents[-1] = (pos[-1] - pos[-2]) / (tnew[-1] - tnew[-2])
    return Toolpath(tuple(Waypoint(t=t, position=p, target_axis=a, tangent=g)
                          for t, p, a, g in zip(tnew, pos, axes, tangents)))


def load_csv(path_or_file) -> Toolpath:
    """Toolpath from CSV columns t, x, y, z, ax, ay, az.

    Tool axes renormalize; tangents come from central differences of the
    positions (one-sided at the ends).
    """
    if hasattr(path_or_file, "read"):
        rows = list(csv.DictReader(path_or_file))
    else:
        with open(path_or_file, newline="") as fh:
            rows = list(csv.DictReader(fh))
    if len(rows) < 2:
        raise ToolpathError("toolpath CSV needs at least 2 rows")
    try:
        t = np.array([float(r["t"]) for r in rows])
        pos = np.array([[float(r[c]) for c in ("x", "y", "z")] for r in rows])
        axes = np.array([[float(r[c]) for c in ("ax", "ay", "az")] for r in rows])
    except (KeyError, TypeError) as exc:
        raise ToolpathError(f"toolpath CSV needs columns t,x,y,z,ax,ay,az: {exc}") from exc
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    tangents = np.empty_like(pos)
    tangents[1:-1] = (pos[2:] - pos[:-2]) / (t[2:] - t[:-2])[:, None]
    tangents[0] = (pos[1] - pos[0]) / (t[1] - t[0])
    tangents[-1] = (pos[-1] - pos[-2]) / (t[-1] - t[-2])
    return Toolpath(tuple(Waypoint(t=tk, position=p, target_axis=a, tangent=g)
                          for tk, p, a, g in zip(t, pos, axes, tangents)))


def save_csv(path: Toolpath, file) -> None:
    writer = csv.writer(file)
    writer.writerow(["t", "x", "y", "z", "ax", "ay", "az"])
    for w in path:
        row = [w.t, *w.position, *w.target_axis]
        writer.writerow([repr(float(v)) for v in row])
