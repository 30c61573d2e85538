"""Scalar cost terms: tracking, compliance deformation, size regularization,
and the modular attraction cost that pulls design joints toward a catalog."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from codesign import kernels
from codesign.kinematics import KinematicChain, Pose
from codesign.toolpath import TANGENT_EPSILON, Waypoint


class CostError(ValueError):
    pass


@dataclass(frozen=True)
class StiffnessModel:
    """Per-moving-joint stiffness; design joints are infinitely stiff.

    Units are torque/rad for revolute and force/m for prismatic joints; the
    calibration sets every entry to 1 unless measured values exist.
    """

    k: np.ndarray = None

    def for_chain(self, chain: KinematicChain) -> np.ndarray:
        n_m = chain.n_moving
        if self.k is None:
            return np.ones(n_m)
        k = np.asarray(self.k, dtype=float)
        if k.ndim == 0:
            k = np.full(n_m, float(k))
        if k.shape != (n_m,):
            raise CostError(f"expected {n_m} stiffness values, got {k.shape}")
        if np.any(k <= 0):
            raise CostError("joint stiffnesses must be positive")
        return k


@dataclass(frozen=True)
class CostWeights:
    """Weights of the scalarized objective.

    tracking scales the tracking term against the deformation term;
    alpha_force is the milling force magnitude in N; lambda_reg and
    lambda_mod weigh size regularization and the modular attraction cost;
    w_lin / w_ang weigh the linear (d, a) and angular (alpha) components of
    the module distance.
    """

    tracking: float = 1e4
    alpha_force: float = 100.0
    lambda_reg: float = 1e-3
    lambda_mod: float = 1.0
    w_lin: float = 1.0
    w_ang: float = 0.1

    def __post_init__(self):
        for name in ("tracking", "alpha_force", "lambda_reg", "lambda_mod", "w_lin", "w_ang"):
            if getattr(self, name) < 0:
                raise CostError(f"{name} must be >= 0")


def milling_force(tangent, alpha_force: float) -> np.ndarray:
    """Cutting force for a fully engaged tool: alpha_force along the feed."""
    tangent = np.asarray(tangent, dtype=float)
    norm = np.linalg.norm(tangent)
    if norm <= TANGENT_EPSILON:
        raise CostError(f"tangent norm {norm} too small to normalize")
    return (alpha_force / norm) * tangent


def cartesian_compliance(chain: KinematicChain, q, stiffness: StiffnessModel) -> np.ndarray:
    """Translational Cartesian compliance C_t = J_v K^-1 J_v^T (m/N).

    Only moving-joint columns enter; design joints are infinitely stiff and
    contribute nothing.  C_t is symmetric positive semidefinite.
    """
    k = stiffness.for_chain(chain)
    J = kernels.fk_jacobian(chain.packed(), chain._check_q(q))[2]
    Jm = J[:3, chain.moving_indices]
    return (Jm / k) @ Jm.T


def deformation_cost(chain: KinematicChain, q, waypoint: Waypoint,
                     weights: CostWeights, stiffness: StiffnessModel) -> float:
    """Squared static deflection ||C_t(q) F||^2 under the milling force."""
    F = milling_force(waypoint.tangent, weights.alpha_force)
    C = cartesian_compliance(chain, q, stiffness)
    d = C @ F
    return float(d @ d)


def tracking_cost(pose: Pose, waypoint: Waypoint) -> float:
    """Squared position error plus squared tool-axis error."""
    e_p = pose.p - waypoint.position
    e_z = pose.R[:, 2] - waypoint.target_axis
    return float(e_p @ e_p + e_z @ e_z)


def size_regularization(chain: KinematicChain, q_d, lambda_reg: float) -> float:
    """lambda_reg * sum of squared d/a design values on robot-geometry links.

    Placement prismatic joints are excluded: penalizing where the workpiece
    sits would conflate robot size with cell layout.
    """
    q_d = np.asarray(q_d, dtype=float)
    total = 0.0
    for value, idx in zip(q_d, chain.design_indices):
        v = chain.variables[idx]
        if v.param in ("d", "a") and not chain.links[v.link].placement:
            total += value * value
    return lambda_reg * total


def size_regularization_grad(chain: KinematicChain, q_d, lambda_reg: float) -> np.ndarray:
    q_d = np.asarray(q_d, dtype=float)
    grad = np.zeros_like(q_d)
    for row, idx in enumerate(chain.design_indices):
        v = chain.variables[idx]
        if v.param in ("d", "a") and not chain.links[v.link].placement:
            grad[row] = 2.0 * lambda_reg * q_d[row]
    return grad


def _design_groups(chain: KinematicChain):
    """Rows (link, design-row-per-param dict) for links with geometric design
    joints, i.e. the per-DH-transform groups the modular cost acts on."""
    groups = {}
    for row, idx in enumerate(chain.design_indices):
        v = chain.variables[idx]
        if chain.links[v.link].placement:
            continue
        if v.param in ("d", "a", "alpha"):
            groups.setdefault(v.link, {})[v.param] = row
    return sorted(groups.items())


def module_distance(values: dict, module, weights: CostWeights) -> float:
    """Weighted squared distance between one link's (d, a, alpha) and a module."""
    dd = values.get("d", 0.0) - module[0]
    da = values.get("a", 0.0) - module[1]
    dal = values.get("alpha", 0.0) - module[2]
    return weights.w_lin * (dd * dd + da * da) + weights.w_ang * dal * dal


def modular_cost(chain: KinematicChain, q_d, modules, weights: CostWeights) -> float:
    """Product-of-distances attraction cost, summed over design-joint groups.

    For each link i with geometric design joints the term is the product over
    catalog modules of the weighted squared distance; it vanishes exactly
    when the link matches some module.  theta never enters: it is the moving
    variable of module joints.
    """
    cost, _ = _modular_cost_grad(chain, q_d, modules, weights, need_grad=False)
    return cost


def modular_cost_grad(chain: KinematicChain, q_d, modules, weights: CostWeights):
    return _modular_cost_grad(chain, q_d, modules, weights, need_grad=True)


def _modular_cost_grad(chain, q_d, modules, weights, need_grad):
    if len(modules) == 0:
        raise CostError("module catalog is empty")
    mods = np.asarray([[m[0], m[1], m[2]] for m in modules], dtype=float)
    q_d = np.asarray(q_d, dtype=float)
    total = 0.0
    grad = np.zeros_like(q_d) if need_grad else None
    wvec = np.array([weights.w_lin, weights.w_lin, weights.w_ang])
    for link, rows in _design_groups(chain):
        vals = np.array([q_d[rows[p]] if p in rows else
                         getattr(chain.links[link], p) for p in ("d", "a", "alpha")])
        diffs = vals[None, :] - mods                      # (K, 3)
        dists = (wvec[None, :] * diffs * diffs).sum(axis=1)
        prod = float(np.prod(dists))
        total += prod
        if not need_grad:
            continue
        for p in rows:
            col = ("d", "a", "alpha").index(p)
            # d prod / d v = sum_k (prod_{j != k} dists_j) * 2 w diff_k
            dsum = 0.0
            for kmod in range(len(mods)):
                rest = np.prod(np.delete(dists, kmod))
                dsum += rest * 2.0 * wvec[col] * diffs[kmod, col]
            grad[rows[p]] += dsum
    return total, grad


def nearest_module(values: dict, modules, weights: CostWeights) -> tuple:
    """(index, distances) of the catalog module closest to one link's values."""
    dists = [module_distance(values, m, weights) for m in modules]
    best = int(np.argmin(dists))  # argmin takes the lowest index on ties
    return best, dists
