"""Pure-numpy kernel backend; the reference the compiled kernels must match.

The chain walk composes R/p incrementally and records, for every variable,
the axis and an on-axis origin of the equivalent 1-DOF joint:

  theta: rotation about the frame z before the link transform
  d:     translation along that same z
  a:     translation along x after Rot_z(theta)
  alpha: rotation about that x, through the post-translation origin

Jacobian columns follow the standard twist form.  The deformation-cost
gradient needs d(column)/d(variable); with on-axis origins attached rigidly
to the chain these reduce to

  i upstream of j, i rotational:  d c_j / d x_i = w_i x c_j
  i upstream of j, i translational: 0
  i == j or downstream, j rotational: w_j x Jv_i   (0 for j translational)

which allows O(n) accumulation by prefix/suffix sums.
"""

import numpy as np

NAME = "python"


def _walk(packed, q):
    """Compose the chain; return tool p, R and per-variable axes/origins."""
    params = packed.params
    var_link = packed.var_link
    var_param = packed.var_param
    n = var_link.shape[0]
    vals = params.copy()
    vals[var_link, var_param] = q

    R = packed.base_R.copy()
    p = packed.base_p.copy()
    W = np.empty((n, 3))
    O = np.empty((n, 3))

    vi = 0
    for li in range(params.shape[0]):
        theta, d, a, alpha = vals[li]
        # theta and d act about/along the incoming frame z
        while vi < n and var_link[vi] == li and var_param[vi] <= 1:
            W[vi] = R[:, 2]
            O[vi] = p
            vi += 1
        ct, st = np.cos(theta), np.sin(theta)
        x_new = ct * R[:, 0] + st * R[:, 1]
        y_new = -st * R[:, 0] + ct * R[:, 1]
        R = np.column_stack((x_new, y_new, R[:, 2]))
        if vi < n and var_link[vi] == li and var_param[vi] == 2:
            W[vi] = R[:, 0]
            O[vi] = p
            vi += 1
        p = p + d * R[:, 2] + a * R[:, 0]
        if vi < n and var_link[vi] == li and var_param[vi] == 3:
            W[vi] = R[:, 0]
            O[vi] = p
            vi += 1
        ca, sa = np.cos(alpha), np.sin(alpha)
        y_new = ca * R[:, 1] + sa * R[:, 2]
        z_new = -sa * R[:, 1] + ca * R[:, 2]
        R = np.column_stack((R[:, 0], y_new, z_new))

    p_tool = p + R @ packed.tool_p
    R_tool = R @ packed.tool_R
    return p_tool, R_tool, W, O


def fk_pose(packed, q):
    p, R, _, _ = _walk(packed, q)
    return p, R


def fk_jacobian(packed, q):
    """Returns (p, R, J) with J of shape (6, n): linear rows then angular."""
    p, R, W, O = _walk(packed, q)
    rot = packed.var_rot.astype(bool)
    n = W.shape[0]
    J = np.zeros((6, n))
    lin = np.where(rot[:, None], np.cross(W, p[None, :] - O), W)
    J[:3] = lin.T
    J[3:, rot] = W[rot].T
    return p, R, J


def batch_eval(packed, states, qd, st, sz, force, kinv, wt, wd, need_grad):
    """Tracking/deformation costs and gradients over a batch of waypoints.

    states: (N, n_moving) moving-joint values per waypoint
    qd: (n_design,) shared design values
    st, sz, force: (N, 3) targets and milling force per waypoint
    kinv: (n_moving,) inverse joint stiffnesses
    wt, wd: (N,) accumulation weights for the tracking / deformation gradients

    Returns (Lt, Ld, gx, gd): per-waypoint cost terms, the (N, n_moving)
    state gradient of sum_k wt_k Lt_k + wd_k Ld_k, and its (n_design,)
    design gradient.  gx/gd are None when need_grad is false.
    """
    moving = packed.moving_idx
    design = packed.design_idx
    rot = packed.var_rot.astype(bool)
    n = packed.var_link.shape[0]
    n_m = moving.shape[0]
    N = states.shape[0]

    # first moving position strictly greater than each variable index
    t_after = np.searchsorted(moving, np.arange(n), side="right")
    rot_m = rot[moving]

    q = np.empty(n)
    Lt = np.empty(N)
    Ld = np.empty(N)
    gx = np.empty((N, n_m)) if need_grad else None
    gd = np.zeros(design.shape[0]) if need_grad else None

    for k in range(N):
        q[moving] = states[k]
        q[design] = qd
        p, R, W, O = _walk(packed, q)

        jv = np.where(rot[:, None], np.cross(W, p[None, :] - O), W)  # (n, 3)
        e_p = p - st[k]
        pz = R[:, 2]
        e_z = pz - sz[k]
        Lt[k] = e_p @ e_p + e_z @ e_z

        jm = jv[moving]  # rows are the moving linear columns
        f = force[k]
        b = kinv * (jm @ f)
        y = jm.T @ b  # Cartesian deflection C(q) F
        Ld[k] = y @ y

        if not need_grad:
            continue

        g_lt = 2.0 * (jv @ e_p)
        g_lt[rot] += 2.0 * (W[rot] @ np.cross(pz, e_z))

        z2 = kinv * (jm @ y)
        g = 2.0 * (b[:, None] * y[None, :] + z2[:, None] * f[None, :])  # (n_m, 3)
        cxg = np.cross(jm, g)
        gxw = np.where(rot_m[:, None], np.cross(g, W[moving]), 0.0)
        suff = np.zeros((n_m + 1, 3))
        suff[:n_m] = np.cumsum(cxg[::-1], axis=0)[::-1]
        pref = np.zeros((n_m + 1, 3))
        pref[1:] = np.cumsum(gxw, axis=0)
        g_ld = np.einsum("ij,ij->i", jv, pref[t_after])
        g_ld[rot] += np.einsum("ij,ij->i", W[rot], suff[t_after[rot]])

        total = wt[k] * g_lt + wd[k] * g_ld
        gx[k] = total[moving]
        gd += total[design]

    return Lt, Ld, gx, gd
