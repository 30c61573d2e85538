# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend; mirrors pybackend exactly (same walk, same
variable-stage recording, same prefix/suffix gradient accumulation)."""

from libc.math cimport cos, sin

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "native"


cdef inline void cross3(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double dot3(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef void _walk(double[:, ::1] vals, const int[::1] var_link, const int[::1] var_param,
                Py_ssize_t n_links, Py_ssize_t n,
                const double[:, ::1] base_R, const double[::1] base_p,
                const double[:, ::1] tool_R, const double[::1] tool_p,
                double[:, ::1] W, double[:, ::1] O,
                double* p_tool, double* R_tool) noexcept nogil:
    cdef double R[9]
    cdef double p[3]
    cdef double x, y, z, ct, st, ca, sa, th, dd, aa, al
    cdef Py_ssize_t li, r, vi = 0

    for r in range(3):
        R[r * 3 + 0] = base_R[r, 0]
        R[r * 3 + 1] = base_R[r, 1]
        R[r * 3 + 2] = base_R[r, 2]
        p[r] = base_p[r]

    for li in range(n_links):
        th = vals[li, 0]
        dd = vals[li, 1]
        aa = vals[li, 2]
        al = vals[li, 3]
        # theta/d joints act about/along the incoming frame z through p
        while vi < n and var_link[vi] == li and var_param[vi] <= 1:
            for r in range(3):
                W[vi, r] = R[r * 3 + 2]
                O[vi, r] = p[r]
            vi += 1
        ct = cos(th)
        st = sin(th)
        for r in range(3):
            x = R[r * 3 + 0]
            y = R[r * 3 + 1]
            R[r * 3 + 0] = ct * x + st * y
            R[r * 3 + 1] = -st * x + ct * y
        # the a joint slides along x after Rot_z(theta)
        if vi < n and var_link[vi] == li and var_param[vi] == 2:
            for r in range(3):
                W[vi, r] = R[r * 3 + 0]
                O[vi, r] = p[r]
            vi += 1
        for r in range(3):
            p[r] += dd * R[r * 3 + 2] + aa * R[r * 3 + 0]
        # the alpha joint rotates about that x through the translated origin
        if vi < n and var_link[vi] == li and var_param[vi] == 3:
            for r in range(3):
                W[vi, r] = R[r * 3 + 0]
                O[vi, r] = p[r]
            vi += 1
        ca = cos(al)
        sa = sin(al)
        for r in range(3):
            y = R[r * 3 + 1]
            z = R[r * 3 + 2]
            R[r * 3 + 1] = ca * y + sa * z
            R[r * 3 + 2] = -sa * y + ca * z

    for r in range(3):
        p_tool[r] = p[r] + R[r * 3] * tool_p[0] + R[r * 3 + 1] * tool_p[1] + R[r * 3 + 2] * tool_p[2]
        R_tool[r * 3 + 0] = R[r * 3] * tool_R[0, 0] + R[r * 3 + 1] * tool_R[1, 0] + R[r * 3 + 2] * tool_R[2, 0]
        R_tool[r * 3 + 1] = R[r * 3] * tool_R[0, 1] + R[r * 3 + 1] * tool_R[1, 1] + R[r * 3 + 2] * tool_R[2, 1]
        R_tool[r * 3 + 2] = R[r * 3] * tool_R[0, 2] + R[r * 3 + 1] * tool_R[1, 2] + R[r * 3 + 2] * tool_R[2, 2]


cdef class _Scratch:
    cdef double[:, ::1] vals
    cdef double[:, ::1] W
    cdef double[:, ::1] O


def _prepare(packed, q):
    vals = packed.params.copy()
    vals[packed.var_link, packed.var_param] = q
    return vals


def fk_pose(packed, q):
    cdef double[:, ::1] vals = _prepare(packed, np.asarray(q, dtype=np.float64))
    cdef cnp.ndarray[double, ndim=2] Wn = np.empty((packed.var_link.shape[0], 3))
    cdef cnp.ndarray[double, ndim=2] On = np.empty_like(Wn)
    cdef double[:, ::1] W = Wn, O = On
    cdef int[::1] var_link = np.ascontiguousarray(packed.var_link)
    cdef int[::1] var_param = np.ascontiguousarray(packed.var_param)
    cdef double p[3]
    cdef double R[9]
    cdef double[:, ::1] base_R = packed.base_R
    cdef double[::1] base_p = packed.base_p
    cdef double[:, ::1] tool_R = packed.tool_R
    cdef double[::1] tool_p = packed.tool_p
    cdef Py_ssize_t n = var_link.shape[0]
    _walk(vals, var_link, var_param,
          packed.params.shape[0], n, base_R, base_p, tool_R, tool_p, W, O, p, R)
    return np.array([p[0], p[1], p[2]]), np.array(
        [[R[0], R[1], R[2]], [R[3], R[4], R[5]], [R[6], R[7], R[8]]])


def fk_jacobian(packed, q):
    p, R = fk_pose(packed, q)
    # re-walk to recover axes/origins; single-pose calls are not hot
    cdef double[:, ::1] vals = _prepare(packed, np.asarray(q, dtype=np.float64))
    n = packed.var_link.shape[0]
    Wn = np.empty((n, 3))
    On = np.empty((n, 3))
    cdef double[:, ::1] W = Wn, O = On
    cdef int[::1] var_link = np.ascontiguousarray(packed.var_link)
    cdef int[::1] var_param = np.ascontiguousarray(packed.var_param)
    cdef double pt[3]
    cdef double Rt[9]
    cdef double[:, ::1] base_R = packed.base_R
    cdef double[::1] base_p = packed.base_p
    cdef double[:, ::1] tool_R = packed.tool_R
    cdef double[::1] tool_p = packed.tool_p
    cdef Py_ssize_t nn = n
    _walk(vals, var_link, var_param,
          packed.params.shape[0], nn, base_R, base_p, tool_R, tool_p, W, O, pt, Rt)
    rot = packed.var_rot.astype(bool)
    J = np.zeros((6, n))
    lin = np.where(rot[:, None], np.cross(Wn, p[None, :] - On), Wn)
    J[:3] = lin.T
    J[3:, rot] = Wn[rot].T
    return p, R, J


def batch_eval(packed, states, qd, st, sz, force, kinv, wt, wd, bint need_grad):
    cdef cnp.ndarray[double, ndim=2] states_ = np.ascontiguousarray(states, dtype=np.float64)
    cdef double[:, ::1] st_ = np.ascontiguousarray(st, dtype=np.float64)
    cdef double[:, ::1] sz_ = np.ascontiguousarray(sz, dtype=np.float64)
    cdef double[:, ::1] force_ = np.ascontiguousarray(force, dtype=np.float64)
    cdef double[::1] qd_ = np.ascontiguousarray(qd, dtype=np.float64)
    cdef double[::1] kinv_ = np.ascontiguousarray(kinv, dtype=np.float64)
    cdef double[::1] wt_ = np.ascontiguousarray(wt, dtype=np.float64)
    cdef double[::1] wd_ = np.ascontiguousarray(wd, dtype=np.float64)

    cdef double[:, ::1] vals = packed.params.copy()
    cdef int[::1] var_link = np.ascontiguousarray(packed.var_link)
    cdef int[::1] var_param = np.ascontiguousarray(packed.var_param)
    cdef cnp.uint8_t[::1] var_rot = np.ascontiguousarray(packed.var_rot)
    cdef long long[::1] moving = np.ascontiguousarray(packed.moving_idx, dtype=np.int64)
    cdef long long[::1] design = np.ascontiguousarray(packed.design_idx, dtype=np.int64)
    cdef double[:, ::1] base_R = packed.base_R
    cdef double[::1] base_p = packed.base_p
    cdef double[:, ::1] tool_R = packed.tool_R
    cdef double[::1] tool_p = packed.tool_p

    cdef Py_ssize_t n_links = packed.params.shape[0]
    cdef Py_ssize_t n = var_link.shape[0]
    cdef Py_ssize_t n_m = moving.shape[0]
    cdef Py_ssize_t n_d = design.shape[0]
    cdef Py_ssize_t N = states_.shape[0]

    # first moving slot strictly past each variable (for prefix/suffix sums)
    cdef long long[::1] t_after = np.searchsorted(
        packed.moving_idx, np.arange(n), side="right").astype(np.int64)

    cdef cnp.ndarray[double, ndim=1] Lt_out = np.empty(N)
    cdef cnp.ndarray[double, ndim=1] Ld_out = np.empty(N)
    cdef double[::1] Lt = Lt_out, Ld = Ld_out
    gx_out = np.empty((N, n_m)) if need_grad else None
    gd_out = np.zeros(n_d) if need_grad else None
    cdef double[:, ::1] gx = gx_out if need_grad else np.empty((1, 1))
    cdef double[::1] gd = gd_out if need_grad else np.empty(1)

    cdef double[::1] q = np.empty(n)
    cdef double[:, ::1] W = np.empty((n, 3))
    cdef double[:, ::1] O = np.empty((n, 3))
    cdef double[:, ::1] Jv = np.empty((n, 3))
    cdef double[:, ::1] g = np.empty((max(n_m, 1), 3))
    cdef double[::1] b = np.empty(max(n_m, 1))
    cdef double[:, ::1] suff = np.zeros((n_m + 1, 3))
    cdef double[:, ::1] pref = np.zeros((n_m + 1, 3))

    cdef double p_tool[3]
    cdef double R_tool[9]
    cdef double e_p[3]
    cdef double e_z[3]
    cdef double pz[3]
    cdef double y[3]
    cdef double cz[3]
    cdef double rx[3]
    cdef double tmp[3]
    cdef double lt, ld, bj, z2j, acc, tot, wtk, wdk
    cdef Py_ssize_t k, i, j, r, mi, ta

    with nogil:
        for k in range(N):
            for j in range(n_m):
                q[moving[j]] = states_[k, j]
            for j in range(n_d):
                q[design[j]] = qd_[j]
            for i in range(n):
                vals[var_link[i], var_param[i]] = q[i]
            _walk(vals, var_link, var_param,
                  n_links, n, base_R, base_p, tool_R, tool_p, W, O, p_tool, R_tool)

            for i in range(n):
                if var_rot[i]:
                    for r in range(3):
                        rx[r] = p_tool[r] - O[i, r]
                    cross3(&W[i, 0], rx, &Jv[i, 0])
                else:
                    for r in range(3):
                        Jv[i, r] = W[i, r]

            for r in range(3):
                e_p[r] = p_tool[r] - st_[k, r]
                pz[r] = R_tool[r * 3 + 2]
                e_z[r] = pz[r] - sz_[k, r]
            lt = dot3(e_p, e_p) + dot3(e_z, e_z)
            Lt[k] = lt

            ld = 0.0
            y[0] = y[1] = y[2] = 0.0
            for j in range(n_m):
                mi = moving[j]
                b[j] = kinv_[j] * dot3(&Jv[mi, 0], &force_[k, 0])
                for r in range(3):
                    y[r] += b[j] * Jv[mi, r]
            Ld[k] = dot3(y, y)

            if not need_grad:
                continue

            cross3(pz, e_z, cz)
            wtk = wt_[k]
            wdk = wd_[k]

            for j in range(n_m):
                mi = moving[j]
                z2j = kinv_[j] * dot3(&Jv[mi, 0], y)
                for r in range(3):
                    g[j, r] = 2.0 * (b[j] * y[r] + z2j * force_[k, r])
            for r in range(3):
                suff[n_m, r] = 0.0
            for j in range(n_m - 1, -1, -1):
                mi = moving[j]
                cross3(&Jv[mi, 0], &g[j, 0], tmp)
                for r in range(3):
                    suff[j, r] = suff[j + 1, r] + tmp[r]
            for j in range(n_m):
                mi = moving[j]
                if var_rot[mi]:
                    cross3(&g[j, 0], &W[mi, 0], tmp)
                else:
                    tmp[0] = tmp[1] = tmp[2] = 0.0
                for r in range(3):
                    pref[j + 1, r] = pref[j, r] + tmp[r]

            # write out the combined per-variable gradient into the moving
            # and design slots (tracking + deformation, prefix/suffix sums)
            for j in range(n_m):
                i = moving[j]
                ta = t_after[i]
                acc = 2.0 * dot3(&Jv[i, 0], e_p)
                if var_rot[i]:
                    acc += 2.0 * dot3(&W[i, 0], cz)
                tot = wtk * acc
                acc = dot3(&Jv[i, 0], &pref[ta, 0])
                if var_rot[i]:
                    acc += dot3(&W[i, 0], &suff[ta, 0])
                gx[k, j] = tot + wdk * acc
            for j in range(n_d):
                i = design[j]
                ta = t_after[i]
                acc = 2.0 * dot3(&Jv[i, 0], e_p)
                if var_rot[i]:
                    acc += 2.0 * dot3(&W[i, 0], cz)
                tot = wtk * acc
                acc = dot3(&Jv[i, 0], &pref[ta, 0])
                if var_rot[i]:
                    acc += dot3(&W[i, 0], &suff[ta, 0])
                gd[j] += tot + wdk * acc

    return Lt_out, Ld_out, gx_out, gd_out
