"""Numba kernels: finite-volume assembly, ILU(0), sparse utilities.

Local residual layout per vertex block: even slot = salt balance, odd
slot = liquid balance, matching the (c, p) dof order.  Local Jacobians
come from one-sided finite differences of the local residuals with
perturbation sqrt(machine eps) * max(|u|, 1).
"""
from __future__ import annotations

import numpy as np
from numba import njit

SQRT_EPS = np.sqrt(np.finfo(np.float64).eps)


# ---------------------------------------------------------------------------
# bulk cells (triangles k=3, quadrilaterals k=4); one sub-face per local edge
# ---------------------------------------------------------------------------

@njit(cache=True)
def _cell_local_res(k, c, p, c_old, normals, grads, face_a, face_b, subarea,
                    phi_v, phi_face, k_face, inv_tau, rho0, drho, gx, gy,
                    mu_inv, d0, out):
    for j in range(2 * k):
        out[j] = 0.0
    for j in range(k):
        rho_n = rho0 + drho * c[j]
        rho_o = rho0 + drho * c_old[j]
        box = subarea[j] * phi_v[j] * inv_tau
        out[2 * j + 1] += box * (rho_n - rho_o)
        out[2 * j] += box * (rho_n * c[j] - rho_o * c_old[j])
    for f in range(k):
        a = face_a[f]
        b = face_b[f]
        gpx = 0.0
        gpy = 0.0
        gcx = 0.0
        gcy = 0.0
        for j in range(k):
            gpx += grads[f, j, 0] * p[j]
            gpy += grads[f, j, 1] * p[j]
            gcx += grads[f, j, 0] * c[j]
            gcy += grads[f, j, 1] * c[j]
        rho_f = rho0 + drho * 0.5 * (c[a] + c[b])
        qn = -k_face[f] * mu_inv * ((gpx - rho_f * gx) * normals[f, 0]
                                    + (gpy - rho_f * gy) * normals[f, 1])
        cup = c[a] if qn >= 0.0 else c[b]
        f_liq = rho_f * qn
        f_salt = rho_f * cup * qn \
            - rho_f * phi_face[f] * d0 * (gcx * normals[f, 0] + gcy * normals[f, 1])
        out[2 * a + 1] += f_liq
        out[2 * b + 1] -= f_liq
        out[2 * a] += f_salt
        out[2 * b] -= f_salt


@njit(cache=True)
def cell_batch(cl, pl, cl_old, normals, grads, face_a, face_b, subarea,
               phi_v, phi_face, k_face, inv_tau, rho0, drho, gx, gy,
               mu_inv, d0, out_res, out_jac, want_jac):
    n_el, k = cl.shape
    c = np.empty(k)
    p = np.empty(k)
    co = np.empty(k)
    base = np.empty(2 * k)
    pert = np.empty(2 * k)
    for e in range(n_el):
        for j in range(k):
            c[j] = cl[e, j]
            p[j] = pl[e, j]
            co[j] = cl_old[e, j]
        _cell_local_res(k, c, p, co, normals[e], grads[e], face_a, face_b,
                        subarea[e], phi_v[e], phi_face[e], k_face[e],
                        inv_tau, rho0, drho, gx, gy, mu_inv, d0, base)
        for j in range(2 * k):
            out_res[e, j] = base[j]
        if want_jac:
            for s in range(2 * k):
                jv = s // 2
                if s % 2 == 1:
                    old = p[jv]
                    delta = SQRT_EPS * max(abs(old), 1.0)
                    p[jv] = old + delta
                else:
                    old = c[jv]
                    delta = SQRT_EPS * max(abs(old), 1.0)
                    c[jv] = old + delta
                _cell_local_res(k, c, p, co, normals[e], grads[e], face_a,
                                face_b, subarea[e], phi_v[e], phi_face[e],
                                k_face[e], inv_tau, rho0, drho, gx, gy,
                                mu_inv, d0, pert)
                inv_delta = 1.0 / delta
                for r in range(2 * k):
                    out_jac[e, r, s] = (pert[r] - base[r]) * inv_delta
                if s % 2 == 1:
                    p[jv] = old
                else:
                    c[jv] = old


# ---------------------------------------------------------------------------
# 1D fracture edges: locals (c_a, p_a, c_b, p_b)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _frac_local_res(c_a, p_a, c_b, p_b, ca_old, cb_old, length, g_t, eps,
                    phi_fr, k_fr, d_fr, inv_tau, rho0, drho, mu_inv, out):
    for j in range(4):
        out[j] = 0.0
    half = 0.5 * length * phi_fr * eps * inv_tau
    rho_an = rho0 + drho * c_a
    rho_ao = rho0 + drho * ca_old
    rho_bn = rho0 + drho * c_b
    rho_bo = rho0 + drho * cb_old
    out[1] += half * (rho_an - rho_ao)
    out[0] += half * (rho_an * c_a - rho_ao * ca_old)
    out[3] += half * (rho_bn - rho_bo)
    out[2] += half * (rho_bn * c_b - rho_bo * cb_old)

    dpds = (p_b - p_a) / length
    rho_f = rho0 + drho * 0.5 * (c_a + c_b)
    u = -k_fr * mu_inv * (dpds - rho_f * g_t)
    cup = c_a if u >= 0.0 else c_b
    f_liq = eps * rho_f * u
    f_salt = eps * rho_f * cup * u - eps * rho_f * d_fr * (c_b - c_a) / length
    out[1] += f_liq
    out[3] -= f_liq
    out[0] += f_salt
    out[2] -= f_salt


@njit(cache=True)
def frac_batch(cl, pl, cl_old, lengths, g_t, eps, phi_fr, k_fr, d_fr,
               inv_tau, rho0, drho, mu_inv, out_res, out_jac, want_jac):
    n_edge = cl.shape[0]
    base = np.empty(4)
    pert = np.empty(4)
    u = np.empty(4)
    for e in range(n_edge):
        u[0] = cl[e, 0]
        u[1] = pl[e, 0]
        u[2] = cl[e, 1]
        u[3] = pl[e, 1]
        _frac_local_res(u[0], u[1], u[2], u[3], cl_old[e, 0], cl_old[e, 1],
                        lengths[e], g_t[e], eps, phi_fr, k_fr, d_fr,
                        inv_tau, rho0, drho, mu_inv, base)
        for j in range(4):
            out_res[e, j] = base[j]
        if want_jac:
            for s in range(4):
                old = u[s]
                delta = SQRT_EPS * max(abs(old), 1.0)
                u[s] = old + delta
                _frac_local_res(u[0], u[1], u[2], u[3], cl_old[e, 0],
                                cl_old[e, 1], lengths[e], g_t[e], eps,
                                phi_fr, k_fr, d_fr, inv_tau, rho0, drho,
                                mu_inv, pert)
                inv_delta = 1.0 / delta
                for r in range(4):
                    out_jac[e, r, s] = (pert[r] - base[r]) * inv_delta
                u[s] = old


# ---------------------------------------------------------------------------
# fracture-bulk exchange: locals (c1, p1, c2, p2, c_f, p_f) per vertex
# ---------------------------------------------------------------------------

@njit(cache=True)
def _exch_local_res(u, area, n1x, n1y, k_fn, d_fn, eps, use_grav,
                    rho0, drho, gx, gy, mu_inv, out):
    for j in range(6):
        out[j] = 0.0
    c_f = u[4]
    p_f = u[5]
    rho_f = rho0 + drho * c_f
    half_eps = 0.5 * eps
    for side in range(2):
        c_m = u[2 * side]
        p_m = u[2 * side + 1]
        nx = n1x if side == 0 else -n1x
        ny = n1y if side == 0 else -n1y
        rho_m = rho0 + drho * c_m
        grav = (rho_m - rho_f) * (gx * nx + gy * ny) * use_grav
        q_fn = -k_fn * mu_inv * ((p_m - p_f) / half_eps - grav)
        big_q = rho_m * q_fn
        cup = c_m if q_fn < 0.0 else c_f
        big_p = rho_m * cup * q_fn - rho_m * d_fn * (c_m - c_f) / half_eps
        out[5] += area * big_q
        out[4] += area * big_p
        out[2 * side + 1] -= area * big_q
        out[2 * side] -= area * big_p


@njit(cache=True)
def exch_batch(locals_, locals_old_unused, areas, n1, k_fn, d_fn, eps,
               use_grav, rho0, drho, gx, gy, mu_inv, out_res, out_jac,
               want_jac):
    n_vert = locals_.shape[0]
    base = np.empty(6)
    pert = np.empty(6)
    u = np.empty(6)
    for v in range(n_vert):
        for j in range(6):
            u[j] = locals_[v, j]
        _exch_local_res(u, areas[v], n1[v, 0], n1[v, 1], k_fn[v], d_fn[v],
                        eps, use_grav, rho0, drho, gx, gy, mu_inv, base)
        for j in range(6):
            out_res[v, j] = base[j]
        if want_jac:
            for s in range(6):
                old = u[s]
                delta = SQRT_EPS * max(abs(old), 1.0)
                u[s] = old + delta
                _exch_local_res(u, areas[v], n1[v, 0], n1[v, 1], k_fn[v],
                                d_fn[v], eps, use_grav, rho0, drho, gx, gy,
                                mu_inv, pert)
                inv_delta = 1.0 / delta
                for r in range(6):
                    out_jac[v, r, s] = (pert[r] - base[r]) * inv_delta
                u[s] = old


# ---------------------------------------------------------------------------
# sparse utilities
# ---------------------------------------------------------------------------

@njit(cache=True)
def scatter_add(out, idx, vals):
    for i in range(len(idx)):
        out[idx[i]] += vals[i]


@njit(cache=True)
def ilu0_factor(indptr, indices, data, diag_pos):
    """In-place ILU(0) on a CSR matrix with sorted column indices.

    Returns -1 on success, else the row of the first zero pivot.
    """
    n = len(indptr) - 1
    for i in range(n):
        for ii in range(indptr[i], indptr[i + 1]):
            k = indices[ii]
            if k >= i:
                break
            piv = data[diag_pos[k]]
            if piv == 0.0:
                return k
            lik = data[ii] / piv
            data[ii] = lik
            for kk in range(diag_pos[k] + 1, indptr[k + 1]):
                col = indices[kk]
                lo = ii + 1
                hi = indptr[i + 1]
                while lo < hi:
                    mid = (lo + hi) // 2
                    if indices[mid] < col:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo < indptr[i + 1] and indices[lo] == col:
                    data[lo] -= lik * data[kk]
    for i in range(n):
        if data[diag_pos[i]] == 0.0:
            return i
    return -1


@njit(cache=True)
def ilu0_solve(indptr, indices, data, diag_pos, b, out):
    """Forward/backward substitution with the in-place ILU(0) factors."""
    n = len(indptr) - 1
    for i in range(n):
        s = b[i]
        for ii in range(indptr[i], indptr[i + 1]):
            j = indices[ii]
            if j >= i:
                break
            s -= data[ii] * out[j]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for ii in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[ii] * out[indices[ii]]
        out[i] = s / data[diag_pos[i]]
