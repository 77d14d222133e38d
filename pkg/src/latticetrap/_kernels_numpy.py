"""Pure-numpy fallback kernels, semantically identical to `_kernels_numba`.

Grid sweeps are vectorized (red-black coloring makes the simultaneous color
update equal to the sequential one); the trajectory loop is a plain Python
loop and is only meant as a correctness fallback.
"""

import math

import numpy as np

NAME = "numpy"


def _shifted(u, axis, step):
    """View of u shifted by one node with mirror ghosts at the domain edges."""
    out = np.empty_like(u)
    src = [slice(None)] * u.ndim
    dst = [slice(None)] * u.ndim
    if step == 1:
        dst[axis] = slice(0, -1)
        src[axis] = slice(1, None)
        out[tuple(dst)] = u[tuple(src)]
        dst[axis] = -1
        src[axis] = -2
        out[tuple(dst)] = u[tuple(src)]
    else:
        dst[axis] = slice(1, None)
        src[axis] = slice(0, -1)
        out[tuple(dst)] = u[tuple(src)]
        dst[axis] = 0
        src[axis] = 1
        out[tuple(dst)] = u[tuple(src)]
    return out


def _neighbour_sum(u):
    return (((_shifted(u, 0, -1) + _shifted(u, 0, 1))
             + (_shifted(u, 1, -1) + _shifted(u, 1, 1)))
            + (_shifted(u, 2, -1) + _shifted(u, 2, 1)))


def _parity(shape):
    nx, ny, nz = shape
    return (np.arange(nx)[:, None, None] + np.arange(ny)[None, :, None]
            + np.arange(nz)[None, None, :]) & 1


def gs_color(u, f, free, h2, color, omega):
    s = _neighbour_sum(u)
    unew = (s - h2 * f) / 6.0
    mask = (free != 0) & (_parity(u.shape) == color)
    u[mask] += omega * (unew[mask] - u[mask])


def residual(u, f, free, h2, r):
    s = _neighbour_sum(u)
    np.copyto(r, f - (s - 6.0 * u) / h2)
    r[free == 0] = 0.0
    return float(np.max(np.abs(r))) if r.size else 0.0


def restrict_full_weight(rf, rc):
    ncx, ncy, ncz = rc.shape
    rp = np.pad(rf, 1)
    rc[...] = 0.0
    for di in (-1, 0, 1):
        wi = 0.5 if di == 0 else 0.25
        for dj in (-1, 0, 1):
            wj = 0.5 if dj == 0 else 0.25
            for dk in (-1, 0, 1):
                wk = 0.5 if dk == 0 else 0.25
                block = rp[1 + di: 1 + di + 2 * ncx: 2,
                           1 + dj: 1 + dj + 2 * ncy: 2,
                           1 + dk: 1 + dk + 2 * ncz: 2]
                rc += (wi * wj * wk) * block


def prolong_add(ec, uf, free):
    nx, ny, nz = uf.shape
    ncx, ncy, ncz = ec.shape

    def axis_terms(n, nc):
        idx = np.arange(n)
        lo = idx >> 1
        t = idx & 1
        hi = np.minimum(lo + 1, nc - 1)
        return lo, hi, 1.0 - 0.5 * t, 0.5 * t

    ix0, ix1, wx0, wx1 = axis_terms(nx, ncx)
    iy0, iy1, wy0, wy1 = axis_terms(ny, ncy)
    iz0, iz1, wz0, wz1 = axis_terms(nz, ncz)
    X0 = ix0[:, None, None]
    X1 = ix1[:, None, None]
    Y0 = iy0[None, :, None]
    Y1 = iy1[None, :, None]
    Z0 = iz0[None, None, :]
    Z1 = iz1[None, None, :]
    WX0 = wx0[:, None, None]
    WX1 = wx1[:, None, None]
    WY0 = wy0[None, :, None]
    WY1 = wy1[None, :, None]
    WZ0 = wz0[None, None, :]
    WZ1 = wz1[None, None, :]
    val = (WX0 * WY0 * WZ0 * ec[X0, Y0, Z0]
           + WX1 * WY0 * WZ0 * ec[X1, Y0, Z0]
           + WX0 * WY1 * WZ0 * ec[X0, Y1, Z0]
           + WX1 * WY1 * WZ0 * ec[X1, Y1, Z0]
           + WX0 * WY0 * WZ1 * ec[X0, Y0, Z1]
           + WX1 * WY0 * WZ1 * ec[X1, Y0, Z1]
           + WX0 * WY1 * WZ1 * ec[X0, Y1, Z1]
           + WX1 * WY1 * WZ1 * ec[X1, Y1, Z1])
    m = free != 0
    uf[m] += val[m]


# ---------------------------------------------------------------------------
# tricubic B-spline evaluation

def _mirror_indices(idx, n):
    if n == 1:
        return np.zeros_like(idx)
    p = 2 * (n - 1)
    idx = np.mod(idx, p)
    return np.where(idx >= n, p - idx, idx)


def _bspline_weights(t):
    t2 = t * t
    t3 = t2 * t
    return np.stack([(1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0,
                     (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0,
                     (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0,
                     t3 / 6.0], axis=-1)


def _bspline_dweights(t):
    t2 = t * t
    return np.stack([-0.5 * (1.0 - t) ** 2,
                     0.5 * (3.0 * t2 - 4.0 * t),
                     0.5 * (-3.0 * t2 + 2.0 * t + 1.0),
                     0.5 * t2], axis=-1)


def bspline_eval3(coef, gx, gy, gz):
    gx = np.atleast_1d(np.asarray(gx, dtype=float))
    gy = np.atleast_1d(np.asarray(gy, dtype=float))
    gz = np.atleast_1d(np.asarray(gz, dtype=float))
    nx, ny, nz = coef.shape
    fx = np.floor(gx).astype(np.int64)
    fy = np.floor(gy).astype(np.int64)
    fz = np.floor(gz).astype(np.int64)
    wx = _bspline_weights(gx - fx)
    wy = _bspline_weights(gy - fy)
    wz = _bspline_weights(gz - fz)
    ix = np.stack([_mirror_indices(fx - 1 + a, nx) for a in range(4)], axis=-1)
    iy = np.stack([_mirror_indices(fy - 1 + b, ny) for b in range(4)], axis=-1)
    iz = np.stack([_mirror_indices(fz - 1 + c, nz) for c in range(4)], axis=-1)
    out = np.zeros(gx.shape)
    for a in range(4):
        for b in range(4):
            wab = wx[:, a] * wy[:, b]
            for c in range(4):
                out += wab * wz[:, c] * coef[ix[:, a], iy[:, b], iz[:, c]]
    return out


def _bspline_scalar(coef, gx, gy, gz):
    return float(bspline_eval3(coef, np.array([gx]), np.array([gy]), np.array([gz]))[0])


# ---------------------------------------------------------------------------
# trajectory integration (Python-loop fallback)

def integrate_rf_analytic(x0, v0, qm_v, r1, alpha, gamma, omega_drive,
                          az_static, a_tickle, w_tickle, dt, nsteps, stride,
                          escape_r2, out_t, out_x, out_v):
    x, y, z = float(x0[0]), float(x0[1]), float(x0[2])
    vx, vy, vz = float(v0[0]), float(v0[1]), float(v0[2])
    t = 0.0
    inv_r12 = 1.0 / (r1 * r1)
    c_drag_m = 1.0 - 0.5 * gamma * dt
    c_drag_p = 1.0 / (1.0 + 0.5 * gamma * dt)
    nrec = 0
    out_t[nrec] = t
    out_x[nrec] = (x, y, z)
    out_v[nrec] = (vx, vy, vz)
    nrec += 1
    escape_step = -1
    for n in range(nsteps):
        th = t + 0.5 * dt
        xh = x + 0.5 * dt * vx
        yh = y + 0.5 * dt * vy
        zh = z + 0.5 * dt * vz
        rf = math.cos(omega_drive * th)
        lin = 1.0 - 3.0 * alpha * zh / r1
        ex = -2.0 * xh * inv_r12 * lin
        ey = -2.0 * yh * inv_r12 * lin
        ez = 4.0 * zh * inv_r12 \
            - alpha * (6.0 * zh * zh - 3.0 * (xh * xh + yh * yh)) * inv_r12 / r1
        ax = qm_v * rf * ex
        ay = qm_v * rf * ey
        az = qm_v * rf * ez + az_static + a_tickle * math.cos(w_tickle * th)
        vx = (vx * c_drag_m + dt * ax) * c_drag_p
        vy = (vy * c_drag_m + dt * ay) * c_drag_p
        vz = (vz * c_drag_m + dt * az) * c_drag_p
        x = xh + 0.5 * dt * vx
        y = yh + 0.5 * dt * vy
        z = zh + 0.5 * dt * vz
        t = (n + 1) * dt
        if (n + 1) % stride == 0:
            out_t[nrec] = t
            out_x[nrec] = (x, y, z)
            out_v[nrec] = (vx, vy, vz)
            nrec += 1
        if x * x + y * y + z * z > escape_r2:
            escape_step = n + 1
            break
    return nrec, escape_step


def integrate_rf_bspline(x0, v0, qm_v, cex, cey, cez, origin, inv_h, gamma,
                         omega_drive, az_static, a_tickle, w_tickle, dt,
                         nsteps, stride, guard, out_t, out_x, out_v):
    x, y, z = float(x0[0]), float(x0[1]), float(x0[2])
    vx, vy, vz = float(v0[0]), float(v0[1]), float(v0[2])
    t = 0.0
    nx, ny, nz = cex.shape
    c_drag_m = 1.0 - 0.5 * gamma * dt
    c_drag_p = 1.0 / (1.0 + 0.5 * gamma * dt)
    nrec = 0
    out_t[nrec] = t
    out_x[nrec] = (x, y, z)
    out_v[nrec] = (vx, vy, vz)
    nrec += 1
    escape_step = -1
    for n in range(nsteps):
        th = t + 0.5 * dt
        xh = x + 0.5 * dt * vx
        yh = y + 0.5 * dt * vy
        zh = z + 0.5 * dt * vz
        gx = (xh - origin[0]) * inv_h[0]
        gy = (yh - origin[1]) * inv_h[1]
        gz = (zh - origin[2]) * inv_h[2]
        if (gx < guard or gx > nx - 1 - guard or gy < guard
                or gy > ny - 1 - guard or gz < guard or gz > nz - 1 - guard):
            escape_step = n + 1
            break
        rf = math.cos(omega_drive * th)
        ex = _bspline_scalar(cex, gx, gy, gz)
        ey = _bspline_scalar(cey, gx, gy, gz)
        ez = _bspline_scalar(cez, gx, gy, gz)
        ax = qm_v * rf * ex
        ay = qm_v * rf * ey
        az = qm_v * rf * ez + az_static + a_tickle * math.cos(w_tickle * th)
        vx = (vx * c_drag_m + dt * ax) * c_drag_p
        vy = (vy * c_drag_m + dt * ay) * c_drag_p
        vz = (vz * c_drag_m + dt * az) * c_drag_p
        x = xh + 0.5 * dt * vx
        y = yh + 0.5 * dt * vy
        z = zh + 0.5 * dt * vz
        t = (n + 1) * dt
        if (n + 1) % stride == 0:
            out_t[nrec] = t
            out_x[nrec] = (x, y, z)
            out_v[nrec] = (vx, vy, vz)
            nrec += 1
    return nrec, escape_step
