"""numba implementations of the hot kernels.

Semantics are defined here and mirrored exactly by `_kernels_numpy`:
grids are (nx, ny, nz) float64 arrays; free nodes have free == 1; domain
edges use mirror ghosts (so an unmasked boundary node behaves as a
zero-normal-derivative node). All Laplacians are the 7-point stencil of
``lap u = (sum of 6 neighbours - 6 u) / h^2``.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def gs_color(u, f, free, h2, color, omega):
    """One red-black Gauss-Seidel / SOR half-sweep of nabla^2 u = f."""
    nx, ny, nz = u.shape
    for i in range(nx):
        im = i - 1 if i > 0 else (1 if nx > 1 else 0)
        ip = i + 1 if i < nx - 1 else nx - 2
        for j in range(ny):
            jm = j - 1 if j > 0 else (1 if ny > 1 else 0)
            jp = j + 1 if j < ny - 1 else ny - 2
            kstart = (i + j + color) & 1
            for k in range(kstart, nz, 2):
                if free[i, j, k] == 0:
                    continue
                km = k - 1 if k > 0 else (1 if nz > 1 else 0)
                kp = k + 1 if k < nz - 1 else nz - 2
                s = ((u[im, j, k] + u[ip, j, k])
                     + (u[i, jm, k] + u[i, jp, k])) \
                    + (u[i, j, km] + u[i, j, kp])
                unew = (s - h2 * f[i, j, k]) / 6.0
                u[i, j, k] = u[i, j, k] + omega * (unew - u[i, j, k])


@njit(cache=True)
def residual(u, f, free, h2, r):
    """Fill r = f - lap(u) on free nodes (0 elsewhere); return max |r|."""
    nx, ny, nz = u.shape
    rmax = 0.0
    for i in range(nx):
        im = i - 1 if i > 0 else (1 if nx > 1 else 0)
        ip = i + 1 if i < nx - 1 else nx - 2
        for j in range(ny):
            jm = j - 1 if j > 0 else (1 if ny > 1 else 0)
            jp = j + 1 if j < ny - 1 else ny - 2
            for k in range(nz):
                if free[i, j, k] == 0:
                    r[i, j, k] = 0.0
                    continue
                km = k - 1 if k > 0 else (1 if nz > 1 else 0)
                kp = k + 1 if k < nz - 1 else nz - 2
                s = ((u[im, j, k] + u[ip, j, k])
                     + (u[i, jm, k] + u[i, jp, k])) \
                    + (u[i, j, km] + u[i, j, kp])
                rv = f[i, j, k] - (s - 6.0 * u[i, j, k]) / h2
                r[i, j, k] = rv
                if rv < 0.0:
                    rv = -rv
                if rv > rmax:
                    rmax = rv
    return rmax


@njit(cache=True)
def restrict_full_weight(rf, rc):
    """27-point full-weighting restriction, zero beyond the fine grid."""
    nx, ny, nz = rf.shape
    ncx, ncy, ncz = rc.shape
    for ic in range(ncx):
        for jc in range(ncy):
            for kc in range(ncz):
                acc = 0.0
                for di in range(-1, 2):
                    i = 2 * ic + di
                    if i < 0 or i >= nx:
                        continue
                    wi = 0.5 if di == 0 else 0.25
                    for dj in range(-1, 2):
                        j = 2 * jc + dj
                        if j < 0 or j >= ny:
                            continue
                        wj = 0.5 if dj == 0 else 0.25
                        for dk in range(-1, 2):
                            k = 2 * kc + dk
                            if k < 0 or k >= nz:
                                continue
                            wk = 0.5 if dk == 0 else 0.25
                            acc += wi * wj * wk * rf[i, j, k]
                rc[ic, jc, kc] = acc


@njit(cache=True)
def prolong_add(ec, uf, free):
    """Trilinear prolongation of the coarse correction, added at free fine nodes."""
    nx, ny, nz = uf.shape
    ncx, ncy, ncz = ec.shape
    for i in range(nx):
        ii = i >> 1
        ti = i & 1
        i1 = ii + 1 if ii + 1 < ncx else ncx - 1
        wx0 = 1.0 - 0.5 * ti
        wx1 = 0.5 * ti
        for j in range(ny):
            jj = j >> 1
            tj = j & 1
            j1 = jj + 1 if jj + 1 < ncy else ncy - 1
            wy0 = 1.0 - 0.5 * tj
            wy1 = 0.5 * tj
            for k in range(nz):
                if free[i, j, k] == 0:
                    continue
                kk = k >> 1
                tk = k & 1
                k1 = kk + 1 if kk + 1 < ncz else ncz - 1
                wz0 = 1.0 - 0.5 * tk
                wz1 = 0.5 * tk
                val = (wx0 * wy0 * wz0 * ec[ii, jj, kk]
                       + wx1 * wy0 * wz0 * ec[i1, jj, kk]
                       + wx0 * wy1 * wz0 * ec[ii, j1, kk]
                       + wx1 * wy1 * wz0 * ec[i1, j1, kk]
                       + wx0 * wy0 * wz1 * ec[ii, jj, k1]
                       + wx1 * wy0 * wz1 * ec[i1, jj, k1]
                       + wx0 * wy1 * wz1 * ec[ii, j1, k1]
                       + wx1 * wy1 * wz1 * ec[i1, j1, k1])
                uf[i, j, k] += val


# ---------------------------------------------------------------------------
# tricubic B-spline evaluation (coefficients from scipy.ndimage.spline_filter,
# mode="mirror")

@njit(cache=True, inline="always")
def _mirror_index(i, n):
    if n == 1:
        return 0
    p = 2 * (n - 1)
    i = i % p
    if i < 0:
        i += p
    if i >= n:
        i = p - i
    return i


@njit(cache=True, inline="always")
def _bspline_weights(t, w):
    t2 = t * t
    t3 = t2 * t
    w[0] = (1.0 - 3.0 * t + 3.0 * t2 - t3) / 6.0
    w[1] = (3.0 * t3 - 6.0 * t2 + 4.0) / 6.0
    w[2] = (-3.0 * t3 + 3.0 * t2 + 3.0 * t + 1.0) / 6.0
    w[3] = t3 / 6.0


@njit(cache=True, inline="always")
def _bspline_dweights(t, w):
    t2 = t * t
    w[0] = -0.5 * (1.0 - t) * (1.0 - t)
    w[1] = 0.5 * (3.0 * t2 - 4.0 * t)
    w[2] = 0.5 * (-3.0 * t2 + 2.0 * t + 1.0)
    w[3] = 0.5 * t2


@njit(cache=True)
def _bspline_point(coef, gx, gy, gz, wx, wy, wz, ix, iy, iz):
    nx, ny, nz = coef.shape
    fx = int(np.floor(gx))
    fy = int(np.floor(gy))
    fz = int(np.floor(gz))
    _bspline_weights(gx - fx, wx)
    _bspline_weights(gy - fy, wy)
    _bspline_weights(gz - fz, wz)
    for a in range(4):
        ix[a] = _mirror_index(fx - 1 + a, nx)
        iy[a] = _mirror_index(fy - 1 + a, ny)
        iz[a] = _mirror_index(fz - 1 + a, nz)
    s = 0.0
    for a in range(4):
        for b in range(4):
            wab = wx[a] * wy[b]
            for c in range(4):
                s += wab * wz[c] * coef[ix[a], iy[b], iz[c]]
    return s


@njit(cache=True)
def bspline_eval3(coef, gx, gy, gz):
    """Evaluate a tricubic B-spline at grid-coordinate points (1-D arrays)."""
    npts = gx.shape[0]
    out = np.empty(npts)
    wx = np.empty(4)
    wy = np.empty(4)
    wz = np.empty(4)
    ix = np.empty(4, dtype=np.int64)
    iy = np.empty(4, dtype=np.int64)
    iz = np.empty(4, dtype=np.int64)
    for p in range(npts):
        out[p] = _bspline_point(coef, gx[p], gy[p], gz[p], wx, wy, wz, ix, iy, iz)
    return out


@njit(cache=True, inline="always")
def _bspline_grad_point(coef, gx, gy, gz, wx, wy, wz, dwx, dwy, dwz, ix, iy, iz, out):
    """Gradient of the spline in grid units (per-node), written into out[3]."""
    nx, ny, nz = coef.shape
    fx = int(np.floor(gx))
    fy = int(np.floor(gy))
    fz = int(np.floor(gz))
    tx = gx - fx
    ty = gy - fy
    tz = gz - fz
    _bspline_weights(tx, wx)
    _bspline_weights(ty, wy)
    _bspline_weights(tz, wz)
    _bspline_dweights(tx, dwx)
    _bspline_dweights(ty, dwy)
    _bspline_dweights(tz, dwz)
    for a in range(4):
        ix[a] = _mirror_index(fx - 1 + a, nx)
        iy[a] = _mirror_index(fy - 1 + a, ny)
        iz[a] = _mirror_index(fz - 1 + a, nz)
    dx = 0.0
    dy = 0.0
    dz = 0.0
    for a in range(4):
        for b in range(4):
            w_ab = wx[a] * wy[b]
            dw_ab = dwx[a] * wy[b]
            w_adb = wx[a] * dwy[b]
            for c in range(4):
                v = coef[ix[a], iy[b], iz[c]]
                dx += dw_ab * wz[c] * v
                dy += w_adb * wz[c] * v
                dz += w_ab * dwz[c] * v
    out[0] = dx
    out[1] = dy
    out[2] = dz


@njit(cache=True)
def bspline_grad3(coef, gx, gy, gz):
    """Spline gradient (grid units) at grid-coordinate points; (n, 3) output."""
    npts = gx.shape[0]
    out = np.empty((npts, 3))
    wx = np.empty(4)
    wy = np.empty(4)
    wz = np.empty(4)
    dwx = np.empty(4)
    dwy = np.empty(4)
    dwz = np.empty(4)
    ix = np.empty(4, dtype=np.int64)
    iy = np.empty(4, dtype=np.int64)
    iz = np.empty(4, dtype=np.int64)
    g = np.empty(3)
    for p in range(npts):
        _bspline_grad_point(coef, gx[p], gy[p], gz[p], wx, wy, wz,
                            dwx, dwy, dwz, ix, iy, iz, g)
        out[p, 0] = g[0]
        out[p, 1] = g[1]
        out[p, 2] = g[2]
    return out


# ---------------------------------------------------------------------------
# trajectory integration: position-Verlet with the rf force evaluated at the
# half step; trapezoidal velocity damping (exact leapfrog at gamma = 0)

@njit(cache=True)
def integrate_rf_analytic(x0, v0, qm_v, r1, alpha, gamma, omega_drive,
                          az_static, a_tickle, w_tickle, dt, nsteps, stride,
                          escape_r2, out_t, out_x, out_v):
    """Integrate motion in the multipole rf field; returns (records, escape_step)."""
    x = x0[0]
    y = x0[1]
    z = x0[2]
    vx = v0[0]
    vy = v0[1]
    vz = v0[2]
    t = 0.0
    inv_r12 = 1.0 / (r1 * r1)
    c_drag_m = 1.0 - 0.5 * gamma * dt
    c_drag_p = 1.0 / (1.0 + 0.5 * gamma * dt)
    nrec = 0
    out_t[nrec] = t
    out_x[nrec, 0] = x
    out_x[nrec, 1] = y
    out_x[nrec, 2] = z
    out_v[nrec, 0] = vx
    out_v[nrec, 1] = vy
    out_v[nrec, 2] = vz
    nrec += 1
    escape_step = -1
    for n in range(nsteps):
        th = t + 0.5 * dt
        xh = x + 0.5 * dt * vx
        yh = y + 0.5 * dt * vy
        zh = z + 0.5 * dt * vz
        rf = np.cos(omega_drive * th)
        lin = 1.0 - 3.0 * alpha * zh / r1
        ex = -2.0 * xh * inv_r12 * lin
        ey = -2.0 * yh * inv_r12 * lin
        ez = 4.0 * zh * inv_r12 \
            - alpha * (6.0 * zh * zh - 3.0 * (xh * xh + yh * yh)) * inv_r12 / r1
        ax = qm_v * rf * ex
        ay = qm_v * rf * ey
        az = qm_v * rf * ez + az_static + a_tickle * np.cos(w_tickle * th)
        vx = (vx * c_drag_m + dt * ax) * c_drag_p
        vy = (vy * c_drag_m + dt * ay) * c_drag_p
        vz = (vz * c_drag_m + dt * az) * c_drag_p
        x = xh + 0.5 * dt * vx
        y = yh + 0.5 * dt * vy
        z = zh + 0.5 * dt * vz
        t = (n + 1) * dt
        if (n + 1) % stride == 0:
            out_t[nrec] = t
            out_x[nrec, 0] = x
            out_x[nrec, 1] = y
            out_x[nrec, 2] = z
            out_v[nrec, 0] = vx
            out_v[nrec, 1] = vy
            out_v[nrec, 2] = vz
            nrec += 1
        if x * x + y * y + z * z > escape_r2:
            escape_step = n + 1
            break
    return nrec, escape_step


@njit(cache=True)
def integrate_rf_bspline(x0, v0, qm_v, cphi, origin, inv_h, gamma,
                         omega_drive, az_static, a_tickle, w_tickle, dt,
                         nsteps, stride, guard, out_t, out_x, out_v):
    """Same integrator with E = -grad of a splined normalized potential.

    Leaving the grid interior (guard cells from any edge) counts as escape.
    """
    x = x0[0]
    y = x0[1]
    z = x0[2]
    vx = v0[0]
    vy = v0[1]
    vz = v0[2]
    t = 0.0
    nx, ny, nz = cphi.shape
    c_drag_m = 1.0 - 0.5 * gamma * dt
    c_drag_p = 1.0 / (1.0 + 0.5 * gamma * dt)
    wx = np.empty(4)
    wy = np.empty(4)
    wz = np.empty(4)
    dwx = np.empty(4)
    dwy = np.empty(4)
    dwz = np.empty(4)
    ix = np.empty(4, dtype=np.int64)
    iy = np.empty(4, dtype=np.int64)
    iz = np.empty(4, dtype=np.int64)
    g = np.empty(3)
    nrec = 0
    out_t[nrec] = t
    out_x[nrec, 0] = x
    out_x[nrec, 1] = y
    out_x[nrec, 2] = z
    out_v[nrec, 0] = vx
    out_v[nrec, 1] = vy
    out_v[nrec, 2] = vz
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
        rf = np.cos(omega_drive * th)
        _bspline_grad_point(cphi, gx, gy, gz, wx, wy, wz, dwx, dwy, dwz,
                            ix, iy, iz, g)
        ex = -g[0] * inv_h[0]
        ey = -g[1] * inv_h[1]
        ez = -g[2] * inv_h[2]
        ax = qm_v * rf * ex
        ay = qm_v * rf * ey
        az = qm_v * rf * ez + az_static + a_tickle * np.cos(w_tickle * th)
        vx = (vx * c_drag_m + dt * ax) * c_drag_p
        vy = (vy * c_drag_m + dt * ay) * c_drag_p
        vz = (vz * c_drag_m + dt * az) * c_drag_p
        x = xh + 0.5 * dt * vx
        y = yh + 0.5 * dt * vy
        z = zh + 0.5 * dt * vz
        t = (n + 1) * dt
        if (n + 1) % stride == 0:
            out_t[nrec] = t
            out_x[nrec, 0] = x
            out_x[nrec, 1] = y
            out_x[nrec, 2] = z
            out_v[nrec, 0] = vx
            out_v[nrec, 1] = vy
            out_v[nrec, 2] = vz
            nrec += 1
    return nrec, escape_step
