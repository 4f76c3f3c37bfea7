"""Compiled inner loops for the probe electron gas."""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def pair_forces(pos, k, a2, out):
    """Softened Coulomb repulsion among all rows of ``pos`` (N, 3); writes into ``out``."""
    n = pos.shape[0]
    for i in range(n):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
        out[i, 2] = 0.0
    for i in range(n):
        xi, yi, zi = pos[i, 0], pos[i, 1], pos[i, 2]
        for j in range(i + 1, n):
            dx = xi - pos[j, 0]
            dy = yi - pos[j, 1]
            dz = zi - pos[j, 2]
            r2 = dx * dx + dy * dy + dz * dz + a2
            f = k / (r2 * np.sqrt(r2))
            out[i, 0] += f * dx
            out[i, 1] += f * dy
            out[i, 2] += f * dz
            out[j, 0] -= f * dx
            out[j, 1] -= f * dy
            out[j, 2] -= f * dz


@njit(cache=True, fastmath=True)
def add_point_force(pos, src, k, a2, out):
    """Add the softened repulsion from a single charge at ``src``."""
    for i in range(pos.shape[0]):
        dx = pos[i, 0] - src[0]
        dy = pos[i, 1] - src[1]
        dz = pos[i, 2] - src[2]
        r2 = dx * dx + dy * dy + dz * dz + a2
        f = k / (r2 * np.sqrt(r2))
        out[i, 0] += f * dx
        out[i, 1] += f * dy
        out[i, 2] += f * dz


@njit(cache=True, fastmath=True)
def _corner_terms(u, v, w):
    R = np.sqrt(u * u + v * v + w * w)
    tx = 0.0
    ty = 0.0
    tz = 0.0
    if R == 0.0:
        return tx, ty, tz
    lv = np.log(v + R) if v + R > 0 else 0.0
    lw = np.log(w + R) if w + R > 0 else 0.0
    lu = np.log(u + R) if u + R > 0 else 0.0
    if u != 0.0:
        tx = v * lw + w * lv - u * np.arctan(v * w / (u * R))
    else:
        tx = v * lw + w * lv
    if v != 0.0:
        ty = u * lw + w * lu - v * np.arctan(u * w / (v * R))
    else:
        ty = u * lw + w * lu
    if w != 0.0:
        tz = u * lv + v * lu - w * np.arctan(u * v / (w * R))
    else:
        tz = u * lv + v * lu
    return tx, ty, tz


@njit(cache=True, fastmath=True)
def add_box_field(pos, lo, hi, coef, out):
    """Add ``coef * integral over box of (r - r') / |r - r'|^3 dV'`` at every row of ``pos``.

    With ``coef = -q rho / (4 pi eps)`` this is the force a charge ``q``
    feels from a uniform box of opposite-sign density ``rho``.
    """
    for i in range(pos.shape[0]):
        ex = 0.0
        ey = 0.0
        ez = 0.0
        for a in range(2):
            u = (hi[0] if a else lo[0]) - pos[i, 0]
            for b in range(2):
                v = (hi[1] if b else lo[1]) - pos[i, 1]
                for c in range(2):
                    w = (hi[2] if c else lo[2]) - pos[i, 2]
                    s = 1.0 if (a + b + c) % 2 == 1 else -1.0
                    tx, ty, tz = _corner_terms(u, v, w)
                    ex += s * tx
                    ey += s * ty
                    ez += s * tz
        out[i, 0] += coef * ex
        out[i, 1] += coef * ey
        out[i, 2] += coef * ez


@njit(cache=True, fastmath=True)
def potential_on_axis(nodes, pos, k, a2, out):
    """``out[n] = sum_j k / sqrt((x_n - X_j)^2 + Y_j^2 + Z_j^2 + a^2)`` for nodes on the x axis."""
    for n in range(nodes.shape[0]):
        acc = 0.0
        xn = nodes[n]
        for j in range(pos.shape[0]):
            dx = xn - pos[j, 0]
            acc += k / np.sqrt(dx * dx + pos[j, 1] * pos[j, 1] + pos[j, 2] * pos[j, 2] + a2)
        out[n] = acc


@njit(cache=True, fastmath=True)
def reflect(pos, vel, lo, hi):
    """Specular walls: fold positions back into [lo, hi] and flip the normal velocity."""
    for i in range(pos.shape[0]):
        for d in range(3):
            if pos[i, d] < lo[d]:
                pos[i, d] = 2.0 * lo[d] - pos[i, d]
                vel[i, d] = -vel[i, d]
            elif pos[i, d] > hi[d]:
                pos[i, d] = 2.0 * hi[d] - pos[i, d]
                vel[i, d] = -vel[i, d]


@njit(cache=True, fastmath=True)
def add_table_field(pos, lo, inv_h, table, out):
    """Add a force tabulated on a regular grid, trilinearly interpolated."""
    nx, ny, nz = table.shape[0], table.shape[1], table.shape[2]
    for i in range(pos.shape[0]):
        fx = (pos[i, 0] - lo[0]) * inv_h[0]
        fy = (pos[i, 1] - lo[1]) * inv_h[1]
        fz = (pos[i, 2] - lo[2]) * inv_h[2]
        ix = min(max(int(np.floor(fx)), 0), nx - 2)
        iy = min(max(int(np.floor(fy)), 0), ny - 2)
        iz = min(max(int(np.floor(fz)), 0), nz - 2)
        tx = min(max(fx - ix, 0.0), 1.0)
        ty = min(max(fy - iy, 0.0), 1.0)
        tz = min(max(fz - iz, 0.0), 1.0)
        for d in range(3):
            c00 = table[ix, iy, iz, d] * (1 - tx) + table[ix + 1, iy, iz, d] * tx
            c10 = table[ix, iy + 1, iz, d] * (1 - tx) + table[ix + 1, iy + 1, iz, d] * tx
            c01 = table[ix, iy, iz + 1, d] * (1 - tx) + table[ix + 1, iy, iz + 1, d] * tx
            c11 = table[ix, iy + 1, iz + 1, d] * (1 - tx) + table[ix + 1, iy + 1, iz + 1, d] * tx
            c0 = c00 * (1 - ty) + c10 * ty
            c1 = c01 * (1 - ty) + c11 * ty
            out[i, d] += c0 * (1 - tz) + c1 * tz
