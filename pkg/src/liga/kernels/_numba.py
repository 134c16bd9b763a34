"""Numba-jitted kernels, bit-compatible with the ``_numpy`` reference.

Accumulation order matches the reference (corner-by-corner, ascending
sample index) so both backends produce identical floats.
"""
import numpy as np
from numba import njit

CLIP_EPS = 1e-9


@njit(cache=True)
def bilinear_gather(src, us, vs):
    c, h, w = src.shape
    n = us.shape[0]
    out = np.zeros((c, n))
    for i in range(n):
        u0f = np.floor(us[i])
        v0f = np.floor(vs[i])
        du = us[i] - u0f
        dv = vs[i] - v0f
        u0 = np.int64(u0f)
        v0 = np.int64(v0f)
        w00 = (1.0 - du) * (1.0 - dv)
        w10 = du * (1.0 - dv)
        w01 = (1.0 - du) * dv
        w11 = du * dv
        for k in range(c):
            acc = 0.0
            if 0 <= u0 <= w - 1 and 0 <= v0 <= h - 1:
                acc += w00 * src[k, v0, u0]
            if 0 <= u0 + 1 <= w - 1 and 0 <= v0 <= h - 1:
                acc += w10 * src[k, v0, u0 + 1]
            if 0 <= u0 <= w - 1 and 0 <= v0 + 1 <= h - 1:
                acc += w01 * src[k, v0 + 1, u0]
            if 0 <= u0 + 1 <= w - 1 and 0 <= v0 + 1 <= h - 1:
                acc += w11 * src[k, v0 + 1, u0 + 1]
            out[k, i] = acc
    return out


@njit(cache=True)
def bilinear_scatter(gout, us, vs, h, w):
    c = gout.shape[0]
    n = us.shape[0]
    grad = np.zeros((c, h, w))
    # corner-by-corner to mirror the reference np.add.at ordering
    for corner in range(4):
        cu_off = corner & 1
        cv_off = corner >> 1
        for i in range(n):
            u0 = np.int64(np.floor(us[i]))
            v0 = np.int64(np.floor(vs[i]))
            du = us[i] - np.floor(us[i])
            dv = vs[i] - np.floor(vs[i])
            ui = u0 + cu_off
            vi = v0 + cv_off
            if 0 <= ui <= w - 1 and 0 <= vi <= h - 1:
                wu = du if cu_off == 1 else 1.0 - du
                wv = dv if cv_off == 1 else 1.0 - dv
                wgt = wu * wv
                for k in range(c):
                    grad[k, vi, ui] += wgt * gout[k, i]
    return grad


@njit(cache=True)
def trilinear_gather(src, ds, vs, us):
    c, nd, h, w = src.shape
    n = us.shape[0]
    out = np.zeros((c, n))
    for i in range(n):
        d0 = np.int64(np.floor(ds[i]))
        v0 = np.int64(np.floor(vs[i]))
        u0 = np.int64(np.floor(us[i]))
        td = ds[i] - np.floor(ds[i])
        tv = vs[i] - np.floor(vs[i])
        tu = us[i] - np.floor(us[i])
        for k in range(c):
            acc = 0.0
            for corner in range(8):
                du_off = corner & 1
                dv_off = (corner >> 1) & 1
                dd_off = corner >> 2
                di = d0 + dd_off
                vi = v0 + dv_off
                ui = u0 + du_off
                if 0 <= di <= nd - 1 and 0 <= vi <= h - 1 and 0 <= ui <= w - 1:
                    wd = td if dd_off == 1 else 1.0 - td
                    wv = tv if dv_off == 1 else 1.0 - tv
                    wu = tu if du_off == 1 else 1.0 - tu
                    acc += wd * wv * wu * src[k, di, vi, ui]
            out[k, i] = acc
    return out


@njit(cache=True)
def trilinear_scatter(gout, ds, vs, us, nd, h, w):
    c = gout.shape[0]
    n = us.shape[0]
    grad = np.zeros((c, nd, h, w))
    for corner in range(8):
        du_off = corner & 1
        dv_off = (corner >> 1) & 1
        dd_off = corner >> 2
        for i in range(n):
            d0 = np.int64(np.floor(ds[i]))
            v0 = np.int64(np.floor(vs[i]))
            u0 = np.int64(np.floor(us[i]))
            td = ds[i] - np.floor(ds[i])
            tv = vs[i] - np.floor(vs[i])
            tu = us[i] - np.floor(us[i])
            di = d0 + dd_off
            vi = v0 + dv_off
            ui = u0 + du_off
            if 0 <= di <= nd - 1 and 0 <= vi <= h - 1 and 0 <= ui <= w - 1:
                wd = td if dd_off == 1 else 1.0 - td
                wv = tv if dv_off == 1 else 1.0 - tv
                wu = tu if du_off == 1 else 1.0 - tu
                wgt = wd * wv * wu
                for k in range(c):
                    grad[k, di, vi, ui] += wgt * gout[k, i]
    return grad


@njit(cache=True)
def _pair_bev_iou(ca, area_a, cb, area_b):
    # Sutherland-Hodgman with fixed-size buffers (convex quads: <= 8 verts)
    buf_x = np.empty(16)
    buf_y = np.empty(16)
    out_x = np.empty(16)
    out_y = np.empty(16)
    n_out = 4
    for i in range(4):
        out_x[i] = ca[i, 0]
        out_y[i] = ca[i, 1]
    for e in range(4):
        ax = cb[e, 0]
        ay = cb[e, 1]
        bx = cb[(e + 1) % 4, 0]
        by = cb[(e + 1) % 4, 1]
        ex = bx - ax
        ey = by - ay
        if n_out == 0:
            break
        n_in = n_out
        for i in range(n_in):
            buf_x[i] = out_x[i]
            buf_y[i] = out_y[i]
        n_out = 0
        for j in range(n_in):
            px = buf_x[j]
            py = buf_y[j]
            qx = buf_x[(j + 1) % n_in]
            qy = buf_y[(j + 1) % n_in]
            d1 = ex * (py - ay) - ey * (px - ax)
            d2 = ex * (qy - ay) - ey * (qx - ax)
            p_in = d1 >= -CLIP_EPS
            q_in = d2 >= -CLIP_EPS
            if p_in:
                out_x[n_out] = px
                out_y[n_out] = py
                n_out += 1
            if p_in != q_in:
                t = d1 / (d1 - d2)
                out_x[n_out] = px + t * (qx - px)
                out_y[n_out] = py + t * (qy - py)
                n_out += 1
    if n_out < 3:
        inter = 0.0
    else:
        s = 0.0
        for i in range(n_out):
            x0 = out_x[i]
            y0 = out_y[i]
            x1 = out_x[(i + 1) % n_out]
            y1 = out_y[(i + 1) % n_out]
            s += x0 * y1 - x1 * y0
        inter = 0.5 * s
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


@njit(cache=True)
def bev_iou_matrix(corners_a, areas_a, corners_b, areas_b):
    n = corners_a.shape[0]
    m = corners_b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = _pair_bev_iou(corners_a[i], areas_a[i],
                                      corners_b[j], areas_b[j])
    return out


@njit(cache=True)
def render_depth(boxes, ground_y, height, width, f, cu, cv, origin_x):
    depth = np.full((height, width), -1.0)
    inst = np.full((height, width), -1, dtype=np.int64)
    nb = boxes.shape[0]
    for v in range(height):
        for u in range(width):
            dx = (u - cu) / f
            dy = (v - cv) / f
            best = -1.0
            who = -1
            if dy > 1e-9:
                zg = ground_y / dy
                if zg > 0:
                    best = zg
                    who = 0
            for b in range(nb):
                bx = boxes[b, 0]
                by = boxes[b, 1]
                bz = boxes[b, 2]
                bl = boxes[b, 3]
                bw = boxes[b, 4]
                bh = boxes[b, 5]
                th = boxes[b, 6]
                ct = np.cos(th)
                st = np.sin(th)
                ox = origin_x - bx
                oy = -by
                oz = -bz
                o_l = ct * ox + st * oz
                o_w = -st * ox + ct * oz
                d_l = ct * dx + st
                d_w = -st * dx + ct
                tmin = 1e-6
                tmax = np.inf
                for ax in range(3):
                    if ax == 0:
                        o_ax, d_ax, half = o_l, d_l, bl / 2.0
                    elif ax == 1:
                        o_ax, d_ax, half = o_w, d_w, bw / 2.0
                    else:
                        o_ax, d_ax, half = oy, dy, bh / 2.0
                    if np.abs(d_ax) < 1e-12:
                        if np.abs(o_ax) > half:
                            tmin = np.inf
                            tmax = -np.inf
                    else:
                        t1 = (-half - o_ax) / d_ax
                        t2 = (half - o_ax) / d_ax
                        lo = min(t1, t2)
                        hi = max(t1, t2)
                        tmin = max(tmin, lo)
                        tmax = min(tmax, hi)
                if tmin <= tmax and np.isfinite(tmin):
                    if best < 0 or tmin < best:
                        best = tmin
                        who = b + 1
            depth[v, u] = best
            inst[v, u] = who
    return depth, inst
