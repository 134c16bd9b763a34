"""Pure-numpy reference kernels.

Every function here has a numba twin in ``_numba.py``. The two backends must
stay bit-identical: keep accumulation order (corner-by-corner, ascending
sample index) in sync when editing either file.
"""
import numpy as np

# tolerance for the inside/outside test in convex clipping
CLIP_EPS = 1e-9


def bilinear_gather(src, us, vs):
    """Sample src[C,H,W] at N fractional (u,v) points with zero padding.

    Corners falling outside [0,W-1]x[0,H-1] contribute zero, so samples
    fully outside the grid return exact zeros and integer in-bounds
    coordinates reproduce grid values bit-for-bit.
    """
    c, h, w = src.shape
    u0 = np.floor(us)
    v0 = np.floor(vs)
    du = us - u0
    dv = vs - v0
    u0 = u0.astype(np.int64)
    v0 = v0.astype(np.int64)
    out = np.zeros((c, us.shape[0]))
    corners = (
        (u0, v0, (1.0 - du) * (1.0 - dv)),
        (u0 + 1, v0, du * (1.0 - dv)),
        (u0, v0 + 1, (1.0 - du) * dv),
        (u0 + 1, v0 + 1, du * dv),
    )
    for ui, vi, wgt in corners:
        ok = (ui >= 0) & (ui <= w - 1) & (vi >= 0) & (vi <= h - 1)
        uc = np.clip(ui, 0, w - 1)
        vc = np.clip(vi, 0, h - 1)
        out += np.where(ok, wgt, 0.0) * src[:, vc, uc]
    return out


def bilinear_scatter(gout, us, vs, h, w):
    """Adjoint of bilinear_gather: scatter-add gout[C,N] into a [C,H,W] grid."""
    c = gout.shape[0]
    u0 = np.floor(us)
    v0 = np.floor(vs)
    du = us - u0
    dv = vs - v0
    u0 = u0.astype(np.int64)
    v0 = v0.astype(np.int64)
    grad = np.zeros((c, h, w))
    corners = (
        (u0, v0, (1.0 - du) * (1.0 - dv)),
        (u0 + 1, v0, du * (1.0 - dv)),
        (u0, v0 + 1, (1.0 - du) * dv),
        (u0 + 1, v0 + 1, du * dv),
    )
    for ui, vi, wgt in corners:
        ok = (ui >= 0) & (ui <= w - 1) & (vi >= 0) & (vi <= h - 1)
        np.add.at(grad, (slice(None), vi[ok], ui[ok]), wgt[ok] * gout[:, ok])
    return grad


def trilinear_gather(src, ds, vs, us):
    """Sample src[C,D,H,W] at N fractional (d,v,u) points with zero padding."""
    c, nd, h, w = src.shape
    d0 = np.floor(ds)
    v0 = np.floor(vs)
    u0 = np.floor(us)
    td = ds - d0
    tv = vs - v0
    tu = us - u0
    d0 = d0.astype(np.int64)
    v0 = v0.astype(np.int64)
    u0 = u0.astype(np.int64)
    out = np.zeros((c, us.shape[0]))
    corners = (
        (d0, v0, u0, (1.0 - td) * (1.0 - tv) * (1.0 - tu)),
        (d0, v0, u0 + 1, (1.0 - td) * (1.0 - tv) * tu),
        (d0, v0 + 1, u0, (1.0 - td) * tv * (1.0 - tu)),
        (d0, v0 + 1, u0 + 1, (1.0 - td) * tv * tu),
        (d0 + 1, v0, u0, td * (1.0 - tv) * (1.0 - tu)),
        (d0 + 1, v0, u0 + 1, td * (1.0 - tv) * tu),
        (d0 + 1, v0 + 1, u0, td * tv * (1.0 - tu)),
        (d0 + 1, v0 + 1, u0 + 1, td * tv * tu),
    )
    for di, vi, ui, wgt in corners:
        ok = (
            (di >= 0) & (di <= nd - 1)
            & (vi >= 0) & (vi <= h - 1)
            & (ui >= 0) & (ui <= w - 1)
        )
        dc = np.clip(di, 0, nd - 1)
        vc = np.clip(vi, 0, h - 1)
        uc = np.clip(ui, 0, w - 1)
        out += np.where(ok, wgt, 0.0) * src[:, dc, vc, uc]
    return out


def trilinear_scatter(gout, ds, vs, us, nd, h, w):
    """Adjoint of trilinear_gather: scatter-add gout[C,N] into [C,D,H,W]."""
    c = gout.shape[0]
    d0 = np.floor(ds)
    v0 = np.floor(vs)
    u0 = np.floor(us)
    td = ds - d0
    tv = vs - v0
    tu = us - u0
    d0 = d0.astype(np.int64)
    v0 = v0.astype(np.int64)
    u0 = u0.astype(np.int64)
    grad = np.zeros((c, nd, h, w))
    corners = (
        (d0, v0, u0, (1.0 - td) * (1.0 - tv) * (1.0 - tu)),
        (d0, v0, u0 + 1, (1.0 - td) * (1.0 - tv) * tu),
        (d0, v0 + 1, u0, (1.0 - td) * tv * (1.0 - tu)),
        (d0, v0 + 1, u0 + 1, (1.0 - td) * tv * tu),
        (d0 + 1, v0, u0, td * (1.0 - tv) * (1.0 - tu)),
        (d0 + 1, v0, u0 + 1, td * (1.0 - tv) * tu),
        (d0 + 1, v0 + 1, u0, td * tv * (1.0 - tu)),
        (d0 + 1, v0 + 1, u0 + 1, td * tv * tu),
    )
    for di, vi, ui, wgt in corners:
        ok = (
            (di >= 0) & (di <= nd - 1)
            & (vi >= 0) & (vi <= h - 1)
            & (ui >= 0) & (ui <= w - 1)
        )
        np.add.at(grad, (slice(None), di[ok], vi[ok], ui[ok]), wgt[ok] * gout[:, ok])
    return grad


def clip_convex(subject, clip):
    """Sutherland-Hodgman intersection of two convex CCW polygons.

    subject: [ns,2], clip: [nc,2]. Returns [k,2] CCW polygon (k may be 0).
    """
    output = [tuple(p) for p in subject]
    nc = clip.shape[0]
    for i in range(nc):
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % nc]
        ex, ey = bx - ax, by - ay
        if not output:
            break
        inputs = output
        output = []
        n = len(inputs)
        for j in range(n):
            px, py = inputs[j]
            qx, qy = inputs[(j + 1) % n]
            p_in = ex * (py - ay) - ey * (px - ax) >= -CLIP_EPS
            q_in = ex * (qy - ay) - ey * (qx - ax) >= -CLIP_EPS
            if p_in:
                output.append((px, py))
            if p_in != q_in:
                d1 = ex * (py - ay) - ey * (px - ax)
                d2 = ex * (qy - ay) - ey * (qx - ax)
                t = d1 / (d1 - d2)
                output.append((px + t * (qx - px), py + t * (qy - py)))
    return np.array(output, dtype=np.float64).reshape(-1, 2)


def polygon_area(poly):
    """Shoelace area of a CCW polygon [k,2]; 0 for k < 3."""
    k = poly.shape[0]
    if k < 3:
        return 0.0
    s = 0.0
    for i in range(k):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % k]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def pair_bev_iou(corners_a, area_a, corners_b, area_b):
    inter = polygon_area(clip_convex(corners_a, corners_b))
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def bev_iou_matrix(corners_a, areas_a, corners_b, areas_b):
    """Rotated-box IoU for every pair: corners_[a|b] are [N,4,2] CCW."""
    n = corners_a.shape[0]
    m = corners_b.shape[0]
    out = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = pair_bev_iou(corners_a[i], areas_a[i], corners_b[j], areas_b[j])
    return out


def render_depth(boxes, ground_y, height, width, f, cu, cv, origin_x):
    """Raycast per-pixel depth against oriented boxes plus a ground plane.

    boxes: [n,7] rows (x, y, z, l, w, h, theta) in camera frame (y down).
    Camera center sits at (origin_x, 0, 0) looking along +z. Returns
    (depth[H,W], inst[H,W]) where inst is -1 for no hit, 0 for ground and
    1 + box index for box hits; depth is -1.0 where invalid.
    """
    depth = np.full((height, width), -1.0)
    inst = np.full((height, width), -1, dtype=np.int64)
    vv, uu = np.meshgrid(np.arange(height, dtype=np.float64),
                         np.arange(width, dtype=np.float64), indexing="ij")
    dx = (uu - cu) / f
    dy = (vv - cv) / f

    hit_ground = dy > 1e-9
    zg = np.where(hit_ground, ground_y / np.where(hit_ground, dy, 1.0), -1.0)
    ok = hit_ground & (zg > 0)
    depth[ok] = zg[ok]
    inst[ok] = 0

    for b in range(boxes.shape[0]):
        bx, by, bz, bl, bw, bh, th = boxes[b]
        ct, st = np.cos(th), np.sin(th)
        # ray origin relative to box center
        ox, oy, oz = origin_x - bx, -by, -bz
        # local axes: length along (ct, st) in (x,z), width along (-st, ct)
        o_l = ct * ox + st * oz
        o_w = -st * ox + ct * oz
        d_l = ct * dx + st
        d_w = -st * dx + ct
        tmin = np.full((height, width), 1e-6)
        tmax = np.full((height, width), np.inf)
        for o_ax, d_ax, half in ((o_l, d_l, bl / 2.0), (o_w, d_w, bw / 2.0),
                                 (oy, dy, bh / 2.0)):
            o_arr = np.broadcast_to(np.asarray(o_ax, dtype=np.float64), (height, width))
            d_arr = np.broadcast_to(np.asarray(d_ax, dtype=np.float64), (height, width))
            para = np.abs(d_arr) < 1e-12
            safe_d = np.where(para, 1.0, d_arr)
            t1 = (-half - o_arr) / safe_d
            t2 = (half - o_arr) / safe_d
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            inside = np.abs(o_arr) <= half
            tmin = np.where(para, np.where(inside, tmin, np.inf), np.maximum(tmin, lo))
            tmax = np.where(para, np.where(inside, tmax, -np.inf), np.minimum(tmax, hi))
        hit = (tmin <= tmax) & np.isfinite(tmin)
        better = hit & ((depth < 0) | (tmin < depth))
        depth[better] = tmin[better]
        inst[better] = b + 1
    return depth, inst
