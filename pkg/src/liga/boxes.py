"""Oriented 3D boxes: rotated IoU via convex clipping and anchor residuals.

BEV footprints live in the (x, z) ground plane (camera frame, y down). Box
heading is (cos theta, sin theta) in that plane and corners are produced
counter-clockwise, which the clipping code relies on.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels

_CORNER_SIGNS = ((1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0))


def _normalize_angle(theta: float) -> float:
    t = math.remainder(theta, 2.0 * math.pi)
    if t <= -math.pi:
        t += 2.0 * math.pi
    return t


@dataclass(frozen=True)
class Box3D:
    """Oriented box: center (x, y, z), size (l, w, h), yaw about vertical."""

    x: float
    y: float
    z: float
    l: float
    w: float
    h: float
    theta: float
    class_id: int = 0

    def __post_init__(self):
        if self.l <= 0 or self.w <= 0 or self.h <= 0:
            raise ValueError(f"box dimensions must be positive, got "
                             f"({self.l}, {self.w}, {self.h})")
        object.__setattr__(self, "theta", _normalize_angle(self.theta))

    @property
    def volume(self) -> float:
        return self.l * self.w * self.h

    @property
    def bev(self) -> "BoxBEV":
        return BoxBEV(self.x, self.z, self.l, self.w, self.theta)

    def params(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.l, self.w, self.h, self.theta])


@dataclass(frozen=True)
class BoxBEV:
    """Bird's-eye footprint: center (cx, cz), size (l, w), yaw theta."""

    cx: float
    cz: float
    l: float
    w: float
    theta: float

    def __post_init__(self):
        if self.l <= 0 or self.w <= 0:
            raise ValueError(f"BEV box dimensions must be positive, got "
                             f"({self.l}, {self.w})")

    @property
    def area(self) -> float:
        return self.l * self.w


def corners_bev(box) -> np.ndarray:
    """Counter-clockwise BEV corners [4, 2] in the (x, z) plane."""
    b = box.bev if isinstance(box, Box3D) else box
    ct, st = math.cos(b.theta), math.sin(b.theta)
    out = np.empty((4, 2))
    for k, (sl, sw) in enumerate(_CORNER_SIGNS):
        out[k, 0] = b.cx + sl * (b.l / 2.0) * ct - sw * (b.w / 2.0) * st
        out[k, 1] = b.cz + sl * (b.l / 2.0) * st + sw * (b.w / 2.0) * ct
    return out


def polygon_clip(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Intersection of two convex CCW polygons (Sutherland-Hodgman)."""
    return kernels.clip_convex(np.asarray(subject, dtype=np.float64),
                               np.asarray(clip, dtype=np.float64))


def polygon_area(poly: np.ndarray) -> float:
    return kernels.polygon_area(np.asarray(poly, dtype=np.float64))


def bev_iou_rotated(a, b) -> float:
    """Rotated IoU of two BEV boxes, exact for convex quadrilaterals."""
    ca, cb = corners_bev(a), corners_bev(b)
    aa = (a.bev if isinstance(a, Box3D) else a).area
    ab = (b.bev if isinstance(b, Box3D) else b).area
    return kernels.pair_bev_iou(ca, aa, cb, ab)


def bev_iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise rotated BEV IoU using the kernel backend."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)))
    ca = np.stack([corners_bev(b) for b in boxes_a])
    cb = np.stack([corners_bev(b) for b in boxes_b])
    aa = np.array([(b.bev if isinstance(b, Box3D) else b).area for b in boxes_a])
    ab = np.array([(b.bev if isinstance(b, Box3D) else b).area for b in boxes_b])
    return kernels.bev_iou_matrix(ca, aa, cb, ab)


def _vertical_overlap(a: Box3D, b: Box3D) -> float:
    lo = max(a.y - a.h / 2.0, b.y - b.h / 2.0)
    hi = min(a.y + a.h / 2.0, b.y + b.h / 2.0)
    return max(0.0, hi - lo)


def iou3d(a: Box3D, b: Box3D) -> float:
    """3D IoU: rotated BEV intersection times vertical interval overlap."""
    inter_bev = polygon_area(polygon_clip(corners_bev(a), corners_bev(b)))
    inter = inter_bev * _vertical_overlap(a, b)
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return inter / union


# ---------------------------------------------------------------------------
# SECOND-style anchor residual coding


def encode_residuals(box: Box3D, anchor: Box3D) -> np.ndarray:
    """Residual 7-vector (dx, dy, dz, dl, dw, dh, dtheta) of box vs anchor."""
    da = math.hypot(anchor.l, anchor.w)
    return np.array([
        (box.x - anchor.x) / da,
        (box.y - anchor.y) / anchor.h,
        (box.z - anchor.z) / da,
        math.log(box.l / anchor.l),
        math.log(box.w / anchor.w),
        math.log(box.h / anchor.h),
        box.theta - anchor.theta,
    ])


def decode_residuals(residuals, anchor: Box3D, class_id=None) -> Box3D:
    r = np.asarray(residuals, dtype=np.float64)
    if r.shape != (7,):
        raise ValueError(f"residuals must be a 7-vector, got shape {r.shape}")
    da = math.hypot(anchor.l, anchor.w)
    return Box3D(
        x=r[0] * da + anchor.x,
        y=r[1] * anchor.h + anchor.y,
        z=r[2] * da + anchor.z,
        l=anchor.l * math.exp(r[3]),
        w=anchor.w * math.exp(r[4]),
        h=anchor.h * math.exp(r[5]),
        theta=r[6] + anchor.theta,
        class_id=anchor.class_id if class_id is None else class_id,
    )


def direction_bin(theta: float) -> int:
    """Binary heading target: 1 for theta >= 0, else 0."""
    return 1 if theta >= 0.0 else 0


# ---------------------------------------------------------------------------
# analytic BEV-intersection gradients for the IoU loss surrogate
#
# Output vertices of the clip are tracked with Jacobians wrt the subject
# box's (cx, cz, l, w) at fixed theta; the area gradient follows from the
# shoelace formula. The yaw gradient is handled upstream by central
# differences, so theta is a constant here.


def _corners_with_jacobian(bev: BoxBEV):
    ct, st = math.cos(bev.theta), math.sin(bev.theta)
    verts = []
    for sl, sw in _CORNER_SIGNS:
        p = np.array([bev.cx + sl * (bev.l / 2.0) * ct - sw * (bev.w / 2.0) * st,
                      bev.cz + sl * (bev.l / 2.0) * st + sw * (bev.w / 2.0) * ct])
        jac = np.array([
            [1.0, 0.0, sl * ct / 2.0, -sw * st / 2.0],
            [0.0, 1.0, sl * st / 2.0, sw * ct / 2.0],
        ])
        verts.append((p, jac))
    return verts


def bev_intersection_with_grad(subject: BoxBEV, clip_corners: np.ndarray):
    """Intersection area of subject with a fixed clip polygon, plus its
    gradient wrt the subject's (cx, cz, l, w)."""
    output = _corners_with_jacobian(subject)
    nclip = clip_corners.shape[0]
    eps = kernels.CLIP_EPS
    for e in range(nclip):
        ax, ay = clip_corners[e]
        bx, by = clip_corners[(e + 1) % nclip]
        ex, ey = bx - ax, by - ay
        if not output:
            break
        inputs = output
        output = []
        n = len(inputs)
        for j in range(n):
            p, jp = inputs[j]
            q, jq = inputs[(j + 1) % n]
            d1 = ex * (p[1] - ay) - ey * (p[0] - ax)
            d2 = ex * (q[1] - ay) - ey * (q[0] - ax)
            p_in = d1 >= -eps
            q_in = d2 >= -eps
            if p_in:
                output.append((p, jp))
            if p_in != q_in:
                t = d1 / (d1 - d2)
                dd1 = ex * jp[1] - ey * jp[0]
                dd2 = ex * jq[1] - ey * jq[0]
                dt = (dd1 * (d1 - d2) - d1 * (dd1 - dd2)) / (d1 - d2) ** 2
                pos = p + t * (q - p)
                jac = jp + t * (jq - jp) + np.outer(q - p, dt)
                output.append((pos, jac))
    if len(output) < 3:
        return 0.0, np.zeros(4)
    area = 0.0
    grad = np.zeros(4)
    n = len(output)
    for i in range(n):
        p, jp = output[i]
        q, jq = output[(i + 1) % n]
        area += p[0] * q[1] - q[0] * p[1]
        grad += jp[0] * q[1] + p[0] * jq[1] - jq[0] * p[1] - q[0] * jp[1]
    return 0.5 * area, 0.5 * grad


def _iou3d_from_params(params: np.ndarray, gt: Box3D) -> float:
    box = Box3D(*params[:7])
    return iou3d(box, gt)


def iou3d_with_grad(params: np.ndarray, gt: Box3D, theta_step: float = 1e-4):
    """3D IoU of a parameterized box against a fixed box, with gradient.

    params: (x, y, z, l, w, h, theta). Translation and size gradients are
    analytic through the clipped polygon; the yaw entry uses central
    differences with the given step.
    """
    x, y, z, l, w, h, theta = (float(v) for v in params)
    pred = Box3D(x, y, z, l, w, h, theta)
    gc = corners_bev(gt)
    area, d_area = bev_intersection_with_grad(pred.bev, gc)

    lo_p, hi_p = y - h / 2.0, y + h / 2.0
    lo_g, hi_g = gt.y - gt.h / 2.0, gt.y + gt.h / 2.0
    overlap = max(0.0, min(hi_p, hi_g) - max(lo_p, lo_g))
    if overlap > 0.0:
        dhi_dy, dhi_dh = (1.0, 0.5) if hi_p < hi_g else (0.0, 0.0)
        dlo_dy, dlo_dh = (1.0, -0.5) if lo_p > lo_g else (0.0, 0.0)
        do_dy = dhi_dy - dlo_dy
        do_dh = dhi_dh - dlo_dh
    else:
        do_dy = do_dh = 0.0

    inter = area * overlap
    vol_p = l * w * h
    union = vol_p + gt.volume - inter
    if union <= 0.0 or inter <= 0.0:
        iou = 0.0 if inter <= 0.0 else inter / union
        grad = np.zeros(7)
        if inter > 0.0:
            pass  # unreachable: inter > 0 implies union > 0 for valid boxes
        # flat region: still probe theta numerically for consistency
        tp = params.copy(); tp[6] += theta_step
        tm = params.copy(); tm[6] -= theta_step
        grad[6] = (_iou3d_from_params(tp, gt) - _iou3d_from_params(tm, gt)) / (2 * theta_step)
        return iou, grad

    d_inter = np.zeros(7)
    d_inter[0] = d_area[0] * overlap
    d_inter[1] = area * do_dy
    d_inter[2] = d_area[1] * overlap
    d_inter[3] = d_area[2] * overlap
    d_inter[4] = d_area[3] * overlap
    d_inter[5] = area * do_dh
    d_vol = np.zeros(7)
    d_vol[3] = w * h
    d_vol[4] = l * h
    d_vol[5] = l * w

    iou = inter / union
    grad = (d_inter * (union + inter) - inter * d_vol) / union ** 2
    tp = params.copy(); tp[6] += theta_step
    tm = params.copy(); tm[6] -= theta_step
    grad[6] = (_iou3d_from_params(tp, gt) - _iou3d_from_params(tm, gt)) / (2 * theta_step)
    return iou, grad
