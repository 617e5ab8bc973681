"""Ellipse-fit grasp detection and median-height grasp filtering.

Each instance mask is summarized by its moment-equivalent ellipse; the grasp
closes across the minor axis, inserts at the median height of the ellipse
interior plus a per-food offset, and is filtered out when either finger
contact region has a median height at or above the food-area median.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .archetypes import FoodArchetype
from .errors import FitError, ParameterError
from .perception import DepthImage, InstanceMaskSet


@dataclass
class EllipseFit:
    """Moment-equivalent ellipse of a pixel mask.

    theta is the orientation of the minor axis (the grasp closing direction),
    normalized to [0, pi). axis_minor and axis_major are full axis lengths in
    pixels.
    """

    x: float  # px
    y: float  # px
    theta: float  # rad, minor-axis direction
    axis_minor: float  # px (A)
    axis_major: float  # px (B)


@dataclass
class FingerGeometry:
    width: float = 4.0  # mm along the grasp axis (contact-rectangle thickness)
    breadth: float = 20.0  # mm perpendicular to the grasp axis
    clearance: float = 2.0  # mm jaw-opening margin beyond w/2

    def validate(self) -> None:
        if min(self.width, self.breadth, self.clearance) <= 0:
            raise ParameterError("finger geometry values must be > 0")


@dataclass
class GraspCandidate:
    instance_id: int
    x: float  # px
    y: float  # px
    theta: float  # rad, grasp closing direction
    h: float  # mm, insertion height
    w: float  # mm, grasp width
    food_median: float  # mm
    fit: EllipseFit
    contact_medians: tuple[float, float] | None = None
    filtered: bool = False
    filter_reason: str = ""


@dataclass
class Plan:
    candidates: list[GraspCandidate]
    target: GraspCandidate | None
    skipped: dict[int, str] = field(default_factory=dict)  # id -> fit-error reason
    filtering_enabled: bool = True


def fit_ellipse(mask: np.ndarray) -> EllipseFit:
    """Fit the moment-equivalent ellipse: centroid plus eigen-decomposition of
    the pixel covariance, with semi-axis = 2 * sqrt(eigenvalue).

    Pixels are treated as unit squares (a 1/12 variance term) so rasterized
    shapes recover their continuous axes. Raises FitError for masks smaller
    than 5 px or with rank-deficient covariance.
    """
    ys, xs = np.nonzero(mask)
    n = xs.size
    if n < 5:
        raise FitError(f"mask has {n} pixels, need >= 5")
    mx, my = xs.mean(), ys.mean()
    dx, dy = xs - mx, ys - my
    cov = np.array(
        [
            [dx @ dx / n, dx @ dy / n],
            [dx @ dy / n, dy @ dy / n],
        ]
    )
    if np.linalg.eigvalsh(cov)[0] <= 1e-9:
        raise FitError("degenerate mask: rank-deficient pixel covariance")
    cov[0, 0] += 1.0 / 12.0
    cov[1, 1] += 1.0 / 12.0
    evals, evecs = np.linalg.eigh(cov)  # ascending
    minor_vec = evecs[:, 0]
    theta = math.atan2(minor_vec[1], minor_vec[0]) % math.pi
    axis_minor = 4.0 * math.sqrt(evals[0])
    axis_major = 4.0 * math.sqrt(evals[1])
    return EllipseFit(float(mx), float(my), theta, axis_minor, axis_major)


def ellipse_interior(fit: EllipseFit, shape: tuple[int, int]) -> np.ndarray:
    """Boolean grid of pixels inside the fitted ellipse, clipped to raster."""
    a = fit.axis_minor / 2.0  # semi-axis along theta
    b = fit.axis_major / 2.0  # semi-axis along theta + pi/2
    r = math.ceil(max(a, b)) + 1
    r0 = max(0, int(fit.y) - r)
    r1 = min(shape[0], int(fit.y) + r + 2)
    c0 = max(0, int(fit.x) - r)
    c1 = min(shape[1], int(fit.x) + r + 2)
    out = np.zeros(shape, dtype=bool)
    if r1 <= r0 or c1 <= c0:
        return out
    ys, xs = np.mgrid[r0:r1, c0:c1]
    dx = xs - fit.x
    dy = ys - fit.y
    c, s = math.cos(fit.theta), math.sin(fit.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    out[r0:r1, c0:c1] = (u / a) ** 2 + (v / b) ** 2 <= 1.0
    return out


def derive_grasp(
    fit: EllipseFit, depth: DepthImage, archetype: FoodArchetype, instance_id: int = 0
) -> GraspCandidate:
    """Turn an ellipse fit into a grasp candidate.

    Grasp width is the minor axis converted to mm; insertion height is the
    median depth over the ellipse interior plus the archetype's offset,
    floored at the tray floor.
    """
    interior = ellipse_interior(fit, depth.heights.shape)
    if not interior.any():
        raise ParameterError("ellipse lies entirely outside the raster")
    food_median = float(np.median(depth.heights[interior]))
    h = max(0.0, food_median + archetype.grasp_height_offset)
    return GraspCandidate(
        instance_id=instance_id,
        x=fit.x,
        y=fit.y,
        theta=fit.theta,
        h=h,
        w=fit.axis_minor * depth.resolution,
        food_median=food_median,
        fit=fit,
    )


def _rectangle_mask(
    shape: tuple[int, int],
    center_px: tuple[float, float],
    theta: float,
    half_len_px: float,
    half_breadth_px: float,
) -> np.ndarray:
    cx, cy = center_px
    r = math.ceil(math.hypot(half_len_px, half_breadth_px)) + 1
    r0 = max(0, int(cy) - r)
    r1 = min(shape[0], int(cy) + r + 2)
    c0 = max(0, int(cx) - r)
    c1 = min(shape[1], int(cx) + r + 2)
    out = np.zeros(shape, dtype=bool)
    if r1 <= r0 or c1 <= c0:
        return out
    ys, xs = np.mgrid[r0:r1, c0:c1]
    dx = xs - cx
    dy = ys - cy
    c, s = math.cos(theta), math.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    out[r0:r1, c0:c1] = (np.abs(u) <= half_len_px) & (np.abs(v) <= half_breadth_px)
    return out


def contact_regions(
    c: GraspCandidate, fg: FingerGeometry, resolution: float, shape: tuple[int, int]
) -> tuple[np.ndarray, np.ndarray]:
    """Finger contact rectangles at the ends of the minor axis.

    Each rectangle is fg.width x fg.breadth, centered at distance
    w/2 + clearance + fg.width/2 from the grasp center along the closing
    direction, on opposite sides, and clipped to the raster. A rectangle
    fully outside the raster comes back empty.
    """
    d_mm = c.w / 2.0 + fg.clearance + fg.width / 2.0
    d_px = d_mm / resolution
    ux, uy = math.cos(c.theta), math.sin(c.theta)
    half_len = fg.width / 2.0 / resolution
    half_breadth = fg.breadth / 2.0 / resolution
    left = _rectangle_mask(
        shape, (c.x - d_px * ux, c.y - d_px * uy), c.theta, half_len, half_breadth
    )
    right = _rectangle_mask(
        shape, (c.x + d_px * ux, c.y + d_px * uy), c.theta, half_len, half_breadth
    )
    return left, right


def filter_grasps(
    cands: list[GraspCandidate], depth: DepthImage, fg: FingerGeometry
) -> list[GraspCandidate]:
    """Annotate contact medians and keep candidates whose both contact-region
    medians are strictly below the food-area median.

    Filtered candidates stay in the input list with reason tags; the returned
    list holds the retained ones.
    """
    retained: list[GraspCandidate] = []
    for c in cands:
        left, right = contact_regions(c, fg, depth.resolution, depth.heights.shape)
        if not left.any() or not right.any():
            c.filtered = True
            c.filter_reason = "out-of-tray"
            continue
        med_l = float(np.median(depth.heights[left]))
        med_r = float(np.median(depth.heights[right]))
        c.contact_medians = (med_l, med_r)
        if med_l < c.food_median and med_r < c.food_median:
            retained.append(c)
        else:
            c.filtered = True
            c.filter_reason = "contact-median-too-high"
    return retained


def select_grasp(retained: list[GraspCandidate]) -> GraspCandidate | None:
    """Highest food-area median wins; ties go to the lower instance id."""
    if not retained:
        return None
    return min(retained, key=lambda c: (-c.food_median, c.instance_id))


def plan(
    masks: InstanceMaskSet,
    depth: DepthImage,
    archetype: FoodArchetype,
    fg: FingerGeometry | None = None,
    filtering_enabled: bool = True,
) -> Plan:
    """Full detection pipeline: fit, derive, filter (optional), select."""
    fg = fg or FingerGeometry()
    fg.validate()
    candidates: list[GraspCandidate] = []
    skipped: dict[int, str] = {}
    for pid, mask in masks.masks:
        try:
            fit = fit_ellipse(mask)
            cand = derive_grasp(fit, depth, archetype, pid)
        except (FitError, ParameterError) as exc:
            skipped[pid] = str(exc)
            continue
        candidates.append(cand)
    if filtering_enabled:
        retained = filter_grasps(candidates, depth, fg)
    else:
        retained = list(candidates)
    target = select_grasp(retained)
    return Plan(candidates, target, skipped, filtering_enabled)


def plan_to_dict(p: Plan) -> dict:
    def cand_dict(c: GraspCandidate) -> dict:
        return {
            "instance_id": c.instance_id,
            "x": c.x,
            "y": c.y,
            "theta": c.theta,
            "h": c.h,
            "w": c.w,
            "food_median": c.food_median,
            "contact_medians": list(c.contact_medians) if c.contact_medians else None,
            "filtered": c.filtered,
            "filter_reason": c.filter_reason,
            "axis_minor": c.fit.axis_minor,
            "axis_major": c.fit.axis_major,
        }

    return {
        "filtering_enabled": p.filtering_enabled,
        "candidates": [cand_dict(c) for c in p.candidates],
        "skipped": {str(k): v for k, v in p.skipped.items()},
        "target": cand_dict(p.target) if p.target else None,
    }


def candidate_from_dict(d: dict) -> GraspCandidate:
    fit = EllipseFit(d["x"], d["y"], d["theta"], d["axis_minor"], d["axis_major"])
    return GraspCandidate(
        instance_id=d["instance_id"],
        x=d["x"],
        y=d["y"],
        theta=d["theta"],
        h=d["h"],
        w=d["w"],
        food_median=d["food_median"],
        fit=fit,
        contact_medians=tuple(d["contact_medians"]) if d.get("contact_medians") else None,
        filtered=d.get("filtered", False),
        filter_reason=d.get("filter_reason", ""),
    )
