"""Grasp execution on a tray scene with fixed or adaptive fingers.

Insertion is purely vertical at the planned height. Fixed fingers plough
through whatever stands above the insertion height, recording penetration
per contacted piece; adaptive fingers retract against a spring (up to the
retraction budget) and record the spring force instead. A capture rule then
decides which pieces leave the tray, and lateral closure contact can damage
pieces left behind.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .planner import FingerGeometry, GraspCandidate, _rectangle_mask, contact_regions
from .scenegen import TrayScene, recompose

import math


class FingerKind(enum.Enum):
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


@dataclass
class FingerModel:
    kind: FingerKind = FingerKind.ADAPTIVE
    retraction_budget: float = 22.5  # mm, adaptive only
    max_force: float = 4.1  # N at full retraction, adaptive only
    geometry: FingerGeometry = field(default_factory=FingerGeometry)

    @property
    def stiffness(self) -> float:
        # N/mm; spring force at retraction r is stiffness * r
        return self.max_force / self.retraction_budget

    def validate(self) -> None:
        if self.kind is FingerKind.ADAPTIVE:
            if self.retraction_budget <= 0 or self.max_force <= 0:
                raise ParameterError("adaptive finger needs positive budget and force")
        self.geometry.validate()


@dataclass
class ExecutionParams:
    """Invented, config-exposed constants of the capture model."""

    pierce_block: float = 15.0  # mm; fixed-finger penetration that blocks
    grasp_depth_margin: float = 5.0  # mm below the target median needed to hold
    capture_fraction: float = 0.6  # of target visible mask inside the jaw
    multipick_fraction: float = 0.5  # of a neighbor's visible mask inside the jaw


@dataclass
class FingerInsertion:
    commanded: float  # mm, tray-frame insertion height h
    achieved: float  # mm, bottom height actually reached
    retraction: float  # mm (fixed: always 0)
    contacts: dict[int, float]  # piece id -> penetration mm (fixed) or force N (adaptive)
    blocked: bool


@dataclass
class InsertionResult:
    fingers: tuple[FingerInsertion, FingerInsertion]
    damaged: dict[int, float]  # piece id -> damage magnitude

    @property
    def blocked(self) -> bool:
        return self.fingers[0].blocked or self.fingers[1].blocked


class Classification(enum.Enum):
    SUCCESS_SINGLE = "success_single"
    SUCCESS_MULTIPLE = "success_multiple"
    FAILURE = "failure"


@dataclass
class GraspOutcome:
    classification: Classification
    picked: list[int]
    damaged: dict[int, float]
    insertion: InsertionResult


def _pieces_in_region(scene: TrayScene, region: np.ndarray) -> dict[int, np.ndarray]:
    owners = scene.owner_map[region]
    out: dict[int, np.ndarray] = {}
    for pid in np.unique(owners):
        if pid == 0:
            continue
        out[int(pid)] = scene.heightmap[region][owners == pid]
    return out


def _wall_contacts(
    scene: TrayScene, c: GraspCandidate, fg: FingerGeometry
) -> tuple[bool, bool]:
    """Whether each finger rectangle reaches past the tray interior.

    The raster covers the interior only; anything beyond it is tray wall
    (full tray depth), so a finger whose rectangle is not entirely inside
    the raster collides with the wall on the way down.
    """
    res = scene.resolution
    ny, nx = scene.shape
    d = (c.w / 2.0 + fg.clearance + fg.width / 2.0) / res
    hl = fg.width / 2.0 / res
    hb = fg.breadth / 2.0 / res
    ux, uy = math.cos(c.theta), math.sin(c.theta)
    vx, vy = -uy, ux
    hits = []
    for side in (-1.0, 1.0):
        cx = c.x + side * d * ux
        cy = c.y + side * d * uy
        hit = False
        for su in (-1.0, 1.0):
            for sv in (-1.0, 1.0):
                px = cx + su * hl * ux + sv * hb * vx
                py = cy + su * hl * uy + sv * hb * vy
                if not (0.0 <= px <= nx - 1 and 0.0 <= py <= ny - 1):
                    hit = True
        hits.append(hit)
    return hits[0], hits[1]


def _insert_one(
    scene: TrayScene,
    region: np.ndarray,
    h: float,
    fm: FingerModel,
    params: ExecutionParams,
) -> FingerInsertion:
    if not region.any():
        return FingerInsertion(h, h, 0.0, {}, False)
    obstruction = max(0.0, float(scene.heightmap[region].max()) - h)
    by_piece = _pieces_in_region(scene, region)
    contacts: dict[int, float] = {}
    if fm.kind is FingerKind.FIXED:
        blocked = False
        for pid, heights in by_piece.items():
            pen = float(heights.max()) - h
            if pen <= 0:
                continue
            contacts[pid] = pen
            if pen > params.pierce_block:
                blocked = True
        return FingerInsertion(h, h, 0.0, contacts, blocked)
    retraction = min(obstruction, fm.retraction_budget)
    force = fm.stiffness * retraction
    for pid, heights in by_piece.items():
        if float(heights.max()) > h:
            contacts[pid] = force
    return FingerInsertion(h, h + retraction, retraction, contacts, obstruction > fm.retraction_budget)


def insert_fingers(
    scene: TrayScene,
    c: GraspCandidate,
    fm: FingerModel,
    params: ExecutionParams | None = None,
) -> InsertionResult:
    """Insert both fingers vertically at the candidate's contact regions.

    A finger whose rectangle reaches past the tray interior hits the tray
    wall and blocks outright. Otherwise, fixed fingers damage a piece when
    penetration exceeds its archetype's damage tolerance; adaptive fingers
    damage it when the spring force exceeds its fragility force.
    """
    params = params or ExecutionParams()
    fm.validate()
    left, right = contact_regions(c, fm.geometry, scene.resolution, scene.shape)
    wall_l, wall_r = _wall_contacts(scene, c, fm.geometry)
    fins = (
        FingerInsertion(c.h, c.h, 0.0, {}, True)
        if wall_l
        else _insert_one(scene, left, c.h, fm, params),
        FingerInsertion(c.h, c.h, 0.0, {}, True)
        if wall_r
        else _insert_one(scene, right, c.h, fm, params),
    )
    damaged: dict[int, float] = {}
    for fin in fins:
        for pid, magnitude in fin.contacts.items():
            piece = scene.pieces.get(pid)
            if piece is None:
                continue
            arch = scene.archetypes[piece.archetype]
            threshold = (
                arch.damage_tolerance if fm.kind is FingerKind.FIXED else arch.fragility_force
            )
            if magnitude > threshold:
                damaged[pid] = max(damaged.get(pid, 0.0), magnitude)
    return InsertionResult(fins, damaged)


def _jaw_region(
    scene: TrayScene, c: GraspCandidate, fg: FingerGeometry, outer: bool
) -> np.ndarray:
    """Rectangle between the finger rectangles (outer=False) or the full
    closure corridor including the finger start positions (outer=True).

    A gripped piece is held even where it overhangs the fingers lengthwise,
    so the corridor spans the piece's own major extent when that exceeds the
    finger breadth."""
    half_len_mm = c.w / 2.0 + fg.clearance
    if outer:
        half_len_mm += fg.width
    half_breadth_px = max(fg.breadth / 2.0 / scene.resolution, c.fit.axis_major / 2.0)
    return _rectangle_mask(
        scene.shape,
        (c.x, c.y),
        c.theta,
        half_len_mm / scene.resolution,
        half_breadth_px,
    )


def _visible_fraction_in(scene: TrayScene, pid: int, region: np.ndarray) -> float:
    visible = scene.owner_map == pid
    total = int(np.count_nonzero(visible))
    if total == 0:
        return 0.0
    return int(np.count_nonzero(visible & region)) / total


def close_and_lift(
    scene: TrayScene,
    c: GraspCandidate,
    ins: InsertionResult,
    fm: FingerModel,
    params: ExecutionParams | None = None,
) -> GraspOutcome:
    """Close the jaw and classify the outcome.

    The target is captured when neither finger is blocked, both finger
    bottoms reached far enough below the target's median height, and enough
    of its visible mask lies between the fingers. Neighbors mostly inside the
    jaw and taller than the finger bottoms come along as a multi-pick.
    Pieces swept laterally during closure but left behind take closure damage
    under the same force/penetration rules as insertion.
    """
    params = params or ExecutionParams()
    jaw = _jaw_region(scene, c, fm.geometry, outer=False)
    bottoms = [fin.achieved for fin in ins.fingers]
    max_bottom = max(bottoms)
    picked: list[int] = []

    target_ok = (
        not ins.blocked
        and all(b <= c.food_median - params.grasp_depth_margin for b in bottoms)
        and _visible_fraction_in(scene, c.instance_id, jaw) >= params.capture_fraction
    )
    if target_ok:
        picked.append(c.instance_id)
        for pid in sorted(scene.pieces):
            if pid == c.instance_id:
                continue
            if _visible_fraction_in(scene, pid, jaw) < params.multipick_fraction:
                continue
            visible = scene.owner_map == pid
            if not visible.any():
                continue
            med = float(np.median(scene.heightmap[visible]))
            if med > max_bottom:
                picked.append(pid)

    damaged = dict(ins.damaged)
    sweep = _jaw_region(scene, c, fm.geometry, outer=True)
    for pid, heights in _pieces_in_region(scene, sweep).items():
        if pid in picked:
            continue
        overlap = float(heights.max()) - max_bottom
        if overlap <= 0:
            continue
        piece = scene.pieces.get(pid)
        if piece is None:
            continue
        arch = scene.archetypes[piece.archetype]
        if fm.kind is FingerKind.FIXED:
            magnitude = overlap
            threshold = arch.damage_tolerance
        else:
            magnitude = fm.stiffness * min(overlap, fm.retraction_budget)
            threshold = arch.fragility_force
        if magnitude > threshold:
            damaged[pid] = max(damaged.get(pid, 0.0), magnitude)

    if len(picked) == 1:
        classification = Classification.SUCCESS_SINGLE
    elif len(picked) >= 2:
        classification = Classification.SUCCESS_MULTIPLE
    else:
        classification = Classification.FAILURE
    return GraspOutcome(classification, picked, damaged, ins)


def execute_grasp(
    scene: TrayScene,
    c: GraspCandidate,
    fm: FingerModel,
    params: ExecutionParams | None = None,
) -> GraspOutcome:
    """Run insertion then closure, remove picked pieces, and rebuild the maps.

    Damaged pieces that were not picked stay in the tray with damage flags.
    The scene is mutated in place.
    """
    params = params or ExecutionParams()
    ins = insert_fingers(scene, c, fm, params)
    outcome = close_and_lift(scene, c, ins, fm, params)
    for pid, magnitude in outcome.damaged.items():
        piece = scene.pieces.get(pid)
        if piece is not None and pid not in outcome.picked:
            piece.damaged = True
            piece.damage_magnitude = max(piece.damage_magnitude, magnitude)
    if outcome.picked:
        for pid in outcome.picked:
            scene.pieces.pop(pid, None)
        recompose(scene)
    return outcome
