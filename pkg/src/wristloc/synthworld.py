"""Deterministic synthetic stand-in for wrist-camera data collection.

Generates desk-scale tabletop scenes with exact ground truth, moves a
virtual down-looking wrist camera along approach trajectories, renders
small RGB frames, and writes sequences with synchronized metadata.

The on-disk layout of an emitted dataset:

    manifest.json                                dataset-level config + counts
    objects/<group>/<seq>/frame_<k>.png          8-bit RGB frames
    objects/<group>/<seq>/frames.jsonl           one JSON object per frame

All numbers are millimeters; JSON floats carry up to 6 significant
decimals.  Identical (seed, config) inputs produce byte-identical
directories.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import InvalidConfig, InvalidSpec, IOFailure, PlacementFailure, SchemaError, VersionError
from .geometry import (
    DOWN_QUAT,
    CameraModel,
    Pose,
    Workspace,
    default_workspace,
    project_point,
    transform_base_to_camera,
)
from .serialize import canonical_json, write_json, write_jsonl

FORMAT_VERSION = "1"

TRAJECTORY_KINDS = ("linear", "curved", "triangular")

# Named colors used both for object appearance and for object names, so the
# prompt's color word carries real visual information.
PALETTE = (
    ("red", (0.82, 0.12, 0.12)),
    ("orange", (0.90, 0.55, 0.10)),
    ("yellow", (0.90, 0.85, 0.15)),
    ("green", (0.15, 0.70, 0.20)),
    ("teal", (0.10, 0.65, 0.60)),
    ("blue", (0.15, 0.30, 0.85)),
    ("purple", (0.55, 0.20, 0.75)),
    ("magenta", (0.85, 0.20, 0.60)),
    ("brown", (0.55, 0.35, 0.15)),
    ("white", (0.92, 0.92, 0.88)),
)

_SHAPE_WORDS = {
    ("box", "vertical"): "pillar",
    ("box", "wide"): "tray",
    ("box", "typical"): "box",
    ("cylinder", "vertical"): "bottle",
    ("cylinder", "wide"): "disc",
    ("cylinder", "typical"): "can",
}

TABLE_COLOR = 0.72
TABLE_GRID_COLOR = 0.55
TABLE_GRID_PITCH = 40.0
TABLE_GRID_WIDTH = 1.6
HORIZON_COLOR = 0.65
GRIPPER_COLOR = (0.22, 0.22, 0.24)

# Lighting values inside these bands count as ordinary; anything outside is
# flagged as unusual in the per-frame metadata.
USUAL_BRIGHTNESS = (0.7, 1.3)
USUAL_TINT = (0.8, 1.2)


@dataclass(frozen=True)
class LightingSpec:
    """Per-sequence lighting: global brightness plus an RGB tint multiplier."""

    brightness: float = 1.0
    tint: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if not 0.3 <= self.brightness <= 1.7:
            raise ValueError(f"brightness {self.brightness} outside [0.3, 1.7]")
        if len(self.tint) != 3 or not all(0.5 <= t <= 1.5 for t in self.tint):
            raise ValueError(f"tint {self.tint} outside [0.5, 1.5]")

    @property
    def is_unusual(self) -> bool:
        lo, hi = USUAL_BRIGHTNESS
        if not lo <= self.brightness <= hi:
            return True
        lo, hi = USUAL_TINT
        return any(not lo <= t <= hi for t in self.tint)


@dataclass(frozen=True)
class SolidPart:
    """One convex primitive of an object: box, cylinder, or sphere.

    ``size`` holds full extents (sx, sy, sz); cylinders and spheres use
    sx == sy (== sz for spheres) as their diameter.
    """

    kind: str
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    color: tuple[float, float, float]

    def translated(self, delta) -> "SolidPart":
        cx, cy, cz = self.center
        return replace(self, center=(cx + delta[0], cy + delta[1], cz + delta[2]))


def geometric_tags(footprint: tuple[float, float], height: float) -> set[str]:
    """Aspect tags implied by an object's bounding dimensions."""
    tags: set[str] = set()
    widest = max(footprint)
    if height > widest:
        tags.add("vertical")
    if widest > 2.0 * height:
        tags.add("wide")
    return tags


@dataclass(frozen=True)
class SceneObject:
    """A tabletop object resting on the z = 0 plane.

    ``top_center`` is the regression target: the point centered above the
    object's footprint at its full height.
    """

    shape: str
    footprint: tuple[float, float]
    height: float
    color: tuple[float, float, float]
    top_center: tuple[float, float, float]
    tags: frozenset[str]
    name: str
    parts: tuple[SolidPart, ...]

    def __post_init__(self):
        if min(self.footprint) <= 0 or self.height <= 0:
            raise ValueError("footprint and height must be positive")
        if abs(self.top_center[2] - self.height) > 1e-9:
            raise ValueError("top_center.z must equal the object height")
        geo = geometric_tags(self.footprint, self.height)
        for tag in ("vertical", "wide"):
            if (tag in self.tags) != (tag in geo):
                raise ValueError(f"tag {tag!r} inconsistent with geometry of {self.name!r}")
        if not self.name:
            raise ValueError("object name must be non-empty")

    def moved_to(self, xy) -> "SceneObject":
        """Copy of this object with its footprint center placed at ``xy``."""
        delta = (xy[0] - self.top_center[0], xy[1] - self.top_center[1], 0.0)
        return replace(
            self,
            top_center=(float(xy[0]), float(xy[1]), self.top_center[2]),
            parts=tuple(p.translated(delta) for p in self.parts),
        )

    def footprint_rect(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the footprint on the table."""
        w, d = self.footprint
        x, y = self.top_center[0], self.top_center[1]
        return (x - w / 2, x + w / 2, y - d / 2, y + d / 2)


@dataclass(frozen=True)
class Scene:
    objects: tuple[SceneObject, ...]
    target_index: int
    lighting: LightingSpec
    workspace: Workspace

    def __post_init__(self):
        if not 1 <= len(self.objects) <= 4:
            raise ValueError("a scene holds 1 to 4 objects")
        if not 0 <= self.target_index < len(self.objects):
            raise ValueError("target_index out of range")
        target_name = self.objects[self.target_index].name
        for i, obj in enumerate(self.objects):
            if i != self.target_index and obj.name == target_name:
                raise ValueError("distractor shares the target's name")
        rects = [o.footprint_rect() for o in self.objects]
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                if _rects_overlap(rects[i], rects[j]):
                    raise ValueError("object footprints overlap")

    @property
    def target(self) -> SceneObject:
        return self.objects[self.target_index]


def _rects_overlap(a, b, margin: float = 0.0) -> bool:
    return not (a[1] + margin <= b[0] or b[1] + margin <= a[0]
                or a[3] + margin <= b[2] or b[3] + margin <= a[2])


# --------------------------------------------------------------------------
# object and scene sampling
# --------------------------------------------------------------------------

def _jitter_color(rng: np.random.Generator, base) -> tuple[float, float, float]:
    rgb = np.clip(np.asarray(base) + rng.uniform(-0.06, 0.06, 3), 0.05, 1.0)
    return (float(rgb[0]), float(rgb[1]), float(rgb[2]))


def make_object(rng: np.random.Generator, index: int) -> SceneObject:
    """Sample one object identity (geometry, color, tags, name) at the origin."""
    color_word, base_rgb = PALETTE[int(rng.integers(0, len(PALETTE)))]
    color = _jitter_color(rng, base_rgb)
    kind_roll = rng.random()
    if kind_roll < 0.30:
        shape = "box"
    elif kind_roll < 0.58:
        shape = "cylinder"
    elif kind_roll < 0.72:
        shape = "sphere"
    else:
        shape = "composite"

    if shape == "sphere":
        dia = float(rng.uniform(16.0, 30.0))
        footprint = (dia, dia)
        height = dia
        word = "ball"
        parts = (SolidPart("sphere", (0.0, 0.0, dia / 2), (dia, dia, dia), color),)
        tags = geometric_tags(footprint, height)
    elif shape == "composite":
        if rng.random() < 0.5:
            footprint, height, parts = _stacked_parts(rng, color)
            word = "lamp"
            extra = {"unusual_design"}
        else:
            footprint, height, parts = _offset_parts(rng, color)
            word = "cluster"
            extra = {"irregular"}
        tags = geometric_tags(footprint, height) | extra
    else:
        aspect_roll = rng.random()
        if aspect_roll < 0.50:
            aspect = "typical"
            w = float(rng.uniform(16.0, 36.0))
            d = w if shape == "cylinder" else float(rng.uniform(16.0, 36.0))
            widest = max(w, d)
            height = float(rng.uniform(widest / 2 + 0.5, min(widest - 0.5, 26.0)))
        elif aspect_roll < 0.72:
            aspect = "vertical"
            w = float(rng.uniform(12.0, 24.0))
            d = w if shape == "cylinder" else float(rng.uniform(12.0, 24.0))
            height = float(rng.uniform(max(w, d) + 4.0, 80.0))
        else:
            aspect = "wide"
            w = float(rng.uniform(26.0, 44.0))
            d = w if shape == "cylinder" else float(rng.uniform(26.0, 44.0))
            height = float(rng.uniform(6.0, max(w, d) / 2 - 1.5))
        footprint = (w, d)
        word = _SHAPE_WORDS[(shape, aspect)]
        parts = (SolidPart(shape, (0.0, 0.0, height / 2), (w, d, height), color),)
        tags = geometric_tags(footprint, height)

    name = f"{color_word} {word} {index:03d}"
    return SceneObject(
        shape=shape,
        footprint=footprint,
        height=height,
        color=color,
        top_center=(0.0, 0.0, height),
        tags=frozenset(tags),
        name=name,
        parts=parts,
    )


def _stacked_parts(rng, color):
    """Two stacked boxes with contrasting colors (an 'unusually designed' object)."""
    w = float(rng.uniform(20.0, 36.0))
    d = float(rng.uniform(20.0, 36.0))
    h1 = float(rng.uniform(10.0, 20.0))
    w2 = w * float(rng.uniform(0.45, 0.7))
    d2 = d * float(rng.uniform(0.45, 0.7))
    h2 = float(rng.uniform(8.0, 18.0))
    contrast = _jitter_color(rng, (1.0 - color[0], 1.0 - color[1], 1.0 - color[2]))
    parts = (
        SolidPart("box", (0.0, 0.0, h1 / 2), (w, d, h1), color),
        SolidPart("box", (0.0, 0.0, h1 + h2 / 2), (w2, d2, h2), contrast),
    )
    return (w, d), h1 + h2, parts


def _offset_parts(rng, color):
    """Two partially offset boxes of unequal height (an 'irregular' object)."""
    wa = float(rng.uniform(16.0, 30.0))
    da = float(rng.uniform(16.0, 30.0))
    ha = float(rng.uniform(8.0, 22.0))
    wb = float(rng.uniform(12.0, 24.0))
    db = float(rng.uniform(12.0, 24.0))
    hb = float(rng.uniform(8.0, 22.0))
    off_x = float(rng.uniform(0.3, 0.55)) * (wa + wb) / 2
    off_y = float(rng.uniform(-0.25, 0.25)) * (da + db) / 2
    ax, ay = -off_x / 2, 0.0
    bx, by = off_x / 2, off_y
    xmin = min(ax - wa / 2, bx - wb / 2)
    xmax = max(ax + wa / 2, bx + wb / 2)
    ymin = min(ay - da / 2, by - db / 2)
    ymax = max(ay + da / 2, by + db / 2)
    cx, cy = (xmin + xmax) / 2, (ymin + ymax) / 2
    parts = (
        SolidPart("box", (ax - cx, ay - cy, ha / 2), (wa, da, ha), color),
        SolidPart("box", (bx - cx, by - cy, hb / 2), (wb, db, hb), _jitter_color(rng, color)),
    )
    return (xmax - xmin, ymax - ymin), max(ha, hb), parts


def sample_lighting(rng: np.random.Generator, unusual_prob: float = 0.25) -> LightingSpec:
    """Mostly ordinary lighting, with a tail of clearly unusual setups."""
    if rng.random() < unusual_prob:
        if rng.random() < 0.5:
            brightness = float(rng.choice([rng.uniform(0.3, 0.62), rng.uniform(1.38, 1.7)]))
            tint = tuple(float(t) for t in rng.uniform(0.84, 1.16, 3))
        else:
            brightness = float(rng.uniform(0.74, 1.26))
            tint = [float(t) for t in rng.uniform(0.84, 1.16, 3)]
            channel = int(rng.integers(0, 3))
            tint[channel] = float(rng.choice([rng.uniform(0.5, 0.78), rng.uniform(1.22, 1.5)]))
            tint = tuple(tint)
    else:
        brightness = float(rng.uniform(0.74, 1.26))
        tint = tuple(float(t) for t in rng.uniform(0.84, 1.16, 3))
    return LightingSpec(brightness=brightness, tint=tint)


_PLACEMENT_ATTEMPTS = 100
_PLACEMENT_MARGIN = 8.0
_EDGE_MARGIN = 6.0


def place_objects(rng: np.random.Generator, objects, workspace: Workspace) -> list[SceneObject]:
    """Drop objects onto non-overlapping table spots; raise after 100 misses."""
    placed: list[SceneObject] = []
    rects: list[tuple[float, float, float, float]] = []
    for obj in objects:
        w, d = obj.footprint
        lo, hi = workspace.min_corner, workspace.max_corner
        for _ in range(_PLACEMENT_ATTEMPTS):
            x = float(rng.uniform(lo[0] + w / 2 + _EDGE_MARGIN, hi[0] - w / 2 - _EDGE_MARGIN))
            y = float(rng.uniform(lo[1] + d / 2 + _EDGE_MARGIN, hi[1] - d / 2 - _EDGE_MARGIN))
            candidate = obj.moved_to((x, y))
            rect = candidate.footprint_rect()
            if not any(_rects_overlap(rect, r, _PLACEMENT_MARGIN) for r in rects):
                placed.append(candidate)
                rects.append(rect)
                break
        else:
            raise PlacementFailure(
                f"could not place {obj.name!r} after {_PLACEMENT_ATTEMPTS} attempts")
    return placed


def compose_scene(target: SceneObject, rng: np.random.Generator, workspace: Workspace,
                  multi_object_prob: float, unusual_lighting_prob: float = 0.25) -> Scene:
    """Place a known target plus sampled distractors into a lit scene."""
    objects = [target]
    if rng.random() < multi_object_prob:
        for _ in range(int(rng.integers(1, 4))):
            objects.append(make_object(rng, 10000 + int(rng.integers(0, 90000))))
    placed = place_objects(rng, objects, workspace)
    lighting = sample_lighting(rng, unusual_lighting_prob)
    return Scene(tuple(placed), 0, lighting, workspace)


def sample_scene(rng_seed: int, workspace: Workspace, multi_object_prob: float) -> Scene:
    """Sample a full scene (target included) deterministically from a seed."""
    if not 0.0 <= multi_object_prob <= 1.0:
        raise InvalidConfig(f"multi_object_prob {multi_object_prob} outside [0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed)]))
    target = make_object(rng, int(rng.integers(0, 1000)))
    return compose_scene(target, rng, workspace, multi_object_prob)


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySpec:
    """Approach path of the TCP toward a target's top center."""

    kind: str
    start_pose: Pose
    frames_per_second: float
    duration: float
    hover_height: float = 80.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise InvalidSpec(f"unknown trajectory kind {self.kind!r}")
        if not 2.0 <= self.frames_per_second <= 6.0:
            raise InvalidSpec(f"frames_per_second {self.frames_per_second} outside [2, 6]")
        if self.duration <= 0:
            raise InvalidSpec(f"duration must be positive, got {self.duration}")
        if self.hover_height <= 0:
            raise InvalidSpec("hover_height must be positive")


def _lateral_unit(chord: np.ndarray) -> np.ndarray:
    lateral = np.array([-chord[1], chord[0], 0.0])
    norm = np.linalg.norm(lateral)
    if norm < 1e-9:
        return np.array([1.0, 0.0, 0.0])
    return lateral / norm


def _arc_points(start: np.ndarray, control: np.ndarray, end: np.ndarray, params) -> np.ndarray:
    """Points along the circular arc start -> control -> end at fractions ``params``."""
    e1 = control - start
    e2_raw = end - start
    normal = np.cross(e1, e2_raw)
    if np.linalg.norm(normal) < 1e-9:
        return start[None, :] + np.asarray(params)[:, None] * (end - start)[None, :]
    u = e1 / np.linalg.norm(e1)
    w = np.cross(normal, u)
    w /= np.linalg.norm(w)

    def plane(p):
        rel = p - start
        return np.array([rel @ u, rel @ w])

    a2, b2, c2 = plane(start), plane(control), plane(end)
    # circumcenter in plane coordinates
    d = 2 * (a2[0] * (b2[1] - c2[1]) + b2[0] * (c2[1] - a2[1]) + c2[0] * (a2[1] - b2[1]))
    ux = ((a2 @ a2) * (b2[1] - c2[1]) + (b2 @ b2) * (c2[1] - a2[1]) + (c2 @ c2) * (a2[1] - b2[1])) / d
    uy = ((a2 @ a2) * (c2[0] - b2[0]) + (b2 @ b2) * (a2[0] - c2[0]) + (c2 @ c2) * (b2[0] - a2[0])) / d
    center = np.array([ux, uy])
    radius = np.linalg.norm(a2 - center)

    theta_a = math.atan2(a2[1] - center[1], a2[0] - center[0])
    theta_b = math.atan2(b2[1] - center[1], b2[0] - center[0])
    theta_c = math.atan2(c2[1] - center[1], c2[0] - center[0])
    ccw = (theta_c - theta_a) % (2 * math.pi)
    rel_b = (theta_b - theta_a) % (2 * math.pi)
    sweep = ccw if rel_b <= ccw else ccw - 2 * math.pi
    thetas = theta_a + np.asarray(params) * sweep
    pts2 = center[None, :] + radius * np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    return start[None, :] + pts2[:, 0:1] * u[None, :] + pts2[:, 1:2] * w[None, :]


def _polyline_points(waypoints: list[np.ndarray], params) -> np.ndarray:
    lengths = [np.linalg.norm(b - a) for a, b in zip(waypoints[:-1], waypoints[1:])]
    total = sum(lengths)
    out = []
    for s in params:
        dist = s * total
        for seg_start, seg_end, seg_len in zip(waypoints[:-1], waypoints[1:], lengths):
            if dist <= seg_len or seg_end is waypoints[-1]:
                frac = dist / seg_len if seg_len > 0 else 0.0
                out.append(seg_start + min(frac, 1.0) * (seg_end - seg_start))
                break
            dist -= seg_len
    return np.array(out)


def generate_trajectory(spec: TrajectorySpec, target: SceneObject) -> list[Pose]:
    """Poses of the TCP from the start pose to the hover point above the target.

    The orientation is the fixed down-looking one for every pose.  Frame
    count is ``round(duration * fps)`` with a minimum of 2; spacing along
    the path eases out (the arm decelerates on approach).
    """
    if spec.duration <= 0:
        raise InvalidSpec(f"duration must be positive, got {spec.duration}")
    start = np.asarray(spec.start_pose.position, dtype=np.float64)
    top = np.asarray(target.top_center, dtype=np.float64)
    if start[2] <= top[2]:
        raise InvalidSpec("start position must be strictly above the object top")
    end = np.array([top[0], top[1], top[2] + spec.hover_height])

    n = max(2, round(spec.duration * spec.frames_per_second))
    tau = np.arange(n, dtype=np.float64) / (n - 1)
    # cubic ease-out: the arm decelerates hard on approach, so later frames
    # cluster near the hover point the way a jerk-limited motion does
    params = 1.0 - (1.0 - tau) ** 3

    if spec.kind == "linear":
        points = start[None, :] + params[:, None] * (end - start)[None, :]
    elif spec.kind == "curved":
        control = 0.5 * (start + end) + 0.25 * np.linalg.norm(end - start) * _lateral_unit(end - start)
        points = _arc_points(start, control, end, params)
    else:
        waypoint = 0.5 * (start + end) + 0.35 * np.linalg.norm(end - start) * _lateral_unit(end - start)
        points = _polyline_points([start, waypoint, end], params)

    points[0] = start
    points[-1] = end
    return [Pose(p, DOWN_QUAT) for p in points]


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices, counterclockwise."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return np.asarray(pts, dtype=np.float64)

    def half(seq):
        out: list[tuple[float, float]] = []
        for p in seq:
            while len(out) >= 2:
                ox, oy = out[-2]
                ax, ay = out[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(reversed(pts))
    return np.asarray(lower[:-1] + upper[:-1], dtype=np.float64)


def _fill_convex(img: np.ndarray, hull: np.ndarray, color) -> None:
    if len(hull) < 3:
        return
    height, width = img.shape[:2]
    u0 = max(0, int(math.floor(hull[:, 0].min())))
    u1 = min(width - 1, int(math.ceil(hull[:, 0].max())))
    v0 = max(0, int(math.floor(hull[:, 1].min())))
    v1 = min(height - 1, int(math.ceil(hull[:, 1].max())))
    if u0 > u1 or v0 > v1:
        return
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1, dtype=np.float64),
                         np.arange(v0, v1 + 1, dtype=np.float64))
    inside = np.ones(uu.shape, dtype=bool)
    for i in range(len(hull)):
        ax, ay = hull[i]
        bx, by = hull[(i + 1) % len(hull)]
        cross = (bx - ax) * (vv - ay) - (by - ay) * (uu - ax)
        inside &= cross >= 0
    img[v0:v1 + 1, u0:u1 + 1][inside] = color


def _project_many(points: np.ndarray, camera_pose: Pose, cam: CameraModel) -> np.ndarray:
    """Project points, dropping any at or behind the camera plane."""
    rot = camera_pose.rotation_matrix()
    local = (points - camera_pose.position) @ rot
    ahead = local[:, 2] > 1e-6
    local = local[ahead]
    uv = np.empty((len(local), 2))
    uv[:, 0] = cam.cx + cam.fx * local[:, 0] / local[:, 2]
    uv[:, 1] = cam.cy + cam.fy * local[:, 1] / local[:, 2]
    return uv


def _part_outline(part: SolidPart) -> np.ndarray:
    cx, cy, cz = part.center
    sx, sy, sz = part.size
    if part.kind == "box":
        xs = (cx - sx / 2, cx + sx / 2)
        ys = (cy - sy / 2, cy + sy / 2)
        zs = (cz - sz / 2, cz + sz / 2)
        return np.array([(x, y, z) for x in xs for y in ys for z in zs])
    if part.kind == "cylinder":
        angles = np.linspace(0.0, 2 * math.pi, 28, endpoint=False)
        ring = np.stack([cx + (sx / 2) * np.cos(angles), cy + (sy / 2) * np.sin(angles)], axis=1)
        top = np.column_stack([ring, np.full(len(ring), cz + sz / 2)])
        bottom = np.column_stack([ring, np.full(len(ring), cz - sz / 2)])
        return np.vstack([top, bottom])
    raise ValueError(f"unknown part kind {part.kind!r}")


def _draw_part(img: np.ndarray, part: SolidPart, camera_pose: Pose, cam: CameraModel) -> None:
    if part.kind == "sphere":
        center = np.asarray(part.center, dtype=np.float64)
        local = transform_base_to_camera(center, camera_pose)
        if local[2] <= 1e-6:
            return
        u, v = project_point(center, camera_pose, cam)
        radius = part.size[0] / 2
        au = cam.fx * radius / local[2]
        av = cam.fy * radius / local[2]
        height, width = img.shape[:2]
        u0 = max(0, int(math.floor(u - au)))
        u1 = min(width - 1, int(math.ceil(u + au)))
        v0 = max(0, int(math.floor(v - av)))
        v1 = min(height - 1, int(math.ceil(v + av)))
        if u0 > u1 or v0 > v1:
            return
        uu, vv = np.meshgrid(np.arange(u0, u1 + 1, dtype=np.float64),
                             np.arange(v0, v1 + 1, dtype=np.float64))
        inside = ((uu - u) / au) ** 2 + ((vv - v) / av) ** 2 <= 1.0
        img[v0:v1 + 1, u0:u1 + 1][inside] = part.color
        return
    uv = _project_many(_part_outline(part), camera_pose, cam)
    if len(uv) < 3:
        return
    _fill_convex(img, _convex_hull(uv), part.color)


def _table_background(camera_pose: Pose, cam: CameraModel) -> np.ndarray:
    """Gray table plane with a fixed grid, seen through the camera."""
    rot = camera_pose.rotation_matrix()
    uu, vv = np.meshgrid(np.arange(cam.width, dtype=np.float64),
                         np.arange(cam.height, dtype=np.float64))
    dirs = np.stack([(uu - cam.cx) / cam.fx, (vv - cam.cy) / cam.fy, np.ones_like(uu)], axis=-1)
    dirs_base = dirs @ rot.T
    origin = camera_pose.position
    img = np.full((cam.height, cam.width, 3), HORIZON_COLOR, dtype=np.float64)
    dz = dirs_base[..., 2]
    hits = dz < -1e-9
    t = np.where(hits, -origin[2] / np.where(hits, dz, -1.0), np.inf)
    x = origin[0] + t * dirs_base[..., 0]
    y = origin[1] + t * dirs_base[..., 1]
    shade = np.where(
        (np.mod(x, TABLE_GRID_PITCH) < TABLE_GRID_WIDTH)
        | (np.mod(y, TABLE_GRID_PITCH) < TABLE_GRID_WIDTH),
        TABLE_GRID_COLOR, TABLE_COLOR)
    for c in range(3):
        img[..., c] = np.where(hits, shade, HORIZON_COLOR)
    return img


def render_frame(scene: Scene, camera_pose: Pose, cam: CameraModel) -> np.ndarray:
    """Flat-shaded painter's-algorithm render, values in [0, 1].

    Objects are drawn far to near; a fixed gripper stub occupies the
    bottom-center image region; lighting multiplies every pixel by
    brightness and per-channel tint.
    """
    if camera_pose.position[2] <= 0:
        raise ValueError("camera must be above the table plane")
    img = _table_background(camera_pose, cam)

    def cam_distance(obj: SceneObject) -> float:
        return float(np.linalg.norm(np.asarray(obj.top_center) - camera_pose.position))

    for obj in sorted(scene.objects, key=cam_distance, reverse=True):
        for part in sorted(obj.parts, key=lambda p: p.center[2] + p.size[2] / 2):
            _draw_part(img, part, camera_pose, cam)

    stub_w = max(2, cam.width // 6)
    stub_h = max(2, cam.height // 8)
    c0 = cam.width // 2 - stub_w // 2
    img[cam.height - stub_h:, c0:c0 + stub_w] = GRIPPER_COLOR

    lit = img * scene.lighting.brightness * np.asarray(scene.lighting.tint)[None, None, :]
    return np.clip(lit, 0.0, 1.0)


def raster_to_png(img: np.ndarray, path: Path) -> None:
    arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, "RGB").save(path, format="PNG")


def png_to_raster(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as handle:
            arr = np.asarray(handle.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise IOFailure(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


# --------------------------------------------------------------------------
# dataset emission
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WorldConfig:
    """Knobs of the synthetic data collection run."""

    camera: CameraModel = field(default_factory=CameraModel)
    workspace: Workspace = field(default_factory=default_workspace)
    multi_object_prob: float = 0.4
    hover_height: float = 80.0
    duration_range: tuple[float, float] = (1.5, 2.5)
    fps_range: tuple[float, float] = (2.0, 6.0)
    unusual_lighting_prob: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.multi_object_prob <= 1.0:
            raise InvalidConfig("multi_object_prob outside [0, 1]")
        if not 0.0 <= self.unusual_lighting_prob <= 1.0:
            raise InvalidConfig("unusual_lighting_prob outside [0, 1]")
        lo, hi = self.fps_range
        if not (2.0 <= lo <= hi <= 6.0):
            raise InvalidConfig("fps_range must lie within [2, 6]")
        lo, hi = self.duration_range
        if not (0.0 < lo <= hi):
            raise InvalidConfig("duration_range must be positive")
        if self.hover_height <= 0:
            raise InvalidConfig("hover_height must be positive")

    def to_dict(self) -> dict:
        return {
            "camera": {
                "fx": self.camera.fx, "fy": self.camera.fy,
                "cx": self.camera.cx, "cy": self.camera.cy,
                "width": self.camera.width, "height": self.camera.height,
                "mount_pos": list(self.camera.mount_offset.position),
                "mount_quat": list(self.camera.mount_offset.quat),
            },
            "workspace": {
                "min_corner": list(self.workspace.min_corner),
                "max_corner": list(self.workspace.max_corner),
            },
            "multi_object_prob": self.multi_object_prob,
            "hover_height": self.hover_height,
            "duration_range": list(self.duration_range),
            "fps_range": list(self.fps_range),
            "unusual_lighting_prob": self.unusual_lighting_prob,
        }


@dataclass(frozen=True)
class DatasetManifest:
    path: Path
    format_version: str
    seed: int
    n_objects: int
    sequences_per_object: int
    n_sequences: int
    n_frames: int
    groups: tuple[str, ...]
    config: dict


def group_dirname(group: str) -> str:
    return group.replace(" ", "_")


def make_catalog(rng_seed: int, n_objects: int) -> list[SceneObject]:
    """The fixed object identities of a dataset, one per group."""
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 0]))
    return [make_object(rng, i) for i in range(n_objects)]


def _emit_object(args) -> list[dict]:
    """Render and write the sequences of one catalog object; returns row stats."""
    out_dir, rng_seed, obj_index, target, sequences_per_object, config = args
    results = []
    for seq_index in range(sequences_per_object):
        rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 1 + obj_index, seq_index]))
        scene = compose_scene(target, rng, config.workspace,
                              config.multi_object_prob, config.unusual_lighting_prob)
        lo, hi = config.workspace.min_corner, config.workspace.max_corner
        span = hi - lo
        start = np.array([
            rng.uniform(lo[0] + 0.15 * span[0], hi[0] - 0.15 * span[0]),
            rng.uniform(lo[1] + 0.15 * span[1], hi[1] - 0.15 * span[1]),
            rng.uniform(lo[2] + 0.5 * span[2], hi[2] - 0.05 * span[2]),
        ])
        spec = TrajectorySpec(
            kind=TRAJECTORY_KINDS[int(rng.integers(0, 3))],
            start_pose=Pose(start, DOWN_QUAT),
            frames_per_second=float(rng.uniform(*config.fps_range)),
            duration=float(rng.uniform(*config.duration_range)),
            hover_height=config.hover_height,
        )
        poses = generate_trajectory(spec, scene.target)

        seq_name = f"seq_{seq_index}"
        rel_dir = f"objects/{group_dirname(target.name)}/{seq_name}"
        seq_dir = Path(out_dir) / rel_dir
        seq_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        for k, tcp in enumerate(poses):
            cam_pose = tcp.compose(config.camera.mount_offset)
            frame = render_frame(scene, cam_pose, config.camera)
            image_rel = f"{rel_dir}/frame_{k}.png"
            raster_to_png(frame, Path(out_dir) / image_rel)
            rows.append({
                "t": k / spec.frames_per_second,
                "image": image_rel,
                "tcp_pose": {"pos": list(tcp.position), "quat": list(tcp.quat)},
                "target": list(scene.target.top_center),
                "group": target.name,
                "tags": sorted(scene.target.tags),
                "multi_object": len(scene.objects) > 1,
                "lighting_unusual": scene.lighting.is_unusual,
                "prompt_object": target.name,
            })
        write_jsonl(seq_dir / "frames.jsonl", rows)
        results.append({"group": target.name, "sequence": seq_name, "n_frames": len(rows)})
    return results


def emit_dataset(out_dir, n_objects: int, sequences_per_object: int = 5,
                 rng_seed: int = 0, config: WorldConfig | None = None,
                 jobs: int = 1) -> DatasetManifest:
    """Generate a full dataset directory; byte-identical for identical inputs.

    With ``jobs > 1`` objects are rendered in parallel processes; every
    worker owns disjoint output paths, so file contents are unaffected.
    """
    if n_objects < 1:
        raise InvalidConfig("n_objects must be at least 1")
    if n_objects > 9999:
        raise InvalidConfig("n_objects must be below 10000")
    if sequences_per_object < 1:
        raise InvalidConfig("sequences_per_object must be at least 1")
    config = config or WorldConfig()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create dataset directory {out}: {exc}") from exc

    catalog = make_catalog(rng_seed, n_objects)
    tasks = [(str(out), int(rng_seed), i, obj, sequences_per_object, config)
             for i, obj in enumerate(catalog)]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                per_object = list(pool.map(_emit_object, tasks))
        else:
            per_object = [_emit_object(t) for t in tasks]
    except OSError as exc:
        raise IOFailure(f"dataset emission failed: {exc}") from exc

    n_frames = sum(r["n_frames"] for rows in per_object for r in rows)
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": int(rng_seed),
        "n_objects": n_objects,
        "sequences_per_object": sequences_per_object,
        "n_sequences": n_objects * sequences_per_object,
        "n_frames": n_frames,
        "groups": [obj.name for obj in catalog],
        "config": config.to_dict(),
    }
    write_json(out / "manifest.json", manifest)
    return DatasetManifest(
        path=out,
        format_version=FORMAT_VERSION,
        seed=int(rng_seed),
        n_objects=n_objects,
        sequences_per_object=sequences_per_object,
        n_sequences=n_objects * sequences_per_object,
        n_frames=n_frames,
        groups=tuple(obj.name for obj in catalog),
        config=manifest["config"],
    )


def read_manifest(path) -> DatasetManifest:
    """Parse and version-check a dataset's manifest.json."""
    import json

    manifest_path = Path(path) / "manifest.json"
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IOFailure(f"cannot read manifest {manifest_path}: {exc}") from exc
    except ValueError as exc:
        raise SchemaError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported dataset format version {version!r}")
    for key in ("seed", "n_objects", "sequences_per_object", "n_sequences", "n_frames", "groups"):
        if key not in raw:
            raise SchemaError(f"manifest missing field {key!r}")
    return DatasetManifest(
        path=Path(path),
        format_version=version,
        seed=int(raw["seed"]),
        n_objects=int(raw["n_objects"]),
        sequences_per_object=int(raw["sequences_per_object"]),
        n_sequences=int(raw["n_sequences"]),
        n_frames=int(raw["n_frames"]),
        groups=tuple(raw["groups"]),
        config=raw.get("config", {}),
    )
