"""Dataset loading, prompt construction, and leakage-safe splitting.

Splits operate on object groups, never on frames: all images of one object
land on the same side of every boundary, which prevents the object's height
(the hardest coordinate) from leaking across train/validation/test.

Shuffling uses numpy's PCG64 generator seeded through SeedSequence, so
splits are reproducible from the seed alone.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidName, IOFailure, SchemaError, TooFewGroups
from .geometry import Pose
from .model import ROUTING_SIGNIFIER, signifier_pattern
from .serialize import write_json, write_jsonl
from .synthworld import FORMAT_VERSION, group_dirname, read_manifest

PROMPT_TEMPLATE_VERSION = "1"

_REQUIRED_FIELDS = ("t", "image", "tcp_pose", "target", "group", "tags",
                    "multi_object", "lighting_unusual", "prompt_object")


@dataclass(frozen=True)
class FrameRecord:
    """One synchronized sample: frame, prompt, robot state, and ground truth."""

    image_ref: Path
    prompt: str
    gripper_pose: Pose
    target: np.ndarray
    group: str
    sequence_id: str
    timestamp: float
    tags: frozenset[str]
    multi_object: bool
    lighting_unusual: bool

    def __post_init__(self):
        target = np.asarray(self.target, dtype=np.float64)
        if target.shape != (3,) or not np.all(np.isfinite(target)):
            raise SchemaError(f"target must be a finite 3-vector, got {self.target!r}")
        target.flags.writeable = False
        object.__setattr__(self, "target", target)
        if not self.group:
            raise SchemaError("group must be non-empty")
        if self.timestamp < 0:
            raise SchemaError(f"timestamp must be non-negative, got {self.timestamp}")
        if signifier_pattern().search(self.prompt):
            raise SchemaError("prompt contains the routing signifier")


def build_prompt(object_name: str, gripper_pose: Pose) -> str:
    """Fixed prompt template (version 1), numbers to one decimal place."""
    if not object_name:
        raise InvalidName("object name must be non-empty")
    if signifier_pattern().search(object_name):
        raise InvalidName(
            f"object name {object_name!r} contains the routing signifier {ROUTING_SIGNIFIER!r}")
    px, py, pz = gripper_pose.position
    qw, qx, qy, qz = gripper_pose.quat
    return (f"Locate the {object_name}. "
            f"Gripper position (mm): {px:.1f}, {py:.1f}, {pz:.1f}. "
            f"Gripper orientation (wxyz): {qw:.1f}, {qx:.1f}, {qy:.1f}, {qz:.1f}.")


def _record_from_row(row: dict, root: Path, sequence_id: str, where: str) -> FrameRecord:
    for key in _REQUIRED_FIELDS:
        if key not in row:
            raise SchemaError(f"{where}: missing field {key!r}")
    pose_raw = row["tcp_pose"]
    if not isinstance(pose_raw, dict) or "pos" not in pose_raw or "quat" not in pose_raw:
        raise SchemaError(f"{where}: tcp_pose must hold 'pos' and 'quat'")
    try:
        pose = Pose(pose_raw["pos"], pose_raw["quat"])
    except ValueError as exc:
        raise SchemaError(f"{where}: invalid tcp_pose: {exc}") from exc
    prompt = build_prompt(str(row["prompt_object"]), pose)
    return FrameRecord(
        image_ref=root / row["image"],
        prompt=prompt,
        gripper_pose=pose,
        target=row["target"],
        group=str(row["group"]),
        sequence_id=sequence_id,
        timestamp=float(row["t"]),
        tags=frozenset(row["tags"]),
        multi_object=bool(row["multi_object"]),
        lighting_unusual=bool(row["lighting_unusual"]),
    )


def load_dataset(path) -> list[FrameRecord]:
    """Read every frame of an emitted dataset; validation failures are fatal."""
    root = Path(path)
    manifest = read_manifest(root)
    records: list[FrameRecord] = []
    for group in manifest.groups:
        group_dir = root / "objects" / group_dirname(group)
        if not group_dir.is_dir():
            raise IOFailure(f"missing group directory {group_dir}")
        for seq_dir in sorted(p for p in group_dir.iterdir() if p.is_dir()):
            jsonl = seq_dir / "frames.jsonl"
            try:
                lines = jsonl.read_text(encoding="utf-8").splitlines()
            except OSError as exc:
                raise IOFailure(f"cannot read {jsonl}: {exc}") from exc
            sequence_id = f"{group}/{seq_dir.name}"
            for lineno, line in enumerate(lines):
                where = f"{jsonl}:{lineno + 1}"
                try:
                    row = json.loads(line)
                except ValueError as exc:
                    raise SchemaError(f"{where}: invalid JSON: {exc}") from exc
                record = _record_from_row(row, root, sequence_id, where)
                if not record.image_ref.is_file():
                    raise IOFailure(f"{where}: image {record.image_ref} does not exist")
                records.append(record)
    if len(records) != manifest.n_frames:
        raise SchemaError(
            f"manifest declares {manifest.n_frames} frames, found {len(records)}")
    return records


def save_records(records: list[FrameRecord], out_dir, manifest_extra: dict | None = None) -> None:
    """Re-serialize loaded records into the dataset directory layout.

    Images are referenced, not copied; ``image`` paths are written relative
    to the original dataset root when possible.  Loading an emitted dataset
    and re-saving it reproduces identical frame rows.
    """
    out = Path(out_dir)
    by_sequence: dict[str, list[FrameRecord]] = {}
    for record in records:
        by_sequence.setdefault(record.sequence_id, []).append(record)
    groups: list[str] = []
    for sequence_id in by_sequence:
        group = sequence_id.rsplit("/", 1)[0]
        if group not in groups:
            groups.append(group)
    try:
        for sequence_id, seq_records in by_sequence.items():
            group, seq_name = sequence_id.rsplit("/", 1)
            seq_dir = out / "objects" / group_dirname(group) / seq_name
            seq_dir.mkdir(parents=True, exist_ok=True)
            rows = []
            for record in sorted(seq_records, key=lambda r: r.timestamp):
                name = _prompt_object_from(record.prompt)
                rows.append({
                    "t": record.timestamp,
                    "image": _relative_image(record.image_ref, seq_dir),
                    "tcp_pose": {"pos": list(record.gripper_pose.position),
                                 "quat": list(record.gripper_pose.quat)},
                    "target": list(record.target),
                    "group": record.group,
                    "tags": sorted(record.tags),
                    "multi_object": record.multi_object,
                    "lighting_unusual": record.lighting_unusual,
                    "prompt_object": name,
                })
            write_jsonl(seq_dir / "frames.jsonl", rows)
        manifest = {
            "format_version": FORMAT_VERSION,
            "seed": -1,
            "n_objects": len(groups),
            "sequences_per_object": max(
                (sum(1 for s in by_sequence if s.rsplit("/", 1)[0] == g) for g in groups),
                default=0),
            "n_sequences": len(by_sequence),
            "n_frames": len(records),
            "groups": groups,
            "config": {},
        }
        if manifest_extra:
            manifest.update(manifest_extra)
        write_json(out / "manifest.json", manifest)
    except OSError as exc:
        raise IOFailure(f"cannot write records under {out}: {exc}") from exc


def _prompt_object_from(prompt: str) -> str:
    match = re.match(r"Locate the (.*?)\. Gripper position", prompt)
    if not match:
        raise SchemaError(f"prompt does not follow template version {PROMPT_TEMPLATE_VERSION}")
    return match.group(1)


def _relative_image(image_ref: Path, seq_dir: Path) -> str:
    parts = image_ref.parts
    if "objects" in parts:
        idx = len(parts) - 1 - parts[::-1].index("objects")
        return "/".join(parts[idx:])
    return str(image_ref)


# --------------------------------------------------------------------------
# splits
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SplitResult:
    train_val: list[FrameRecord]
    test: list[FrameRecord]
    test_groups: frozenset[str]


@dataclass(frozen=True)
class Folds:
    folds: tuple[tuple[list[FrameRecord], list[FrameRecord]], ...]
    val_groups: tuple[tuple[str, ...], ...]

    @property
    def k(self) -> int:
        return len(self.folds)


def _group_order(records: list[FrameRecord]) -> list[str]:
    seen: list[str] = []
    for record in records:
        if record.group not in seen:
            seen.append(record.group)
    return seen


def group_split(records: list[FrameRecord], test_fraction: float = 0.1,
                rng_seed: int = 0) -> SplitResult:
    """Hold out whole groups until their frames cover ``test_fraction``.

    Groups are shuffled by seed; the smallest prefix whose cumulative frame
    count reaches ``test_fraction`` of all frames becomes the test set.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    groups = sorted(_group_order(records))
    if len(groups) < 2:
        raise TooFewGroups(f"need at least 2 groups, got {len(groups)}")
    counts = {g: 0 for g in groups}
    for record in records:
        counts[record.group] += 1
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 31]))
    shuffled = [groups[i] for i in rng.permutation(len(groups))]
    needed = test_fraction * len(records)
    test_groups: set[str] = set()
    cumulative = 0
    for group in shuffled:
        if cumulative >= needed:
            break
        test_groups.add(group)
        cumulative += counts[group]
    train_val = [r for r in records if r.group not in test_groups]
    test = [r for r in records if r.group in test_groups]
    return SplitResult(train_val=train_val, test=test, test_groups=frozenset(test_groups))


def group_kfold(records: list[FrameRecord], k: int = 5, rng_seed: int = 0) -> Folds:
    """Shuffle groups by seed and deal them round-robin into k validation sets."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    groups = sorted(_group_order(records))
    if len(groups) < k:
        raise TooFewGroups(f"need at least {k} groups, got {len(groups)}")
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 37]))
    shuffled = [groups[i] for i in rng.permutation(len(groups))]
    assignments = [tuple(shuffled[i::k]) for i in range(k)]
    folds = []
    for val_groups in assignments:
        val_set = set(val_groups)
        train = [r for r in records if r.group not in val_set]
        validation = [r for r in records if r.group in val_set]
        folds.append((train, validation))
    return Folds(folds=tuple(folds), val_groups=tuple(assignments))


def split_to_json(split: SplitResult, folds: Folds | None = None) -> dict:
    """Audit view of a split: group names only, no frame data."""
    payload: dict = {"test_groups": sorted(split.test_groups)}
    if folds is not None:
        payload["folds"] = [{"val_groups": sorted(v)} for v in folds.val_groups]
    return payload


def write_split_json(path, split: SplitResult, folds: Folds | None = None) -> None:
    write_json(path, split_to_json(split, folds))
