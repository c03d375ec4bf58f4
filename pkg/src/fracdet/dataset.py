"""Ingestion of YOLO-format detection datasets and deterministic splitting.

Label files are one text file per image (same stem), one object per line:
``class cx cy w h`` with center/size normalized to the image dimensions.
A split manifest is a line-oriented text file with a small header, so the
same seed and input order always reproduce the identical bytes.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import FracdetError
from .geometry import NormBox

FOLDS = ("train", "val", "test")
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class LabelParseError(FracdetError):
    """A label file line failed to parse or violated a field range."""


class ManifestError(FracdetError):
    """A split manifest file is malformed."""


@dataclass(frozen=True)
class LabelRecord:
    class_id: int
    box: NormBox

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class id must be nonnegative, got {self.class_id}")


@dataclass
class ImageEntry:
    path: str
    width: int
    height: int
    labels: list[LabelRecord] = field(default_factory=list)
    patient_id: str | None = None


@dataclass
class SplitManifest:
    seed: int
    ratios: tuple[float, float, float]
    class_names: list[str]
    train: list[str]
    val: list[str]
    test: list[str]

    def fold(self, name: str) -> list[str]:
        if name not in FOLDS:
            raise ValueError(f"unknown fold {name!r}")
        return getattr(self, name)


def parse_label_file(text: str, num_classes: int | None = None) -> list[LabelRecord]:
    """Parse YOLO label text. Raises LabelParseError naming the offending
    line and field; empty and whitespace-only input parses to []."""
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise LabelParseError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            class_id = int(parts[0])
        except ValueError:
            raise LabelParseError(f"line {lineno}: class id {parts[0]!r} is not an integer") from None
        if class_id < 0:
            raise LabelParseError(f"line {lineno}: class id {class_id} is negative")
        if num_classes is not None and class_id >= num_classes:
            raise LabelParseError(
                f"line {lineno}: class id {class_id} outside configured {num_classes} classes"
            )
        values = []
        for name, token in zip(("cx", "cy", "w", "h"), parts[1:]):
            try:
                v = float(token)
            except ValueError:
                raise LabelParseError(f"line {lineno}: field {name} value {token!r} is not a number") from None
            if not (0.0 <= v <= 1.0):
                raise LabelParseError(f"line {lineno}: field {name} value {v} outside [0, 1]")
            values.append(v)
        records.append(LabelRecord(class_id, NormBox(*values)))
    return records


def serialize_labels(records: Iterable[LabelRecord]) -> str:
    """Canonical text form: one record per line, repr-exact floats."""
    lines = [
        f"{r.class_id} {r.box.cx!r} {r.box.cy!r} {r.box.w!r} {r.box.h!r}"
        for r in records
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def fold_sizes(total: int, ratios: Sequence[float]) -> list[int]:
    """Apportion `total` items by largest fractional remainder.

    Each fold gets floor(ratio * total); leftover items go one-by-one to
    the folds with the largest fractional parts (ties: fold order).
    """
    quotas = [r * total for r in ratios]
    base = [math.floor(q + 1e-9) for q in quotas]
    remainder = total - sum(base)
    by_fraction = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in by_fraction[:remainder]:
        base[i] += 1
    return base


def split(
    entries: Sequence[ImageEntry],
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1),
    seed: int = 0,
    class_names: Sequence[str] = (),
    by_patient: bool = False,
) -> SplitManifest:
    """Deterministic shuffle then contiguous partition into train/val/test.

    Same seed and same input order always produce the identical manifest.
    With by_patient=True, all images sharing a patient id land in one fold
    (entries without an id form singleton groups); fold sizes then track
    the ratios only approximately.
    """
    if not entries:
        raise ValueError("cannot split an empty entry list")
    if any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")

    rng = random.Random(seed)
    if by_patient:
        groups: dict[str, list[str]] = {}
        order: list[str] = []
        for i, e in enumerate(entries):
            key = e.patient_id if e.patient_id is not None else f"\x00solo{i}"
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(e.path)
        rng.shuffle(order)
        targets = fold_sizes(len(entries), ratios)
        folds: list[list[str]] = [[], [], []]
        for key in order:
            deficits = [targets[i] - len(folds[i]) for i in range(3)]
            folds[deficits.index(max(deficits))].extend(groups[key])
        train, val, test = folds
    else:
        paths = [e.path for e in entries]
        rng.shuffle(paths)
        n_train, n_val, _ = fold_sizes(len(paths), ratios)
        train = paths[:n_train]
        val = paths[n_train : n_train + n_val]
        test = paths[n_train + n_val :]

    return SplitManifest(
        seed=seed,
        ratios=ratios,
        class_names=list(class_names),
        train=train,
        val=val,
        test=test,
    )


def class_histogram(
    entries: Sequence[ImageEntry],
    manifest: SplitManifest | None = None,
    fold: str | None = None,
) -> Counter:
    """Box counts per class id, optionally restricted to one manifest fold."""
    selected: Iterable[ImageEntry] = entries
    if fold is not None:
        if manifest is None:
            raise ValueError("fold filtering requires a manifest")
        wanted = set(manifest.fold(fold))
        selected = (e for e in entries if e.path in wanted)
    counts: Counter = Counter()
    for e in selected:
        for r in e.labels:
            counts[r.class_id] += 1
    return counts


def write_manifest(m: SplitManifest, path: str | Path) -> None:
    lines = ["# fracdet split manifest v1"]
    lines.append(f"seed = {m.seed}")
    lines.append("ratios = " + ",".join(repr(r) for r in m.ratios))
    lines.append("classes = " + ",".join(m.class_names))
    for fold in FOLDS:
        lines.append(f"[{fold}]")
        lines.extend(m.fold(fold))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> SplitManifest:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines or lines[0] != "# fracdet split manifest v1":
        raise ManifestError(f"{path}: missing manifest header")
    header: dict[str, str] = {}
    folds: dict[str, list[str]] = {f: [] for f in FOLDS}
    current: str | None = None
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current not in folds:
                raise ManifestError(f"{path}: unknown fold section {line}")
        elif current is None:
            key, _, value = line.partition(" = ")
            header[key] = value
        elif line:
            folds[current].append(line)
    try:
        seed = int(header["seed"])
        ratios = tuple(float(r) for r in header["ratios"].split(","))
        classes = header["classes"].split(",") if header.get("classes") else []
    except (KeyError, ValueError) as exc:
        raise ManifestError(f"{path}: bad header ({exc})") from None
    if len(ratios) != 3:
        raise ManifestError(f"{path}: expected 3 ratios, got {len(ratios)}")
    return SplitManifest(seed, ratios, classes, folds["train"], folds["val"], folds["test"])


def load_image_entries(images_dir: str | Path, labels_dir: str | Path) -> list[ImageEntry]:
    """Build entries from an image directory and a parallel label directory.

    Images are matched to ``<stem>.txt`` label files; a missing label file
    means an unannotated image (empty label list). Image dimensions come
    from the file headers. Entries are ordered by path for determinism.
    """
    from PIL import Image

    images_dir = Path(images_dir)
    labels_dir = Path(labels_dir)
    if not images_dir.is_dir():
        raise FracdetError(f"image directory {images_dir} does not exist")
    if not labels_dir.is_dir():
        raise FracdetError(f"label directory {labels_dir} does not exist")

    entries = []
    for img_path in sorted(images_dir.iterdir()):
        if img_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        with Image.open(img_path) as im:
            width, height = im.size
        label_path = labels_dir / (img_path.stem + ".txt")
        labels = []
        if label_path.exists():
            try:
                labels = parse_label_file(label_path.read_text(encoding="utf-8"))
            except LabelParseError as exc:
                raise LabelParseError(f"{label_path}: {exc}") from None
        entries.append(ImageEntry(str(img_path), width, height, labels))
    return entries
