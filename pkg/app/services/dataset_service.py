"""Sample ingestion: image directories, CSV matrices and synthetic curves, plus labeled/unlabeled splits."""

import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from PIL import Image, UnidentifiedImageError

from app.models.dataset import UNLABELED, Dataset
from app.services.errors import ArgumentError, IngestError, ParseError, SplitError, StructuralError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".pgm", ".ppm", ".pbm", ".bmp", ".gif", ".tif", ".tiff"}

# Resolution, embedding dimension and early-stop fraction used for the public image corpora
PRESETS: Dict[str, Dict] = {
    "yale": {"resize": (17, 20), "dim": 20, "mu": 0.01, "early_stop_fraction": 0.8},
    "eth80": {"resize": (20, 20), "dim": 15, "mu": 0.01, "early_stop_fraction": 0.7},
    "coil20": {"resize": (32, 32), "dim": 25, "mu": 0.01, "early_stop_fraction": 1.0},
}


def _build(samples: np.ndarray, labels: np.ndarray, labeled_count: int, class_count: int, **extra) -> Dataset:
    try:
        return Dataset(samples=samples, labels=labels, labeled_count=labeled_count,
                       class_count=class_count, **extra)
    except ValueError as e:
        raise StructuralError(str(e)) from e


def _read_image(path: Path, resize: Tuple[int, int]) -> np.ndarray:
    try:
        with Image.open(path) as img:
            if img.mode.startswith("I;16") or img.mode in ("I", "F"):
                # wide grayscale types: keep precision, normalize by the type's max
                peak = 65535.0 if img.mode.startswith("I;16") else float(max(np.asarray(img).max(), 1))
                gray = Image.fromarray(np.asarray(img, dtype=np.float32) / peak)
                pixels = np.asarray(gray.resize(resize, Image.Resampling.BILINEAR), dtype=np.float64)
            else:
                # ITU-R 601-2 luma: 0.299 R + 0.587 G + 0.114 B
                gray = img.convert("L").resize(resize, Image.Resampling.BILINEAR)
                pixels = np.asarray(gray, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as e:
        raise IngestError(path, str(e)) from e
    return np.clip(pixels, 0.0, 1.0).reshape(-1)


def load_image_dirs(root, resize: Tuple[int, int]) -> Dataset:
    """Load one class per subdirectory of ``root``; class ids follow sorted directory names"""
    root = Path(root)
    width, height = resize
    if width < 1 or height < 1:
        raise ArgumentError("resize dimensions must be positive")
    if not root.is_dir():
        raise IngestError(root, "not a directory")

    class_dirs = sorted(p for p in root.iterdir() if p.is_dir() and not p.name.startswith("."))
    if not class_dirs:
        raise StructuralError(f"No class directories under {root}")

    rows, labels = [], []
    for class_id, class_dir in enumerate(class_dirs, start=1):
        files = sorted(p for p in class_dir.iterdir()
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise StructuralError(f"Class directory {class_dir} contains no images")
        for path in files:
            rows.append(_read_image(path, (width, height)))
            labels.append(class_id)

    samples = np.vstack(rows)
    labels = np.asarray(labels, dtype=int)
    logger.info(f"Loaded {len(labels)} images in {len(class_dirs)} classes from {root}")
    return _build(samples, labels, len(labels), len(class_dirs),
                  truth=labels.copy(), original_index=np.arange(len(labels)),
                  class_names=[p.name for p in class_dirs])


def _parse_label(cell, row: int, max_class: Optional[int]) -> int:
    if pd.isna(cell) or str(cell).strip() == "":
        return UNLABELED
    text = str(cell).strip()
    try:
        value = float(text)
    except ValueError as e:
        raise ParseError(f"label {text!r} is not an integer", row) from e
    if not value.is_integer():
        raise ParseError(f"label {text!r} is not an integer", row)
    value = int(value)
    if value < 1 or (max_class is not None and value > max_class):
        raise ParseError(f"label {value} out of range", row)
    return value


def load_matrix_csv(features, labels, header: bool = False, class_count: Optional[int] = None) -> Dataset:
    """Read a numeric feature CSV and a per-row label file; labeled rows are moved first"""
    skip = 1 if header else 0
    try:
        frame = pd.read_csv(features, header=None, skiprows=skip, dtype=str,
                            skip_blank_lines=False, keep_default_na=False)
    except pd.errors.ParserError as e:
        raise ParseError(f"ragged rows in {features}: {e}") from e
    except OSError as e:
        raise IngestError(features, str(e)) from e

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1)
    if bad.any():
        first = int(np.flatnonzero(bad.to_numpy())[0])
        raise ParseError("non-numeric or missing cell", first + 1 + skip)
    samples = numeric.to_numpy(dtype=np.float64)

    try:
        label_frame = pd.read_csv(labels, header=None, skiprows=skip, dtype=str,
                                  skip_blank_lines=False, keep_default_na=False)
    except pd.errors.EmptyDataError:
        label_frame = pd.DataFrame({0: [""] * len(samples)})
    except OSError as e:
        raise IngestError(labels, str(e)) from e
    if label_frame.shape[1] != 1:
        raise ParseError(f"label file {labels} must have exactly one column")
    if len(label_frame) != len(samples):
        raise ParseError(f"{len(label_frame)} labels for {len(samples)} feature rows")

    parsed = np.array([_parse_label(cell, i + 1 + skip, class_count)
                       for i, cell in enumerate(label_frame.iloc[:, 0])], dtype=int)

    if np.unique(samples, axis=0).shape[0] != len(samples):
        raise StructuralError("feature matrix contains identical rows")

    labeled = np.flatnonzero(parsed != UNLABELED)
    unlabeled = np.flatnonzero(parsed == UNLABELED)
    if labeled.size == 0:
        raise StructuralError("no labeled rows")
    order = np.concatenate([labeled, unlabeled])
    m = class_count if class_count is not None else int(parsed.max())
    return _build(samples[order], parsed[order], labeled.size, m, original_index=order)


def synthetic_curves(classes: int, per_class: int, noise: float, seed: int = 0,
                     gap: float = 3.0) -> Dataset:
    """Vertically offset sinusoids in the plane, one per class, sampled at uniform parameter values"""
    if classes < 2 or per_class < 4 or noise < 0:
        raise ArgumentError("need classes >= 2, per_class >= 4 and noise >= 0")
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for m in range(classes):
        t = np.sort(rng.uniform(0.0, 2 * np.pi, per_class))
        points = np.column_stack([t, curve_height(t, m, gap)])
        if noise > 0:
            points = points + rng.normal(0.0, noise, points.shape)
        rows.append(points)
        labels.append(np.full(per_class, m + 1))
    samples = np.vstack(rows)
    labels = np.concatenate(labels)
    return _build(samples, labels, len(labels), classes,
                  truth=labels.copy(), original_index=np.arange(len(labels)))


def curve_height(t: np.ndarray, class_offset: int, gap: float = 3.0) -> np.ndarray:
    return np.sin(t) + gap * class_offset


def _truth(ds: Dataset) -> np.ndarray:
    if ds.truth is not None:
        return ds.truth
    if ds.labeled_count == ds.sample_count:
        return ds.labels
    raise SplitError("ground-truth labels are required to draw a new split")


def split_labels(ds: Dataset, labeled_ratio: float, seed: int = 0) -> Dataset:
    """Stratified random labeled subset; rows reordered labeled-first"""
    if not 0 < labeled_ratio < 1:
        raise ArgumentError("labeled_ratio must lie in (0, 1)")
    truth = _truth(ds)
    rng = np.random.default_rng(seed)
    chosen = []
    for m in range(1, ds.class_count + 1):
        members = np.flatnonzero(truth == m)
        count = int(round(labeled_ratio * members.size))
        if count < 1:
            raise SplitError(f"ratio {labeled_ratio} leaves class {m} without labeled samples")
        chosen.append(rng.choice(members, size=count, replace=False))
    labeled = np.sort(np.concatenate(chosen))
    unlabeled = np.setdiff1d(np.arange(ds.sample_count), labeled)
    order = np.concatenate([labeled, unlabeled])

    labels = np.full(ds.sample_count, UNLABELED, dtype=int)
    labels[: labeled.size] = truth[labeled]
    original = ds.original_index[order] if ds.original_index is not None else order
    return _build(ds.samples[order], labels, labeled.size, ds.class_count,
                  truth=truth[order], original_index=original, class_names=ds.class_names)


def promote_labels(ds: Dataset, indices, labels) -> Dataset:
    """Move unlabeled rows ``indices`` into the labeled block with the given (estimated) labels.

    Rows are ordered: existing labeled rows, promoted rows in the given order,
    remaining unlabeled rows. Ground truth and original indices follow the rows.
    """
    indices = np.asarray(indices, dtype=int)
    labels = np.asarray(labels, dtype=int)
    if indices.shape != labels.shape:
        raise ArgumentError("one label per promoted row is required")
    if np.any(indices < ds.labeled_count) or np.any(indices >= ds.sample_count):
        raise ArgumentError("only unlabeled rows can be promoted")
    if np.unique(indices).size != indices.size:
        raise ArgumentError("promoted rows must be distinct")

    head = np.arange(ds.labeled_count)
    rest = np.setdiff1d(np.arange(ds.labeled_count, ds.sample_count), indices)
    order = np.concatenate([head, indices, rest])
    new_labels = np.full(ds.sample_count, UNLABELED, dtype=int)
    new_labels[: head.size] = ds.labels[head]
    new_labels[head.size: head.size + indices.size] = labels
    truth = ds.truth[order] if ds.truth is not None else None
    original = ds.original_index[order] if ds.original_index is not None else order
    return _build(ds.samples[order], new_labels, head.size + indices.size, ds.class_count,
                  truth=truth, original_index=original, class_names=ds.class_names)
