"""Slice extraction: turn generated CT cases into a 2D training set.

HU values are normalized to [0, 1] through the fixed CT window
[-1024, 3071]; labels keep their 0-5 codes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mhd

HU_LO = -1024.0
HU_HI = 3071.0
NUM_CLASSES = 6
INDEX_NAME = "slices.tsv"


def normalize_hu(hu: np.ndarray) -> np.ndarray:
    return np.clip((hu.astype(np.float32) - HU_LO) / (HU_HI - HU_LO), 0.0, 1.0)


@dataclass
class ManifestEntry:
    case_id: str
    site: str
    volume_path: Path
    label_path: Path


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    path = Path(path)
    entries = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        parts = line.split("\t")
        entries.append(
            ManifestEntry(
                case_id=parts[0],
                site=parts[1],
                volume_path=path.parent / parts[2],
                label_path=path.parent / parts[3],
            )
        )
    return entries


def read_fold_plan(path: str | Path) -> dict[int, tuple[list[str], list[str]]]:
    """fold index -> (training case ids, validation case ids)."""
    folds: dict[int, tuple[list[str], list[str]]] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        fold_s, role, _site, case_id = line.split("\t")
        folds.setdefault(int(fold_s), ([], []))
        folds[int(fold_s)][0 if role == "train" else 1].append(case_id)
    return folds


def prepare_slices(manifest_path: str | Path, out_dir: str | Path, seed: int = 0) -> Path:
    """Extract every axial slice intersecting the phantom plus an equal
    number of randomly chosen negative slices; write one .npz per slice and
    a tab-separated index. Deterministic for a fixed seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    rows = []
    for entry in read_manifest(manifest_path):
        volume = mhd.read(entry.volume_path)
        labels = mhd.read(entry.label_path)
        positive = [int(z) for z in range(labels.data.shape[0]) if labels.data[z].any()]
        negative_pool = [z for z in range(labels.data.shape[0]) if z not in positive]
        n_neg = min(len(positive), len(negative_pool))
        chosen = sorted(rng.choice(negative_pool, size=n_neg, replace=False).tolist()) if n_neg else []
        for z in positive + chosen:
            name = f"{entry.case_id}_z{z:03d}.npz"
            np.savez_compressed(
                out / name,
                hu=normalize_hu(volume.data[z]),
                labels=labels.data[z].astype(np.uint8),
            )
            rows.append((name, entry.case_id, entry.site, z, int(z in positive)))
    with open(out / INDEX_NAME, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        for row in rows:
            writer.writerow(row)
    return out / INDEX_NAME


@dataclass
class SliceRecord:
    file: Path
    case_id: str
    site: str
    z: int
    positive: bool


def read_index(dataset_dir: str | Path) -> list[SliceRecord]:
    dataset_dir = Path(dataset_dir)
    records = []
    index = dataset_dir / INDEX_NAME
    text = index.read_text() if index.exists() else ""
    for line in text.splitlines():
        if not line.strip():
            continue
        name, case_id, site, z, positive = line.split("\t")
        records.append(SliceRecord(dataset_dir / name, case_id, site, int(z), positive == "1"))
    return records


def load_slice(record: SliceRecord) -> tuple[np.ndarray, np.ndarray]:
    with np.load(record.file) as npz:
        return npz["hu"], npz["labels"]
