"""Slice-wise inference with Monte-Carlo dropout: argmax of the mean
softmax over stochastic passes, exported as a MET_UCHAR label map (plus an
optional per-voxel entropy volume).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from . import mhd
from .data import normalize_hu
from .model import enable_mc_dropout
from .train import load_checkpoint


def _mean_softmax(model, hu_slices: torch.Tensor, mc_samples: int, seed: int) -> torch.Tensor:
    """(N, 6, H, W) mean class probabilities over ``mc_samples`` passes."""
    model.eval()
    if mc_samples <= 1:
        with torch.no_grad():
            return torch.softmax(model(hu_slices), dim=1)
    enable_mc_dropout(model)
    torch.manual_seed(seed)
    acc = None
    with torch.no_grad():
        for _ in range(mc_samples):
            probs = torch.softmax(model(hu_slices), dim=1)
            acc = probs if acc is None else acc + probs
    model.eval()
    return acc / mc_samples


def predict_volume(
    checkpoint_path: str | Path,
    volume_path: str | Path,
    out_path: str | Path,
    mc_samples: int = 8,
    uncertainty_path: str | Path | None = None,
    batch_size: int = 4,
    seed: int = 0,
) -> Path:
    """Segment a HU volume and write the label map on the input grid.

    With ``mc_samples`` = 1 this is a plain deterministic forward pass. The
    optional uncertainty volume holds the entropy (nats) of the mean softmax.
    """
    model, _ = load_checkpoint(checkpoint_path)
    volume = mhd.read(volume_path)
    hu = normalize_hu(volume.data)
    nz = hu.shape[0]

    labels = np.empty(volume.data.shape, dtype=np.uint8)
    entropy = np.empty(volume.data.shape, dtype=np.float32) if uncertainty_path else None
    for start in range(0, nz, batch_size):
        chunk = torch.from_numpy(hu[start : start + batch_size]).unsqueeze(1)
        probs = _mean_softmax(model, chunk, mc_samples, seed + start).numpy()
        labels[start : start + batch_size] = probs.argmax(axis=1).astype(np.uint8)
        if entropy is not None:
            p = np.clip(probs, 1e-12, 1.0)
            ent = -(p * np.log(p)).sum(axis=1)
            ent[probs.max(axis=1) >= 1.0] = 0.0  # fully confident pixels carry no entropy
            entropy[start : start + batch_size] = ent.astype(np.float32)

    out_path = Path(out_path)
    mhd.write(mhd.Volume(labels, volume.spacing, volume.origin), out_path)
    if entropy is not None:
        mhd.write(mhd.Volume(entropy, volume.spacing, volume.origin), Path(uncertainty_path))
    return out_path
