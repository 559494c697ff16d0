import numpy as np
import pytest

from phantomcal import synth
from phantomcal.volume import ImageGrid


def small_grid(nz: int = 12) -> ImageGrid:
    """Reduced grid that still holds the full default phantom cross-section."""
    return ImageGrid(dims=(352, 208, nz), spacing=(0.8, 0.8, 2.5), origin=(0.0, 0.0, 0.0))


def make_case(site="A", noise=0.0, blur=0.0, seed=0, grid=None, sagitta=3.0, tilt=0.0,
              artifacts=synth.NO_ARTIFACTS, alpha=None, beta=None):
    spec = synth.site_template(site, grid or small_grid())
    sc = spec.scanner
    spec.scanner = synth.ScannerModel(
        alpha=alpha if alpha is not None else sc.alpha,
        beta=beta if beta is not None else sc.beta,
        noise_sd=noise,
        kernel_blur_sd=blur,
        seed=seed,
    )
    spec.deformation = synth.DeformationSpec(sagitta=sagitta, axial_tilt=tilt)
    spec.artifacts = artifacts
    return synth.build_case(spec)


@pytest.fixture(scope="session")
def noiseless_case():
    """Undeformed, unblurred case with an integer-valued rendering law."""
    gt, hu = make_case(noise=0.0, blur=0.0, sagitta=0.0, alpha=1.2, beta=-20.0)
    return gt, hu


def random_blob_mask(rng: np.random.Generator, shape=(16, 16, 16)) -> np.ndarray:
    """Sparse blobby mask: a couple of random balls plus salt noise."""
    nz, ny, nx = shape
    zz, yy, xx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    mask = np.zeros(shape, dtype=bool)
    for _ in range(int(rng.integers(1, 3))):
        cz, cy, cx = rng.uniform(2, np.array(shape) - 2)
        r = rng.uniform(1.5, 4.0)
        mask |= (zz - cz) ** 2 + (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    mask |= rng.random(shape) < 0.005
    if not mask.any():
        mask[tuple(rng.integers(0, s) for s in shape)] = True
    return mask
