"""Voxel-grid containers and MetaImage (.mhd + .raw) I/O.

All volumes share one memory layout: a numpy array indexed ``[z, y, x]``
(x fastest in memory, matching the raw-file sample order) together with an
:class:`ImageGrid` whose ``dims``/``spacing``/``origin`` fields are in
(x, y, z) order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

LABEL_BACKGROUND = 0
LABEL_BASE = 1  # urethane base, 0 mg/cm^3
ROD_LABELS = (2, 3, 4, 5)  # 50, 100, 150, 200 mg/cm^3
ALL_LABELS = (1, 2, 3, 4, 5)
LABEL_DENSITIES = {1: 0.0, 2: 50.0, 3: 100.0, 4: 150.0, 5: 200.0}

HU_AIR = -1000.0
HU_MIN = -1024.0
HU_MAX = 3071.0

SPACING_TOL = 1e-6  # mm, componentwise tolerance for grid compatibility

_ELEMENT_TYPES = {
    "MET_SHORT": np.dtype("<i2"),
    "MET_UCHAR": np.dtype("<u1"),
    "MET_FLOAT": np.dtype("<f4"),
}

# Header keys in the exact order writers emit them.
_HEADER_KEYS = (
    "ObjectType",
    "NDims",
    "BinaryData",
    "BinaryDataByteOrderMSB",
    "DimSize",
    "ElementSpacing",
    "Offset",
    "ElementType",
    "ElementDataFile",
)


class MetaImageError(ValueError):
    """Malformed or unsupported MetaImage file."""


class GridMismatchError(ValueError):
    """Two volumes do not live on compatible grids."""


@dataclass(frozen=True)
class ImageGrid:
    """Regular voxel lattice: dims in voxels, spacing/origin in mm.

    ``origin`` is the world position of the center of voxel (0, 0, 0).
    """

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be three integers >= 1, got {self.dims}")
        if len(spacing) != 3 or any(s <= 0 for s in spacing):
            raise ValueError(f"spacing must be three positive reals, got {self.spacing}")
        if len(origin) != 3:
            raise ValueError(f"origin must be three reals, got {self.origin}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def shape_zyx(self) -> tuple[int, int, int]:
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def compatible(self, other: "ImageGrid") -> bool:
        return self.dims == other.dims and all(
            abs(a - b) <= SPACING_TOL for a, b in zip(self.spacing, other.spacing)
        )

    def require_compatible(self, other: "ImageGrid") -> None:
        if not self.compatible(other):
            raise GridMismatchError(
                f"grids incompatible: dims {self.dims} vs {other.dims}, "
                f"spacing {self.spacing} vs {other.spacing}"
            )

    def axis_centers(self, axis: int) -> np.ndarray:
        """World coordinates of voxel centers along axis 0=x, 1=y, 2=z."""
        return self.origin[axis] + self.spacing[axis] * np.arange(self.dims[axis])

    def plane_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """World (X, Y) coordinate arrays for one axial slice, shape (ny, nx)."""
        x = self.axis_centers(0)
        y = self.axis_centers(1)
        return np.meshgrid(x, y, indexing="xy")


def _as_array(grid: ImageGrid, data, dtype) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.shape == (grid.voxel_count,):
        arr = arr.reshape(grid.shape_zyx)
    if arr.shape != grid.shape_zyx:
        raise ValueError(f"voxel array shape {arr.shape} does not match grid {grid.shape_zyx}")
    return arr


@dataclass
class HUVolume:
    """Radiodensity samples in HU.

    Values are kept as float64 so synthetic volumes preserve sub-HU detail;
    they are quantized to 16-bit integers when written to disk.
    """

    grid: ImageGrid
    voxels: np.ndarray

    def __post_init__(self):
        self.voxels = _as_array(self.grid, self.voxels, np.float64)


@dataclass
class LabelMap:
    """Voxel classification: 0 background, 1 base, 2-5 density rods."""

    grid: ImageGrid
    labels: np.ndarray

    def __post_init__(self):
        self.labels = _as_array(self.grid, self.labels, np.uint8)
        top = int(self.labels.max()) if self.labels.size else 0
        if top > 5:
            raise ValueError(f"label codes must be 0-5, found {top}")


@dataclass
class DensityVolume:
    """Equivalent bone density in mg/cm^3, 32-bit real samples."""

    grid: ImageGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = _as_array(self.grid, self.values, np.float32)


Volume = HUVolume | LabelMap | DensityVolume


def binary_mask(m: LabelMap, code: int) -> LabelMap:
    """Mask of one label: 1 where ``m == code``, else 0. ``code`` must be 1-5."""
    if code not in ALL_LABELS:
        raise ValueError(f"label code must be 1-5, got {code}")
    return LabelMap(m.grid, (m.labels == code).astype(np.uint8))


def _format_number(value: float) -> str:
    # Shortest decimal that round-trips; integral values carry no fraction.
    f = float(value)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def _header_text(grid: ImageGrid, element_type: str, data_name: str) -> str:
    nx, ny, nz = grid.dims
    values = {
        "ObjectType": "Image",
        "NDims": "3",
        "BinaryData": "True",
        "BinaryDataByteOrderMSB": "False",
        "DimSize": f"{nx} {ny} {nz}",
        "ElementSpacing": " ".join(_format_number(s) for s in grid.spacing),
        "Offset": " ".join(_format_number(o) for o in grid.origin),
        "ElementType": element_type,
        "ElementDataFile": data_name,
    }
    return "".join(f"{key} = {values[key]}\n" for key in _HEADER_KEYS)


def write_volume(v: Volume, path: str | Path) -> None:
    """Write ``v`` as a MetaImage header plus raw little-endian data file.

    Output bytes are deterministic for identical inputs. HU volumes are
    rounded to the nearest 16-bit integer.
    """
    path = Path(path)
    if isinstance(v, HUVolume):
        element_type = "MET_SHORT"
        data = np.clip(np.rint(v.voxels), -32768, 32767).astype("<i2")
    elif isinstance(v, LabelMap):
        element_type = "MET_UCHAR"
        data = v.labels.astype("<u1")
    elif isinstance(v, DensityVolume):
        element_type = "MET_FLOAT"
        data = v.values.astype("<f4")
    else:
        raise TypeError(f"cannot write volumes of type {type(v).__name__}")

    raw_path = path.with_suffix(".raw")
    path.write_bytes(_header_text(v.grid, element_type, raw_path.name).encode("ascii"))
    raw_path.write_bytes(data.tobytes())


def _parse_header(path: Path) -> dict[str, str]:
    fields: dict[str, str] = {}
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise MetaImageError(f"cannot read header {path}: {exc}") from exc
    for line in text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise MetaImageError(f"garbled header line in {path}: {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    return fields


def _parse_triple(fields: dict[str, str], key: str, cast, path: Path):
    if key not in fields:
        raise MetaImageError(f"missing header field {key} in {path}")
    parts = fields[key].split()
    if len(parts) != 3:
        raise MetaImageError(f"{key} must have 3 components in {path}, got {fields[key]!r}")
    try:
        return tuple(cast(p) for p in parts)
    except ValueError as exc:
        raise MetaImageError(f"garbled {key} in {path}: {fields[key]!r}") from exc


def read_volume(path: str | Path) -> Volume:
    """Read a MetaImage volume; the element type selects the return type.

    MET_SHORT decodes to :class:`HUVolume`, MET_UCHAR to :class:`LabelMap`
    (codes above 5 are rejected) and MET_FLOAT to :class:`DensityVolume`.
    """
    path = Path(path)
    fields = _parse_header(path)

    for key, expected in (
        ("ObjectType", "Image"),
        ("NDims", "3"),
        ("BinaryData", "True"),
        ("BinaryDataByteOrderMSB", "False"),
    ):
        if key not in fields:
            raise MetaImageError(f"missing header field {key} in {path}")
        if fields[key] != expected:
            raise MetaImageError(f"unsupported {key} = {fields[key]!r} in {path}")

    dims = _parse_triple(fields, "DimSize", int, path)
    spacing = _parse_triple(fields, "ElementSpacing", float, path)
    origin = _parse_triple(fields, "Offset", float, path)
    grid = ImageGrid(dims, spacing, origin)

    element_type = fields.get("ElementType")
    if element_type not in _ELEMENT_TYPES:
        raise MetaImageError(f"unsupported ElementType {element_type!r} in {path}")
    dtype = _ELEMENT_TYPES[element_type]

    data_name = fields.get("ElementDataFile")
    if not data_name or data_name.upper() in ("LOCAL", "LIST"):
        raise MetaImageError(f"unsupported ElementDataFile {data_name!r} in {path}")
    data_path = path.parent / data_name

    if not data_path.exists():
        raise MetaImageError(f"data file {data_path} does not exist")
    expected_bytes = grid.voxel_count * dtype.itemsize
    actual_bytes = data_path.stat().st_size
    if actual_bytes != expected_bytes:
        raise MetaImageError(
            f"{data_path}: expected {expected_bytes} bytes for dims {dims} "
            f"({element_type}), found {actual_bytes}"
        )
    flat = np.frombuffer(data_path.read_bytes(), dtype=dtype)

    if element_type == "MET_SHORT":
        return HUVolume(grid, flat.astype(np.float64))
    if element_type == "MET_UCHAR":
        if flat.size and int(flat.max()) > 5:
            raise MetaImageError(f"{data_path}: label code {int(flat.max())} exceeds 5")
        return LabelMap(grid, flat.copy())
    return DensityVolume(grid, flat.astype(np.float32))
