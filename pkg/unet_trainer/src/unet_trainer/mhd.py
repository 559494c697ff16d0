"""Minimal MetaImage (.mhd + .raw) I/O for the file contract shared with the
segmentation pipeline: 3D little-endian volumes, x-fastest, arrays [z, y, x].
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

_DTYPES = {
    "MET_SHORT": np.dtype("<i2"),
    "MET_UCHAR": np.dtype("<u1"),
    "MET_FLOAT": np.dtype("<f4"),
}
_TYPE_NAMES = {v: k for k, v in _DTYPES.items()}

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


@dataclass
class Volume:
    data: np.ndarray  # [z, y, x]
    spacing: tuple[float, float, float]  # (x, y, z) mm
    origin: tuple[float, float, float]


def read(path: str | Path) -> Volume:
    path = Path(path)
    fields: dict[str, str] = {}
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()

    dims = tuple(int(v) for v in fields["DimSize"].split())
    spacing = tuple(float(v) for v in fields["ElementSpacing"].split())
    origin = tuple(float(v) for v in fields["Offset"].split())
    dtype = _DTYPES[fields["ElementType"]]
    raw = (path.parent / fields["ElementDataFile"]).read_bytes()
    expected = dims[0] * dims[1] * dims[2] * dtype.itemsize
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} data bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype=dtype).reshape(dims[2], dims[1], dims[0]).copy()
    return Volume(data, spacing, origin)


def _fmt(x: float) -> str:
    f = float(x)
    if f == int(f) and abs(f) < 1e15:
        return str(int(f))
    return repr(f)


def write(vol: Volume, path: str | Path) -> None:
    path = Path(path)
    dtype = np.dtype(vol.data.dtype).newbyteorder("<")
    if dtype not in _TYPE_NAMES:
        raise ValueError(f"unsupported dtype {vol.data.dtype}")
    nz, ny, nx = vol.data.shape
    raw_path = path.with_suffix(".raw")
    values = {
        "ObjectType": "Image",
        "NDims": "3",
        "BinaryData": "True",
        "BinaryDataByteOrderMSB": "False",
        "DimSize": f"{nx} {ny} {nz}",
        "ElementSpacing": " ".join(_fmt(s) for s in vol.spacing),
        "Offset": " ".join(_fmt(o) for o in vol.origin),
        "ElementType": _TYPE_NAMES[dtype],
        "ElementDataFile": raw_path.name,
    }
    path.write_text("".join(f"{k} = {values[k]}\n" for k in _HEADER_KEYS))
    raw_path.write_bytes(np.ascontiguousarray(vol.data, dtype=dtype).tobytes())
