import numpy as np
import pytest

from phantomcal.volume import (
    DensityVolume,
    HUVolume,
    ImageGrid,
    LabelMap,
    MetaImageError,
    binary_mask,
    read_volume,
    write_volume,
)


def grid(dims=(3, 4, 5), spacing=(1.0, 1.0, 1.0)):
    return ImageGrid(dims=dims, spacing=spacing)


class TestImageGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            ImageGrid(dims=(0, 1, 1))
        with pytest.raises(ValueError):
            ImageGrid(dims=(1, 1, 1), spacing=(1.0, 0.0, 1.0))

    def test_compatibility_tolerance(self):
        a = grid(spacing=(0.8, 0.8, 1.0))
        b = grid(spacing=(0.8 + 5e-7, 0.8, 1.0))
        c = grid(spacing=(0.8 + 5e-6, 0.8, 1.0))
        assert a.compatible(b)
        assert not a.compatible(c)
        assert not a.compatible(ImageGrid(dims=(3, 4, 6)))

    def test_x_fastest_linear_index(self):
        g = grid()
        nx, ny, nz = g.dims
        arr = np.arange(g.voxel_count).reshape(g.shape_zyx)
        flat = arr.ravel()
        for z in range(nz):
            for y in range(ny):
                for x in range(nx):
                    assert flat[x + nx * (y + ny * z)] == arr[z, y, x]


class TestRoundTrip:
    def test_single_voxel_short(self, tmp_path):
        v = HUVolume(ImageGrid((1, 1, 1)), np.array([[[-1024.0]]]))
        path = tmp_path / "one.mhd"
        write_volume(v, path)
        back = read_volume(path)
        assert isinstance(back, HUVolume)
        assert back.voxels[0, 0, 0] == -1024

    @pytest.mark.parametrize("kind", ["hu", "labels", "density"])
    def test_round_trip_exact(self, tmp_path, kind):
        rng = np.random.default_rng(7)
        g = ImageGrid((6, 5, 4), spacing=(0.8, 0.75, 2.5), origin=(-3.0, 1.5, 0.0))
        if kind == "hu":
            v = HUVolume(g, rng.integers(-1024, 3072, g.shape_zyx).astype(np.float64))
            back = read_volume(self._write(tmp_path, v))
            assert np.array_equal(back.voxels, v.voxels)
        elif kind == "labels":
            v = LabelMap(g, rng.integers(0, 6, g.shape_zyx).astype(np.uint8))
            back = read_volume(self._write(tmp_path, v))
            assert np.array_equal(back.labels, v.labels)
        else:
            v = DensityVolume(g, rng.normal(0, 100, g.shape_zyx).astype(np.float32))
            back = read_volume(self._write(tmp_path, v))
            assert np.array_equal(back.values, v.values)
        assert back.grid == v.grid

    @staticmethod
    def _write(tmp_path, v):
        path = tmp_path / "vol.mhd"
        write_volume(v, path)
        return path

    def test_write_is_deterministic(self, tmp_path):
        m = LabelMap(grid(), np.random.default_rng(1).integers(0, 6, grid().shape_zyx).astype(np.uint8))
        (tmp_path / "one").mkdir()
        (tmp_path / "two").mkdir()
        write_volume(m, tmp_path / "one" / "m.mhd")
        write_volume(m, tmp_path / "two" / "m.mhd")
        assert (tmp_path / "one" / "m.mhd").read_bytes() == (tmp_path / "two" / "m.mhd").read_bytes()
        assert (tmp_path / "one" / "m.raw").read_bytes() == (tmp_path / "two" / "m.raw").read_bytes()


class TestHeaderFormat:
    def test_exact_header_lines(self, tmp_path):
        g = ImageGrid((2, 3, 4), spacing=(0.8, 0.8, 1.0), origin=(0.0, -1.5, 2.0))
        write_volume(HUVolume(g, np.zeros(g.shape_zyx)), tmp_path / "v.mhd")
        lines = (tmp_path / "v.mhd").read_text().splitlines()
        assert lines == [
            "ObjectType = Image",
            "NDims = 3",
            "BinaryData = True",
            "BinaryDataByteOrderMSB = False",
            "DimSize = 2 3 4",
            "ElementSpacing = 0.8 0.8 1",
            "Offset = 0 -1.5 2",
            "ElementType = MET_SHORT",
            "ElementDataFile = v.raw",
        ]

    def test_density_maps_to_float(self, tmp_path):
        g = ImageGrid((2, 2, 2))
        write_volume(DensityVolume(g, np.zeros(g.shape_zyx)), tmp_path / "d.mhd")
        assert "ElementType = MET_FLOAT" in (tmp_path / "d.mhd").read_text()

    def test_readers_tolerate_extra_keys(self, tmp_path):
        g = ImageGrid((2, 2, 2))
        write_volume(LabelMap(g, np.zeros(g.shape_zyx, dtype=np.uint8)), tmp_path / "m.mhd")
        text = (tmp_path / "m.mhd").read_text()
        text = text.replace("ElementType", "CompressedData = False\nElementType", 1)
        (tmp_path / "m.mhd").write_text(text)
        assert isinstance(read_volume(tmp_path / "m.mhd"), LabelMap)


class TestReadErrors:
    def _header(self, tmp_path, *, dims="4 4 4", etype="MET_UCHAR", nbytes=100, **overrides):
        raw = tmp_path / "x.raw"
        raw.write_bytes(b"\0" * nbytes)
        fields = {
            "ObjectType": "Image",
            "NDims": "3",
            "BinaryData": "True",
            "BinaryDataByteOrderMSB": "False",
            "DimSize": dims,
            "ElementSpacing": "1 1 1",
            "Offset": "0 0 0",
            "ElementType": etype,
            "ElementDataFile": "x.raw",
        }
        fields.update(overrides)
        path = tmp_path / "x.mhd"
        path.write_text("".join(f"{k} = {v}\n" for k, v in fields.items()))
        return path

    def test_byte_count_mismatch(self, tmp_path):
        # 4x4x4 MET_UCHAR needs 64 bytes; a 100-byte payload must be rejected
        path = self._header(tmp_path, nbytes=100)
        with pytest.raises(MetaImageError, match="64"):
            read_volume(path)

    def test_unsupported_element_type(self, tmp_path):
        path = self._header(tmp_path, etype="MET_DOUBLE", nbytes=512)
        with pytest.raises(MetaImageError, match="ElementType"):
            read_volume(path)

    def test_missing_field(self, tmp_path):
        path = self._header(tmp_path, nbytes=64)
        text = "\n".join(l for l in path.read_text().splitlines() if not l.startswith("DimSize"))
        path.write_text(text)
        with pytest.raises(MetaImageError, match="DimSize"):
            read_volume(path)

    def test_garbled_dims(self, tmp_path):
        path = self._header(tmp_path, dims="4 four 4", nbytes=64)
        with pytest.raises(MetaImageError):
            read_volume(path)

    def test_label_code_above_five(self, tmp_path):
        path = self._header(tmp_path, dims="2 2 2", nbytes=8)
        (tmp_path / "x.raw").write_bytes(bytes([0, 1, 2, 3, 4, 5, 7, 0]))
        with pytest.raises(MetaImageError, match="exceeds 5"):
            read_volume(path)

    def test_missing_data_file(self, tmp_path):
        path = self._header(tmp_path, nbytes=64)
        (tmp_path / "x.raw").unlink()
        with pytest.raises(MetaImageError, match="does not exist"):
            read_volume(path)


class TestBinaryMask:
    def test_all_background(self):
        m = LabelMap(grid(), np.zeros(grid().shape_zyx, dtype=np.uint8))
        assert binary_mask(m, 2).labels.sum() == 0

    def test_constant_map(self):
        m = LabelMap(grid(), np.full(grid().shape_zyx, 3, dtype=np.uint8))
        assert binary_mask(m, 3).labels.all()

    def test_mixed_counts_match(self):
        rng = np.random.default_rng(3)
        m = LabelMap(grid(), rng.integers(0, 6, grid().shape_zyx).astype(np.uint8))
        for code in range(1, 6):
            assert binary_mask(m, code).labels.sum() == (m.labels == code).sum()
        total = sum(binary_mask(m, c).labels.sum() for c in range(1, 6))
        assert total == (m.labels != 0).sum()

    @pytest.mark.parametrize("code", [0, 6])
    def test_invalid_code(self, code):
        m = LabelMap(grid(), np.zeros(grid().shape_zyx, dtype=np.uint8))
        with pytest.raises(ValueError):
            binary_mask(m, code)
