import json
import math

import numpy as np
import numpy.testing as npt
import pytest
from PIL import Image

from unetsr.errors import ContractError, DimensionError
from unetsr.images import (ImageBuf, PairManifest, bicubic_resize, decode_image, encode_png,
                           from_tensor, make_pairs, to_tensor)
from unetsr.tensor import Tensor

from conftest import rect_image


def cubic_w(x):
    ax = abs(x)
    if ax <= 1.0:
        return 1.5 * ax ** 3 - 2.5 * ax ** 2 + 1.0
    if ax < 2.0:
        return -0.5 * ax ** 3 + 2.5 * ax ** 2 - 4.0 * ax + 2.0
    return 0.0


def resize_oracle_1d(row, n_out):
    """Per-pixel kernel-sum resample of one row: cubic kernel, widened on
    downscale, edge-clamped taps, normalized weights."""
    n_in = row.size
    scale = n_out / n_in
    fscale = min(scale, 1.0)
    support = 2.0 / fscale
    out = np.zeros(n_out)
    for i in range(n_out):
        center = (i + 0.5) / scale - 0.5
        acc = 0.0
        wsum = 0.0
        j = math.ceil(center - support)
        while j <= math.floor(center + support):
            wgt = cubic_w((j - center) * fscale)
            acc += wgt * row[min(max(j, 0), n_in - 1)]
            wsum += wgt
            j += 1
        out[i] = acc / wsum
    return out


def resize_oracle_2d(plane, out_h, out_w):
    tmp = np.stack([resize_oracle_1d(plane[:, j], out_h) for j in range(plane.shape[1])], axis=1)
    return np.stack([resize_oracle_1d(tmp[i, :], out_w) for i in range(out_h)], axis=0)


class TestBicubic:
    @pytest.mark.parametrize("out_h,out_w", [(9, 9), (17, 5), (64, 64), (3, 40)])
    def test_constant_preserved(self, out_h, out_w):
        buf = ImageBuf.from_array(np.full((21, 17, 3), 0.375))
        out = bicubic_resize(buf, out_h, out_w)
        npt.assert_allclose(out.pixels, 0.375, atol=1e-9, rtol=0)

    def test_identity_size(self, rng):
        buf = ImageBuf.from_array(rng.uniform(0, 1, (12, 15, 3)))
        out = bicubic_resize(buf, 12, 15)
        npt.assert_allclose(out.pixels, buf.pixels, atol=1e-9, rtol=0)

    def test_linear_ramp_reproduced_on_upscale(self):
        w = 24
        ramp = np.tile(np.linspace(0.0, 1.0, w), (8, 1))
        buf = ImageBuf.from_array(np.stack([ramp] * 3, axis=2))
        out = bicubic_resize(buf, 16, 2 * w)
        # source coordinate of each output column, clear of clamped borders
        step = 1.0 / (w - 1)
        for j in range(4, 2 * w - 4):
            src = (j + 0.5) / 2.0 - 0.5
            npt.assert_allclose(out.pixels[8, j, 0], src * step, atol=1e-6, rtol=0)

    def test_downscale_matches_kernel_sum_oracle(self, rng):
        plane = rng.uniform(0, 1, (224, 224))
        buf = ImageBuf.from_array(np.stack([plane] * 3, axis=2))
        out = bicubic_resize(buf, 112, 112)
        expected = resize_oracle_2d(plane, 112, 112)
        npt.assert_allclose(out.pixels[:, :, 0], expected, atol=1e-9, rtol=0)

    def test_upscale_matches_kernel_sum_oracle(self, rng):
        plane = rng.uniform(0, 1, (11, 13))
        buf = ImageBuf.from_array(np.stack([plane] * 3, axis=2))
        out = bicubic_resize(buf, 29, 17)
        expected = resize_oracle_2d(plane, 29, 17)
        npt.assert_allclose(out.pixels[:, :, 1], expected, atol=1e-9, rtol=0)

    def test_tensor_input_matches_imagebuf_path(self, rng):
        arr = rng.uniform(0, 1, (6, 7, 3))
        buf_out = bicubic_resize(ImageBuf.from_array(arr), 12, 14)
        t = Tensor(arr.transpose(2, 0, 1)[None])
        t_out = bicubic_resize(t, 12, 14)
        assert t_out.shape == (1, 3, 12, 14)
        npt.assert_allclose(t_out.data[0].transpose(1, 2, 0), buf_out.pixels, atol=1e-12)

    def test_zero_extent_rejected(self):
        with pytest.raises(ContractError):
            bicubic_resize(ImageBuf.from_array(np.zeros((4, 4, 3))), 0, 4)


class TestTensorConversion:
    def test_round_trip_lossless(self, rng, tmp_path):
        arr = rng.integers(0, 256, (9, 7, 3), dtype=np.uint8)
        path = tmp_path / "img.png"
        Image.fromarray(arr, mode="RGB").save(path)
        buf = decode_image(path)
        assert buf.pixels.min() >= 0.0 and buf.pixels.max() <= 1.0
        back = from_tensor(to_tensor(buf))
        npt.assert_array_equal((back.pixels * 255).round().astype(np.uint8), arr)

    def test_overrange_clamps(self):
        t = Tensor(np.full((1, 3, 2, 2), 1.5))
        buf = from_tensor(t)
        npt.assert_array_equal(buf.pixels * 255, 255.0)

    def test_half_rounds_away_from_zero(self):
        t = Tensor(np.full((1, 3, 2, 2), 0.5))
        buf = from_tensor(t)
        npt.assert_array_equal(buf.pixels * 255, 128.0)

    def test_layout(self, rng):
        arr = rng.uniform(0, 1, (5, 4, 3))
        t = to_tensor(ImageBuf.from_array(arr))
        assert t.shape == (1, 3, 5, 4)
        npt.assert_array_equal(t.data[0, 2], arr[:, :, 2])

    def test_from_tensor_shape_errors(self, rng):
        with pytest.raises(DimensionError):
            from_tensor(Tensor(rng.uniform(size=(2, 3, 4, 4))))
        with pytest.raises(DimensionError):
            from_tensor(Tensor(rng.uniform(size=(1, 4, 4))))


class TestMakePairs:
    def _src_dir(self, tmp_path, n=2, seed=5):
        src = tmp_path / "src"
        src.mkdir()
        for i in range(n):
            img = (rect_image(seed + i, 48) * 255).astype(np.uint8)
            Image.fromarray(img, mode="RGB").save(src / f"img_{i}.png")
        return src

    @pytest.mark.parametrize("scale,lr_size", [(2, 112), (4, 56), (8, 28)])
    def test_table_sizes(self, tmp_path, scale, lr_size):
        src = self._src_dir(tmp_path, n=1)
        manifest = make_pairs(src, tmp_path / "out", scale)
        assert len(manifest) == 1
        entry = manifest.entries[0]
        with Image.open(entry.lr) as im:
            assert im.size == (lr_size, lr_size)
        with Image.open(entry.hr) as im:
            assert im.size == (224, 224)

    def test_layout_and_manifest(self, tmp_path):
        src = self._src_dir(tmp_path)
        out = tmp_path / "out"
        manifest = make_pairs(src, out, 2)
        assert (out / "hr" / "img_0.png").exists()
        assert (out / "x2" / "lr" / "img_0.png").exists()
        mpath = out / "x2" / "pairs.json"
        assert mpath.exists()
        payload = json.loads(mpath.read_text())
        assert payload == sorted(payload, key=lambda e: e["hr"])
        for e in payload:
            assert set(e) == {"lr", "hr", "scale"}

    def test_extent_invariant(self, tmp_path):
        src = self._src_dir(tmp_path)
        manifest = make_pairs(src, tmp_path / "out", 4)
        manifest.validate_extents()
        for e in manifest:
            with Image.open(e.lr) as lr, Image.open(e.hr) as hr:
                assert (lr.size[0] * e.scale, lr.size[1] * e.scale) == hr.size

    def test_rerun_is_byte_identical(self, tmp_path):
        src = self._src_dir(tmp_path)
        out = tmp_path / "out"
        make_pairs(src, out, 2)
        files = sorted(p for p in out.rglob("*") if p.is_file())
        snap = {p: p.read_bytes() for p in files}
        make_pairs(src, out, 2)
        for p, blob in snap.items():
            assert p.read_bytes() == blob, f"{p} changed between runs"

    def test_manifest_save_load_round_trip(self, tmp_path):
        src = self._src_dir(tmp_path)
        out = tmp_path / "out"
        make_pairs(src, out, 2)
        mpath = out / "x2" / "pairs.json"
        blob = mpath.read_bytes()
        loaded = PairManifest.load(mpath)
        # re-save with relative paths identical to the generator's
        rel = PairManifest(entries=[
            type(e)(lr=f"lr/{e.lr.rsplit('/', 1)[1]}", hr=f"../hr/{e.hr.rsplit('/', 1)[1]}",
                    scale=e.scale) for e in loaded])
        rel.save(mpath)
        assert mpath.read_bytes() == blob

    def test_undecodable_file_skipped_with_warning(self, tmp_path, caplog):
        src = self._src_dir(tmp_path, n=1)
        (src / "notes.txt").write_text("not an image")
        with caplog.at_level("WARNING"):
            manifest = make_pairs(src, tmp_path / "out", 2)
        assert len(manifest) == 1
        assert any("notes.txt" in rec.message for rec in caplog.records)

    def test_empty_dir_rejected(self, tmp_path):
        src = tmp_path / "empty"
        src.mkdir()
        with pytest.raises(ContractError):
            make_pairs(src, tmp_path / "out", 2)

    def test_bad_scale_rejected(self, tmp_path):
        with pytest.raises(ContractError):
            make_pairs(self._src_dir(tmp_path, n=1), tmp_path / "out", 3)

    def test_jpeg_and_bmp_decodable(self, tmp_path, rng):
        src = tmp_path / "src"
        src.mkdir()
        arr = (rect_image(3, 40) * 255).astype(np.uint8)
        Image.fromarray(arr, mode="RGB").save(src / "a.jpg", quality=92)
        Image.fromarray(arr, mode="RGB").save(src / "b.bmp")
        manifest = make_pairs(src, tmp_path / "out", 2)
        assert len(manifest) == 2
