import json
import struct

import numpy as np
import pytest
from PIL import Image

from robustlab.dataset import gen_train
from robustlab.errors import FormatError
from robustlab.shardio import export_png, read_shard, to_uint8, write_shard


@pytest.fixture
def shard():
    return gen_train(77, 6)


class TestRoundTrip:
    def test_byte_identical_arrays(self, shard, tmp_path):
        path = tmp_path / "a.rlsh"
        write_shard(shard, path)
        back = read_shard(path)
        np.testing.assert_array_equal(back.images, shard.images)
        np.testing.assert_array_equal(back.labels, shard.labels)
        np.testing.assert_array_equal(back.shape_ids, shard.shape_ids)
        np.testing.assert_array_equal(back.texture_ids, shard.texture_ids)
        np.testing.assert_array_equal(back.fg_color_ids, shard.fg_color_ids)
        np.testing.assert_array_equal(back.bg_color_ids, shard.bg_color_ids)
        np.testing.assert_array_equal(back.fg_masks, shard.fg_masks)
        assert back.split == shard.split
        assert back.seed == shard.seed

    def test_rewrite_is_byte_identical(self, shard, tmp_path):
        p1, p2 = tmp_path / "a.rlsh", tmp_path / "b.rlsh"
        write_shard(shard, p1)
        write_shard(read_shard(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestFormatErrors:
    def test_bad_magic(self, shard, tmp_path):
        path = tmp_path / "a.rlsh"
        write_shard(shard, path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(raw)
        with pytest.raises(FormatError, match="magic"):
            read_shard(path)

    def test_version_bump_rejected(self, shard, tmp_path):
        path = tmp_path / "a.rlsh"
        write_shard(shard, path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 2)
        path.write_bytes(raw)
        with pytest.raises(FormatError, match="version 2"):
            read_shard(path)

    def test_truncation_reports_byte_offset(self, shard, tmp_path):
        path = tmp_path / "a.rlsh"
        write_shard(shard, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 7])
        with pytest.raises(IOError, match="expected .* bytes at offset"):
            read_shard(path)

    def test_trailing_garbage_rejected(self, shard, tmp_path):
        path = tmp_path / "a.rlsh"
        write_shard(shard, path)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(FormatError, match="trailing"):
            read_shard(path)


class TestPngExport:
    def test_quantization_bound_and_sidecar(self, shard, tmp_path):
        out = tmp_path / "png"
        export_png(shard, out)
        meta_lines = (out / "meta.jsonl").read_text().strip().split("\n")
        assert len(meta_lines) == len(shard)
        for i, line in enumerate(meta_lines):
            row = json.loads(line)
            assert row["index"] == i
            assert row["class_label"] == int(shard.labels[i])
            img = np.asarray(Image.open(out / row["png"]), dtype=np.float32) / 255.0
            src = shard.images[i].transpose(1, 2, 0)
            assert np.abs(img - src).max() <= 1.0 / 255.0 + 1e-7
            mask = np.asarray(Image.open(out / row["fg_mask_png"])) > 127
            np.testing.assert_array_equal(mask, shard.fg_masks[i])

    def test_rounding_half_up(self):
        img = np.full((3, 1, 1), 0.5 / 255.0, dtype=np.float32)
        # 0.5/255 * 255 = 0.5 exactly; half-up rounds to 1
        assert to_uint8(img)[0, 0, 0] == 1
