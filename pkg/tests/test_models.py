import struct

import numpy as np
import pytest

from robustlab.autodiff import Tensor
from robustlab.errors import ConfigurationError, IntegrityError
from robustlab.models import arch_names, build, load, save


class TestBuild:
    def test_unknown_arch_lists_valid_names(self):
        with pytest.raises(ConfigurationError, match="mini3, mini4"):
            build("resnet50", 0)

    def test_param_count_mini3(self):
        # 5*5*3*16+16 + 3*3*16*32+32 + 3*3*32*64+64 + 64*8+8
        expected = (5 * 5 * 3 * 16 + 16) + (3 * 3 * 16 * 32 + 32) \
            + (3 * 3 * 32 * 64 + 64) + (64 * 8 + 8)
        assert expected == 24872
        assert build("mini3", 0).param_count() == expected

    def test_param_count_mini4(self):
        extra = 3 * 3 * 64 * 64 + 64
        assert build("mini4", 0).param_count() == 24872 + extra

    def test_same_seed_identical_weights(self):
        a, b = build("mini3", 9), build("mini3", 9)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k].data, b.params[k].data)

    def test_different_seed_differs(self):
        a, b = build("mini3", 1), build("mini3", 2)
        assert not np.array_equal(a.params["conv1.weight"].data,
                                  b.params["conv1.weight"].data)

    def test_init_bounds_fan_in_scaled(self):
        net = build("mini3", 3)
        w = net.params["conv1.weight"].data
        bound = np.sqrt(6.0 / (3 * 5 * 5))
        assert np.abs(w).max() <= bound
        assert np.abs(net.params["conv1.bias"].data).max() == 0.0

    def test_zero_input_gives_equal_logits(self):
        net = build("mini3", 5)
        logits = net.forward(Tensor(np.zeros((2, 3, 32, 32), np.float32)))
        # bias-only path: every logit equals the fc bias (zero at init)
        assert np.ptp(logits.data) == 0.0

    def test_forward_shape_and_finite(self, rng):
        for arch in arch_names():
            net = build(arch, 0)
            x = rng.random((4, 3, 32, 32)).astype(np.float32)
            logits = net.forward(Tensor(x))
            assert logits.shape == (4, 8)
            assert np.isfinite(logits.data).all()

    def test_forward_pure_function(self, rng):
        net = build("mini3", 1)
        x = rng.random((3, 3, 32, 32)).astype(np.float32)
        a = net.forward(Tensor(x)).data
        b = net.forward(Tensor(x)).data
        np.testing.assert_array_equal(a, b)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        net = build("mini4", 11)
        net.meta.update({"regime": "standard", "epochs": 30, "train_seed": 11})
        path = tmp_path / "m.rlck"
        save(net, path)
        back = load(path)
        assert back.arch_name == "mini4"
        assert back.meta == net.meta
        for k in net.params:
            np.testing.assert_array_equal(back.params[k].data, net.params[k].data)

    def test_save_load_save_identical_bytes(self, tmp_path):
        net = build("mini3", 2)
        p1, p2 = tmp_path / "a.rlck", tmp_path / "b.rlck"
        save(net, p1)
        save(load(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_truncation_reports_expected_vs_actual(self, tmp_path):
        net = build("mini3", 2)
        path = tmp_path / "m.rlck"
        save(net, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 100])
        with pytest.raises(IOError, match="expected .* bytes"):
            load(path)

    def test_load_into_wrong_arch_names_tensor(self, tmp_path):
        net = build("mini3", 2)
        path = tmp_path / "m.rlck"
        save(net, path)
        raw = bytearray(path.read_bytes())
        # rewrite the header's arch to mini4: conv shapes then mismatch
        old = b'"arch": "mini3"'
        idx = raw.find(old)
        assert idx >= 0
        raw[idx:idx + len(old)] = b'"arch": "mini4"'
        path.write_bytes(raw)
        with pytest.raises(IntegrityError, match="conv"):
            load(path)

    def test_unknown_tensor_name_rejected(self, tmp_path):
        net = build("mini3", 2)
        path = tmp_path / "m.rlck"
        save(net, path)
        raw = bytearray(path.read_bytes())
        name = b"conv1.bias"
        idx = raw.find(name)
        raw[idx:idx + len(name)] = b"convX.bias"
        path.write_bytes(raw)
        with pytest.raises(IntegrityError, match="convX.bias"):
            load(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.rlck"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(IntegrityError, match="magic"):
            load(path)


class TestAblationHook:
    def test_ablate_single_channel_zeroes_map(self, rng):
        net = build("mini3", 4)
        x = rng.random((2, 3, 32, 32)).astype(np.float32)
        got = {}
        net.forward(Tensor(x), ablate=("conv2", 5), collect=got)
        assert np.all(got["conv2"][:, 5] == 0.0)
        assert np.any(got["conv2"][:, 4] != 0.0)

    def test_ablate_whole_last_layer_collapses_to_bias_argmax(self, rng):
        net = build("mini3", 4)
        # give the head a distinctive bias so the collapse target is unique
        net.params["fc.bias"].data[:] = rng.normal(0, 1, 8)
        x = rng.random((5, 3, 32, 32)).astype(np.float32)
        preds = net.predict(x, ablate=("conv3", None))
        assert (preds == int(net.params["fc.bias"].data.argmax())).all()

    def test_ablate_under_tape_rejected(self, rng):
        from robustlab.autodiff import Tape
        from robustlab.errors import UsageError
        net = build("mini3", 4)
        x = Tensor(rng.random((1, 3, 32, 32)).astype(np.float32))
        with Tape():
            with pytest.raises(UsageError):
                net.forward(x, ablate=("conv1", 0))

    def test_argmax_ties_break_to_lowest_index(self):
        net = build("mini3", 4)
        preds = net.predict(np.zeros((3, 3, 32, 32), np.float32))
        # zero input, zero bias: all logits equal, lowest class index wins
        assert (preds == 0).all()
