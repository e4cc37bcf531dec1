import numpy as np
import pytest

from unetsr.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from unetsr.errors import CheckpointError
from unetsr.model import NetConfig, build
from unetsr.tensor import Tensor


def make_ckpt(seed=0, epoch=3, lr=5e-4):
    model = build(NetConfig(depth=2, scale=2, base_width=3, width_cap=32, seed=seed))
    rng = np.random.default_rng(seed + 50)
    adam_m = {n: rng.normal(size=t.shape) for n, t in model.params.items()}
    adam_v = {n: rng.uniform(0, 1, size=t.shape) for n, t in model.params.items()}
    return Checkpoint.from_model(model, adam_m=adam_m, adam_v=adam_v, adam_t=17,
                                 epoch=epoch, lr=lr)


class TestRoundTrip:
    def test_values_bit_exact(self, tmp_path):
        ckpt = make_ckpt()
        path = tmp_path / "a.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.config == ckpt.config
        assert loaded.epoch == ckpt.epoch
        assert loaded.lr == ckpt.lr
        assert loaded.adam_t == ckpt.adam_t
        for name, arr in ckpt.params.items():
            assert np.array_equal(loaded.params[name], arr)
        for name, arr in ckpt.adam_m.items():
            assert np.array_equal(loaded.adam_m[name], arr)
        for name, arr in ckpt.adam_v.items():
            assert np.array_equal(loaded.adam_v[name], arr)

    def test_save_load_save_identical_bytes(self, tmp_path):
        ckpt = make_ckpt()
        first = tmp_path / "a.ckpt"
        second = tmp_path / "b.ckpt"
        save_checkpoint(ckpt, first)
        save_checkpoint(load_checkpoint(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_build_model_reproduces_forward(self, tmp_path):
        model = build(NetConfig(depth=1, scale=2, base_width=2, width_cap=16, seed=1))
        ckpt = Checkpoint.from_model(model)
        path = tmp_path / "m.ckpt"
        save_checkpoint(ckpt, path)
        restored = load_checkpoint(path).build_model()
        x = Tensor(np.random.default_rng(2).uniform(0, 1, (1, 3, 8, 8)))
        assert np.array_equal(model.predict(x).data, restored.predict(x).data)


class TestCorruption:
    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(make_ckpt(), path)
        blob = path.read_bytes()
        path.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(make_ckpt(), path)
        path.write_bytes(path.read_bytes()[:20])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(make_ckpt(), path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(make_ckpt(), path)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_corrupt_header_json(self, tmp_path):
        path = tmp_path / "a.ckpt"
        save_checkpoint(make_ckpt(), path)
        blob = bytearray(path.read_bytes())
        blob[12] = ord("!")
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "nope.ckpt")
