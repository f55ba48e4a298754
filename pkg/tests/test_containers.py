"""Binary container round trips and corruption detection."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foleygen.containers import (
    MAGIC_CHECKPOINT,
    checkpoint_load,
    checkpoint_save,
    read_features,
    read_frames_raw,
    write_features,
    write_frames_raw,
)
from foleygen.errors import CodecError


class TestFramesRaw:
    def test_round_trip(self, tmp_path):
        stack = np.random.default_rng(0).integers(
            0, 256, size=(5, 8, 6), dtype=np.uint8)
        path = tmp_path / "frames.bin"
        write_frames_raw(path, stack)
        np.testing.assert_array_equal(read_frames_raw(path), stack)

    def test_rejects_wrong_rank(self, tmp_path):
        with pytest.raises(ValueError):
            write_frames_raw(tmp_path / "x.bin", np.zeros((4, 4),
                                                          dtype=np.uint8))

    def test_truncation_reports_offset(self, tmp_path):
        path = tmp_path / "frames.bin"
        write_frames_raw(path, np.zeros((2, 4, 4), dtype=np.uint8))
        data = path.read_bytes()
        path.write_bytes(data[:-5])
        with pytest.raises(CodecError) as err:
            read_frames_raw(path)
        assert err.value.offset is not None

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "frames.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(CodecError):
            read_frames_raw(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "frames.bin"
        write_frames_raw(path, np.zeros((1, 2, 2), dtype=np.uint8))
        path.write_bytes(path.read_bytes() + b"junk")
        with pytest.raises(CodecError):
            read_frames_raw(path)


class TestFeatures:
    def test_round_trip_f32_precision(self, tmp_path):
        feats = np.random.default_rng(1).normal(size=(7, 5))
        path = tmp_path / "feats.bin"
        write_features(path, feats)
        out = read_features(path)
        assert out.dtype == np.float64
        np.testing.assert_allclose(out, feats, atol=1e-6)

    def test_rejects_wrong_rank(self, tmp_path):
        with pytest.raises(ValueError):
            write_features(tmp_path / "x.bin", np.zeros(4))


class TestCheckpoint:
    def tensors(self):
        gen = np.random.default_rng(2)
        return {
            "enc.w": gen.normal(size=(3, 4)),
            "enc.b": gen.normal(size=4).astype(np.float32),
            "scalar": np.array(2.5),
        }

    def test_round_trip(self, tmp_path):
        path = tmp_path / "model.ckpt"
        tensors = self.tensors()
        checkpoint_save(path, tensors, "[a]\nk = 1\n", seed=42, step=7,
                        kind="fslstm")
        state = checkpoint_load(path)
        assert state["kind"] == "fslstm"
        assert state["seed"] == 42
        assert state["step"] == 7
        assert state["config_text"] == "[a]\nk = 1\n"
        assert set(state["tensors"]) == set(tensors)
        for name, arr in tensors.items():
            got = state["tensors"][name]
            assert got.dtype == (np.float32 if arr.dtype == np.float32
                                 else np.float64)
            np.testing.assert_array_equal(got, arr)

    def test_negative_seed_survives(self, tmp_path):
        path = tmp_path / "model.ckpt"
        checkpoint_save(path, {}, "", seed=-3)
        assert checkpoint_load(path)["seed"] == -3

    def test_config_digest_detects_corruption(self, tmp_path):
        path = tmp_path / "model.ckpt"
        checkpoint_save(path, {}, "[train]\nlr = 0.001\n", seed=0)
        data = bytearray(path.read_bytes())
        idx = data.find(b"0.001")
        data[idx:idx + 5] = b"0.999"
        path.write_bytes(bytes(data))
        with pytest.raises(CodecError) as err:
            checkpoint_load(path)
        assert "hash" in str(err.value)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_bytes(MAGIC_CHECKPOINT + struct.pack("<I", 99))
        with pytest.raises(CodecError) as err:
            checkpoint_load(path)
        assert "version" in str(err.value)

    def test_byte_identical_rewrites(self, tmp_path):
        tensors = self.tensors()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        checkpoint_save(a, tensors, "cfg", seed=1)
        checkpoint_save(b, tensors, "cfg", seed=1)
        assert a.read_bytes() == b.read_bytes()

    @given(st.lists(
        st.tuples(
            st.text(alphabet="abcdef.", min_size=1, max_size=12),
            st.integers(min_value=0, max_value=3),
        ),
        min_size=0, max_size=6, unique_by=lambda kv: kv[0]))
    @settings(max_examples=25, deadline=None)
    def test_arbitrary_tables_round_trip(self, tmp_path_factory, specs):
        gen = np.random.default_rng(3)
        tensors = {
            name: gen.normal(size=tuple(gen.integers(1, 4, size=nd)))
            for name, nd in specs
        }
        path = tmp_path_factory.mktemp("ckpt") / "t.ckpt"
        checkpoint_save(path, tensors, "", seed=0)
        out = checkpoint_load(path)["tensors"]
        assert set(out) == set(tensors)
        for name in tensors:
            np.testing.assert_array_equal(out[name], tensors[name])
