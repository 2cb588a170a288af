"""Tests for parameter sets, component registries and TNSR checkpoints."""

import struct

import numpy as np
import pytest

from cellattn.core import (
    ParameterSet,
    Registry,
    RunningStats,
    Tensor,
    decode_tensor,
    encode_tensor,
    glorot_uniform,
    load_checkpoint,
    load_tensor,
    save_checkpoint,
    save_tensor,
    zeros,
)
from cellattn.utils import AlreadyRegisteredError, ConfigurationError, DataIOError


class TestParameterSet:
    """Named trainable tensors and running statistics."""

    def setup_method(self):
        self.rng = np.random.default_rng(3)
        self.params = ParameterSet()
        self.params.bind("a.kernel", glorot_uniform((2, 3), self.rng))
        self.params.bind("a.bias", zeros((3,)))
        self.params.bind_buffer("a.bn", RunningStats.zeros(3))

    def test_bind_names_and_marks_trainable(self):
        """Binding sets the tensor name and requires_grad."""
        t = self.params.bind("b", Tensor(np.ones(2)))
        assert t.name == "b"
        assert t.requires_grad

    def test_duplicate_bind_raises(self):
        with pytest.raises(AlreadyRegisteredError):
            self.params.bind("a.bias", zeros((3,)))

    def test_override_allowed_when_requested(self):
        self.params.bind("a.bias", Tensor(np.ones(3)), allow_override=True)
        np.testing.assert_array_equal(self.params.get("a.bias").data, 1.0)

    def test_missing_name_raises(self):
        with pytest.raises(ConfigurationError):
            self.params.get("nope")

    def test_iteration_follows_registration_order(self):
        assert [t.name for t in self.params] == ["a.kernel", "a.bias"]

    def test_count_by_prefix(self):
        assert self.params.count() == 9
        assert self.params.count("a.bias") == 3

    def test_copy_is_independent(self):
        """Copies share no buffers with the original."""
        clone = self.params.copy()
        clone.get("a.kernel").data[...] = 0.0
        clone.get_buffer("a.bn").mean[...] = 5.0
        assert not np.all(self.params.get("a.kernel").data == 0.0)
        assert np.all(self.params.get_buffer("a.bn").mean == 0.0)

    def test_astype_float64(self):
        wide = self.params.astype(np.float64)
        assert all(t.dtype == np.float64 for t in wide)
        assert wide.equals(self.params.astype(np.float64))

    def test_state_includes_running_stats(self):
        state = self.params.state()
        assert "a.bn.running_mean" in state
        assert "a.bn.running_var" in state

    def test_contains_checks_buffers_too(self):
        assert "a.bn" in self.params
        assert "a.kernel" in self.params
        assert "missing" not in self.params


class TestRegistry:
    """String-keyed component registry."""

    def setup_method(self):
        self.registry: Registry[int] = Registry("widget")

    def test_bind_and_get(self):
        self.registry.bind("one", 1)
        assert self.registry.get("one") == 1
        assert "one" in self.registry

    def test_decorator_registration(self):
        @self.registry.register("fn")
        def fn():
            return 1

        assert self.registry.get("fn") is fn

    def test_unknown_name_lists_known(self):
        self.registry.bind("one", 1)
        with pytest.raises(ConfigurationError, match="one"):
            self.registry.get("two")

    def test_duplicate_raises_unless_override(self):
        self.registry.bind("one", 1)
        with pytest.raises(AlreadyRegisteredError):
            self.registry.bind("one", 2)
        self.registry.bind("one", 2, allow_override=True)
        assert self.registry.get("one") == 2


class TestTnsrFormat:
    """Binary tensor records."""

    def test_header_layout(self):
        """Magic, u32 rank, u64 dims then little-endian float32 values."""
        record = encode_tensor(np.arange(6, dtype=np.float64).reshape(2, 3))
        assert record[:4] == b"TNSR"
        assert struct.unpack_from("<I", record, 4)[0] == 2
        assert struct.unpack_from("<2Q", record, 8) == (2, 3)
        assert len(record) == 8 + 16 + 6 * 4

    def test_decode_returns_next_offset(self):
        blob = encode_tensor(np.ones(2)) + encode_tensor(np.zeros((1, 3)))
        first, offset = decode_tensor(blob)
        second, end = decode_tensor(blob, offset)
        assert first.shape == (2,)
        assert second.shape == (1, 3)
        assert end == len(blob)

    def test_bad_magic_raises(self):
        with pytest.raises(DataIOError):
            decode_tensor(b"NOPE" + b"\x00" * 12)

    def test_truncated_payload_raises(self):
        record = encode_tensor(np.ones(4))
        with pytest.raises(DataIOError):
            decode_tensor(record[:-2])

    def test_file_helpers(self, tmp_path):
        values = np.random.default_rng(0).random((3, 4, 4)).astype(np.float32)
        target = save_tensor(tmp_path / "x.tnsr", values)
        np.testing.assert_array_equal(load_tensor(target), values)

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(DataIOError):
            load_tensor(tmp_path / "absent.tnsr")


class TestCheckpoint:
    """Checkpoint save/load."""

    def setup_method(self):
        rng = np.random.default_rng(1)
        self.params = ParameterSet()
        self.params.bind("w", glorot_uniform((4, 2), rng))
        self.params.bind("b", zeros((2,)))
        stats = RunningStats.zeros(2)
        stats.mean[...] = [0.25, -0.5]
        self.params.bind_buffer("bn", stats)

    def test_values_and_metadata_survive(self, tmp_path):
        path = save_checkpoint(self.params, tmp_path / "m.tnsr", {"family": "mhl"})
        loaded, meta = load_checkpoint(path)
        assert loaded.equals(self.params)
        assert meta == {"family": "mhl"}
        assert loaded.get_buffer("bn").momentum == pytest.approx(0.9)

    def test_loaded_params_are_trainable(self, tmp_path):
        path = save_checkpoint(self.params, tmp_path / "m.tnsr")
        loaded, _ = load_checkpoint(path)
        assert all(t.requires_grad for t in loaded)

    def test_index_written_next_to_checkpoint(self, tmp_path):
        save_checkpoint(self.params, tmp_path / "m.tnsr")
        assert (tmp_path / "m.tnsr.json").exists()

    def test_foreign_index_rejected(self, tmp_path):
        path = save_checkpoint(self.params, tmp_path / "m.tnsr")
        (tmp_path / "m.tnsr.json").write_text('{"format": "other"}')
        with pytest.raises(DataIOError):
            load_checkpoint(path)

    def test_missing_checkpoint_raises(self, tmp_path):
        with pytest.raises(DataIOError):
            load_checkpoint(tmp_path / "absent.tnsr")
