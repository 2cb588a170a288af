"""Tests for utils/helpers.py and utils/logging.py."""

import hashlib
import json
import logging

import pytest

from cellattn.utils import (
    DataIOError,
    configure_cli_logging,
    derive_rng,
    derive_seed,
    ensure_dir,
    file_sha256,
    read_json,
    to_json_text,
    write_json,
)


def test_derive_seed_is_stable() -> None:
    """Child seeds depend only on the seed and the parts."""
    assert derive_seed(0, "init", 1) == derive_seed(0, "init", 1)
    assert 0 <= derive_seed(0) < 2**64


def test_derive_seed_separates_parts() -> None:
    seeds = {
        derive_seed(0, "init", 1),
        derive_seed(0, "init", 2),
        derive_seed(1, "init", 1),
        derive_seed(0, "train", 1),
        derive_seed(0, "init1"),
    }
    assert len(seeds) == 5


def test_derive_rng_streams() -> None:
    a = derive_rng(4, "shuffle").random(3)
    b = derive_rng(4, "shuffle").random(3)
    c = derive_rng(4, "dropout").random(3)
    assert list(a) == list(b)
    assert list(a) != list(c)


def test_ensure_dir(tmp_path) -> None:
    target = tmp_path / "a" / "b"
    assert ensure_dir(target) == target
    assert target.is_dir()
    assert ensure_dir(target) == target


def test_ensure_dir_over_file(tmp_path) -> None:
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(DataIOError):
        ensure_dir(blocker / "sub")


def test_json_text_is_sorted() -> None:
    assert to_json_text({"b": 1, "a": [1, 2]}).index('"a"') < to_json_text(
        {"b": 1, "a": [1, 2]}
    ).index('"b"')
    assert to_json_text({}).endswith("\n")


def test_json_text_rejects_nan() -> None:
    with pytest.raises(ValueError):
        to_json_text({"loss": float("nan")})


def test_write_and_read_json(tmp_path) -> None:
    path = write_json(tmp_path / "x.json", {"k": [1, None]})
    assert read_json(path) == {"k": [1, None]}
    assert json.loads(path.read_text()) == {"k": [1, None]}


def test_read_json_errors(tmp_path) -> None:
    with pytest.raises(DataIOError):
        read_json(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataIOError):
        read_json(bad)


def test_file_sha256(tmp_path) -> None:
    path = tmp_path / "blob"
    path.write_bytes(b"cell")
    assert file_sha256(path) == hashlib.sha256(b"cell").hexdigest()
    with pytest.raises(DataIOError):
        file_sha256(tmp_path / "absent")


def test_configure_cli_logging() -> None:
    root = logging.getLogger("cellattn")
    handler = configure_cli_logging(verbose=True)
    try:
        assert handler in root.handlers
        assert root.level == logging.DEBUG
    finally:
        root.removeHandler(handler)
    handler = configure_cli_logging()
    try:
        assert root.level == logging.INFO
    finally:
        root.removeHandler(handler)
