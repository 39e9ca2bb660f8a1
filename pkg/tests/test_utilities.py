import hashlib
import json

import numpy as np
import pytest

from kernel_series import BasisKind, ConvSpec, IoError
from kernel_series.utilities import (JSONEncoder, diff_reports, dumps_report, file_digest, read_bytes,
                                     write_bytes_atomic, write_json_atomic)


def test_encoder_handles_numpy_and_enums():
    payload = {"arr": np.arange(3), "f": np.float64(0.5), "i": np.int64(7), "b": np.bool_(True),
               "kind": BasisKind.CHEBYSHEV, "spec": ConvSpec(stride=2)}
    decoded = json.loads(json.dumps(payload, cls=JSONEncoder))
    assert decoded["arr"] == [0, 1, 2]
    assert decoded["f"] == 0.5 and decoded["i"] == 7 and decoded["b"] is True
    assert decoded["kind"] == "cheb"
    assert decoded["spec"]["stride"] == 2


def test_encoder_rejects_unknown_objects():
    with pytest.raises(TypeError):
        json.dumps({"x": object()}, cls=JSONEncoder)


def test_report_keeps_key_order():
    text = dumps_report({"tool": "t", "version": "v", "a": 1})
    assert list(json.loads(text)) == ["tool", "version", "a"]
    assert text.endswith("\n")


def test_atomic_write_replaces_file(tmp_path):
    path = tmp_path / 'out.bin'
    path.write_bytes(b'old')
    write_bytes_atomic(path, b'new')
    assert path.read_bytes() == b'new'
    assert not (tmp_path / 'out.bin.tmp').exists()


def test_atomic_write_failure(tmp_path):
    with pytest.raises(IoError):
        write_bytes_atomic(tmp_path / 'missing' / 'out.bin', b'x')


def test_json_report_round_trip(tmp_path):
    write_json_atomic(tmp_path / 'r.json', {"values": np.array([1.5, 2.5])})
    assert json.loads((tmp_path / 'r.json').read_text(encoding='utf-8')) == {"values": [1.5, 2.5]}


def test_read_bytes_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_bytes(tmp_path / 'absent')
    with pytest.raises(IoError):
        read_bytes(tmp_path)


def test_file_digest(tmp_path):
    (tmp_path / 'f').write_bytes(b'abc')
    assert file_digest(tmp_path / 'f') == hashlib.sha256(b'abc').hexdigest()


def test_diff_reports():
    old = {"tool": "t", "rows": [{"n": 1, "mse": 0.5}], "wall_time_s": 1.0, "gone": 1}
    new = {"tool": "t", "rows": [{"n": 1, "mse": 0.25}], "wall_time_s": 9.0, "extra": {"a": 1}}
    assert diff_reports(old, new) == {
        "missing_in_new": ["gone"],
        "added_in_new": ["extra.a"],
        "changed": ["rows[0].mse"],
    }


def test_diff_identical_reports():
    report = {"a": [1, 2, {"b": None}], "wall_time_s": 0.1}
    assert not any(diff_reports(report, {**report, "wall_time_s": 0.2}).values())
