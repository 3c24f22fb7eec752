import json
import struct

import numpy as np
import pytest

from fansmb.fans import build_model
from fansmb.fans.checkpoint import MAGIC, CheckpointError, dump_bytes, load, load_bytes, save


def _model():
    m = build_model(4, seed=3, output_blocks=2)
    rng = np.random.default_rng(0)
    for v in m.params.values():
        v += rng.normal(size=v.shape)
    return m


def test_round_trip_bit_exact(tmp_path):
    m = _model()
    save(tmp_path / "m.fans", m, extra={"means": [0.0, 1.5]})
    again, extra = load(tmp_path / "m.fans")
    assert again.config == m.config
    assert extra == {"means": [0.0, 1.5]}
    assert list(again.params) == list(m.params)
    assert all(np.array_equal(again.params[k], m.params[k]) for k in m.params)
    assert dump_bytes(again, extra) == (tmp_path / "m.fans").read_bytes()
    side = json.loads((tmp_path / "m.fans.json").read_text())
    assert side["format"] == "FANSv1" and side["config"]["d"] == 4


def test_header_layout():
    buf = dump_bytes(_model())
    assert buf.startswith(b"FANSv1")
    (clen,) = struct.unpack_from("<I", buf, len(MAGIC))
    doc = json.loads(buf[len(MAGIC) + 4:len(MAGIC) + 4 + clen])
    assert set(doc["config"]) >= {"d", "M", "compact", "dsf_dim", "flow_layers", "output_blocks"}


@pytest.mark.parametrize("mutate", [
    lambda b: b"NOTFANS" + b[7:],
    lambda b: b[:-5],
    lambda b: b + b"\x00",
    lambda b: b[:len(MAGIC) + 2],
])
def test_corrupt_inputs_rejected(mutate):
    with pytest.raises(CheckpointError):
        load_bytes(mutate(dump_bytes(_model())))
