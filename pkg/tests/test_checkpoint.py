"""
Module: tests.test_checkpoint
Purpose: Binary checkpoint layout, round trips and schema checks
"""

import json
import struct
import sys
from pathlib import Path

import pytest
import torch

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from sr_brcnn.errors import SchemaError
from sr_brcnn.models.brcnn import ModelConfig, ModelParams, build_schema
from sr_brcnn.models.checkpoint import (
    MAGIC,
    VERSION,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from sr_brcnn.structreg import CutKind, CutStrategy, extract_sdp

from conftest import fig_tree


def _params(relations=("Located", "Near"), seed=3):
    path = extract_sdp(fig_tree(), 2, 7)
    config = ModelConfig(word_dim=4, rel_dim=3, conv_dim=5, alpha=0.25)
    params = ModelParams(build_schema([path], relations, config, CutStrategy(CutKind.RANDOM, 0.2, 17)))
    params.reset_parameters(seed)
    return params


def test_header_layout():
    """magic, u32 version, u32 schema length, schema JSON, u32 tensor count."""
    params = _params()
    data = encode_checkpoint(params)

    assert data[:4] == MAGIC == b"SRBR"
    (version,) = struct.unpack("<I", data[4:8])
    assert version == VERSION == 1
    (schema_len,) = struct.unpack("<I", data[8:12])
    schema = json.loads(data[12:12 + schema_len].decode("utf-8"))
    assert schema["relations"] == ["Located", "Near"]
    assert schema["alpha"] == 0.25
    assert schema["strategy"] == ["random", 0.2, 17]

    offset = 12 + schema_len
    (count,) = struct.unpack("<I", data[offset:offset + 4])
    assert count == len(list(params.parameters()))

    # first tensor: name, ndim, u64 dims, f64 data
    offset += 4
    (name_len,) = struct.unpack("<I", data[offset:offset + 4])
    name = data[offset + 4:offset + 4 + name_len].decode("utf-8")
    assert name == "word_table"
    offset += 4 + name_len
    (ndim,) = struct.unpack("<I", data[offset:offset + 4])
    dims = struct.unpack(f"<{ndim}Q", data[offset + 4:offset + 4 + 8 * ndim])
    assert dims == tuple(params.word_table.shape)
    offset += 4 + 8 * ndim
    (first,) = struct.unpack("<d", data[offset:offset + 8])
    assert first == float(params.word_table[0, 0])


def test_round_trip_is_exact(tmp_path):
    params = _params()
    path = save_checkpoint(tmp_path / "run" / "best.ckpt", params)
    loaded = load_checkpoint(path)

    assert loaded.schema == params.schema
    for (name, p), (_, q) in zip(params.named_parameters(), loaded.named_parameters()):
        assert torch.equal(p, q), f"{name} changed in the round trip"
    assert encode_checkpoint(loaded) == path.read_bytes(), "re-encoding gives identical bytes"
    assert not (tmp_path / "run" / "best.ckpt.tmp").exists()


def test_relation_mismatch_names_both_sizes(tmp_path):
    path = save_checkpoint(tmp_path / "k2.ckpt", _params())
    with pytest.raises(SchemaError) as info:
        load_checkpoint(path, expected_relations=("Located", "Near", "Family"))
    assert "K=2" in str(info.value) and "K=3" in str(info.value)
    assert load_checkpoint(path, expected_relations=("Located", "Near")).schema.labels.num_relations == 2


@pytest.mark.parametrize("corrupt,needle", [
    (lambda d: b"XXXX" + d[4:], "bad magic"),
    (lambda d: d[:4] + struct.pack("<I", 2) + d[8:], "version 2"),
    (lambda d: d[:-3], "truncated"),
    (lambda d: d + b"\x00", "trailing"),
])
def test_corrupt_files_rejected(corrupt, needle):
    data = corrupt(encode_checkpoint(_params()))
    with pytest.raises(SchemaError) as info:
        decode_checkpoint(data, source="x.ckpt")
    assert needle in str(info.value), str(info.value)


def test_tensor_shape_must_match_schema():
    """A checkpoint whose schema says K=3 cannot carry K=2 classifier tensors."""
    small = encode_checkpoint(_params(("Located", "Near")))
    big = _params(("Located", "Near", "Family"))
    header_end = 12 + struct.unpack("<I", small[8:12])[0]
    big_schema = big.schema.to_json().encode("utf-8")
    spliced = MAGIC + struct.pack("<II", 1, len(big_schema)) + big_schema + small[header_end:]
    with pytest.raises(SchemaError):
        decode_checkpoint(spliced)


def test_missing_file(tmp_path):
    with pytest.raises(SchemaError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_feature_tables_round_trip():
    path = extract_sdp(fig_tree(), 2, 7)
    config = ModelConfig(word_dim=4, rel_dim=3, pos_dim=2, ner_dim=2, conv_dim=5)
    params = ModelParams(build_schema([path], ("Located", "Near"), config, entity_types=["PER", "LOC"]))
    params.reset_parameters(5)

    loaded = decode_checkpoint(encode_checkpoint(params))
    assert loaded.schema.ner_vocab == params.schema.ner_vocab
    assert torch.equal(loaded.pos_table, params.pos_table)
    assert torch.equal(loaded.ner_table, params.ner_table)
