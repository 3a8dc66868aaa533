import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spikedvfs.synapse import (
    RowTable,
    SynapseEncodingError,
    SynapseRow,
    decode_synapse_word,
    decode_words,
    encode_synapse_word,
    encode_words,
    read_rows,
    write_rows,
)

fields = st.tuples(
    st.integers(0, 0xFFFF), st.integers(0, 0xFF), st.integers(0, 1), st.integers(0, 0xF)
)


def pack_by_string(weight, target, syn_type, delay):
    """Reference packing via binary strings, MSB first."""
    bits = "000" + format(delay, "04b") + format(syn_type, "01b") + format(target, "08b") + format(weight, "016b")
    assert len(bits) == 32
    return int(bits, 2)


def test_zero_word():
    assert encode_synapse_word(0, 0, 0, 0) == 0


def test_all_ones_word():
    assert encode_synapse_word(0xFFFF, 0xFF, 1, 0xF) == 0x1FFFFFFF


def test_mixed_word():
    assert encode_synapse_word(1, 2, 0, 3) == 0x06020001


@given(fields)
def test_round_trip_and_reference_layout(f):
    word = encode_synapse_word(*f)
    assert word == pack_by_string(*f)
    assert word >> 29 == 0
    assert decode_synapse_word(word) == f


@pytest.mark.parametrize("weight", [0, 1, 0x8000, 0xFFFF])
@pytest.mark.parametrize("target", [0, 1, 0x80, 0xFF])
@pytest.mark.parametrize("syn_type", [0, 1])
@pytest.mark.parametrize("delay", [0, 1, 8, 15])
def test_corner_bits(weight, target, syn_type, delay):
    w = encode_synapse_word(weight, target, syn_type, delay)
    assert decode_synapse_word(w) == (weight, target, syn_type, delay)


@pytest.mark.parametrize(
    "bad", [(-1, 0, 0, 0), (0x10000, 0, 0, 0), (0, 256, 0, 0), (0, 0, 2, 0), (0, 0, 0, 16), (0, 0, 0, -1)]
)
def test_out_of_range_fields(bad):
    with pytest.raises(SynapseEncodingError):
        encode_synapse_word(*bad)


def test_decode_rejects_high_bits():
    with pytest.raises(SynapseEncodingError):
        decode_synapse_word(1 << 29)


@given(st.lists(fields, min_size=0, max_size=40))
def test_vectorised_codec_matches_scalar(items):
    if items:
        cols = list(zip(*items))
    else:
        cols = [[], [], [], []]
    words = encode_words(*cols)
    assert [int(w) for w in words] == [encode_synapse_word(*f) for f in items]
    dec = decode_words(words)
    assert [tuple(int(c[i]) for c in dec) for i in range(len(items))] == list(items)


def test_vectorised_rejects_out_of_range():
    with pytest.raises(SynapseEncodingError):
        encode_words([0], [0], [0], [16])


def test_row_table_lookup_and_gather():
    sources = np.array([5, 2, 5, 5, 2])
    words = np.arange(5, dtype=np.uint32)
    table = RowTable(sources, words, n_sources=8, empty_rows=[7])
    assert table.fanout(5) == 3 and table.fanout(2) == 2
    assert table.row(5).words.tolist() == [0, 2, 3]
    assert table.row(7).fanout == 0
    assert table.has_entry(7) and not table.has_entry(3) and not table.has_entry(99)
    with pytest.raises(KeyError):
        table.row(3)
    assert table.gather(np.array([2, 5, 2])).tolist() == [1, 4, 0, 2, 3, 1, 4]
    assert table.input_sources().tolist() == [2, 5, 7]
    assert sorted(table.fanouts().tolist()) == [0, 2, 3]


def test_row_file_round_trip(tmp_path):
    rows = [SynapseRow(3, np.array([0x06020001, 0x1FFFFFFF], dtype=np.uint32)), SynapseRow(9)]
    path = tmp_path / "rows.bin"
    write_rows(path, rows)
    data = path.read_bytes()
    # little-endian: source 3, length 2, then the two words
    assert data[:8] == bytes([3, 0, 0, 0, 2, 0, 0, 0])
    assert data[8:12] == bytes([0x01, 0x00, 0x02, 0x06])
    back = read_rows(path)
    assert [(r.source_neuron, r.words.tolist()) for r in back] == [(3, [0x06020001, 0x1FFFFFFF]), (9, [])]


def test_truncated_row_file(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(np.array([1, 5, 0], dtype="<u4").tobytes())
    with pytest.raises(ValueError):
        read_rows(path)
