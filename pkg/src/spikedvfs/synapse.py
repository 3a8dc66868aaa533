"""32-bit synapse words and synapse rows.

Wire format of one synapse word (little-endian when written to disk)::

    bits [15:0]   weight        16-bit unsigned fixed point
    bits [23:16]  target        local neuron index on the target core
    bit  [24]     type          0 = excitatory, 1 = inhibitory
    bits [28:25]  delay         ring-buffer slot offset, 0..15
    bits [31:29]  always zero
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WEIGHT_BITS = 16
TARGET_BITS = 8
DELAY_BITS = 4

WEIGHT_MAX = (1 << WEIGHT_BITS) - 1
TARGET_MAX = (1 << TARGET_BITS) - 1
DELAY_MAX = (1 << DELAY_BITS) - 1

_TARGET_SHIFT = 16
_TYPE_SHIFT = 24
_DELAY_SHIFT = 25
_VALID_MASK = (1 << 29) - 1

EXCITATORY = 0
INHIBITORY = 1


class SynapseEncodingError(ValueError):
    """A synapse field does not fit its bit width."""


def encode_synapse_word(weight: int, target: int, syn_type: int, delay: int) -> int:
    if not 0 <= weight <= WEIGHT_MAX:
        raise SynapseEncodingError(f"weight {weight} outside [0, {WEIGHT_MAX}]")
    if not 0 <= target <= TARGET_MAX:
        raise SynapseEncodingError(f"target {target} outside [0, {TARGET_MAX}]")
    if syn_type not in (EXCITATORY, INHIBITORY):
        raise SynapseEncodingError(f"synapse type {syn_type} is not 0 or 1")
    if not 0 <= delay <= DELAY_MAX:
        raise SynapseEncodingError(f"delay {delay} outside [0, {DELAY_MAX}]")
    return (
        weight
        | (target << _TARGET_SHIFT)
        | (syn_type << _TYPE_SHIFT)
        | (delay << _DELAY_SHIFT)
    )


def decode_synapse_word(word: int) -> tuple[int, int, int, int]:
    """Return ``(weight, target, type, delay)``."""
    if word < 0 or word & ~_VALID_MASK:
        raise SynapseEncodingError(f"word {word:#010x} has bits set above bit 28")
    return (
        word & WEIGHT_MAX,
        (word >> _TARGET_SHIFT) & TARGET_MAX,
        (word >> _TYPE_SHIFT) & 1,
        (word >> _DELAY_SHIFT) & DELAY_MAX,
    )


def encode_words(weights, targets, types, delays) -> np.ndarray:
    """Vectorised :func:`encode_synapse_word`; returns a ``uint32`` array."""
    weights = np.asarray(weights, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    types = np.asarray(types, dtype=np.int64)
    delays = np.asarray(delays, dtype=np.int64)
    for name, arr, hi in (
        ("weight", weights, WEIGHT_MAX),
        ("target", targets, TARGET_MAX),
        ("type", types, 1),
        ("delay", delays, DELAY_MAX),
    ):
        if arr.size and (arr.min() < 0 or arr.max() > hi):
            raise SynapseEncodingError(f"{name} values outside [0, {hi}]")
    words = (
        weights
        | (targets << _TARGET_SHIFT)
        | (types << _TYPE_SHIFT)
        | (delays << _DELAY_SHIFT)
    )
    return words.astype(np.uint32)


def decode_words(words: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    w = np.asarray(words, dtype=np.uint32)
    return (
        (w & WEIGHT_MAX).astype(np.int64),
        ((w >> _TARGET_SHIFT) & TARGET_MAX).astype(np.int64),
        ((w >> _TYPE_SHIFT) & 1).astype(np.int64),
        ((w >> _DELAY_SHIFT) & DELAY_MAX).astype(np.int64),
    )


@dataclass
class SynapseRow:
    """All synapses from one source neuron onto one core."""

    source_neuron: int
    words: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint32))

    @property
    def fanout(self) -> int:
        return int(self.words.size)

    def __len__(self) -> int:
        return self.fanout


class RowTable:
    """Per-core lookup table: source id -> (start, length) into a word array.

    This is the SRAM lookup table plus the DRAM row storage of one core.
    """

    def __init__(self, sources: np.ndarray, words: np.ndarray, n_sources: int, empty_rows=()):
        sources = np.asarray(sources, dtype=np.int64)
        words = np.asarray(words, dtype=np.uint32)
        if sources.shape != words.shape:
            raise ValueError("sources and words must have equal length")
        order = np.argsort(sources, kind="stable")
        self.words = words[order]
        counts = np.bincount(sources, minlength=n_sources) if sources.size else np.zeros(n_sources, np.int64)
        self.length = counts.astype(np.int64)
        self.start = np.zeros(n_sources, dtype=np.int64)
        np.cumsum(self.length[:-1], out=self.start[1:])
        self.n_sources = n_sources
        # lookup-table entries; a source may be routed here with an empty row
        self.known = self.length > 0
        self.known[np.asarray(empty_rows, dtype=np.int64)] = True

    def has_entry(self, source: int) -> bool:
        return 0 <= source < self.n_sources and bool(self.known[source])

    def has_entries(self, sources: np.ndarray) -> np.ndarray:
        sources = np.asarray(sources, dtype=np.int64)
        ok = (sources >= 0) & (sources < self.n_sources)
        ok[ok] = self.known[sources[ok]]
        return ok

    def row(self, source: int) -> SynapseRow:
        if not self.has_entry(source):
            raise KeyError(source)
        s = self.start[source]
        return SynapseRow(source, self.words[s : s + self.length[source]])

    def fanout(self, source: int) -> int:
        return int(self.length[source])

    def gather(self, sources: np.ndarray) -> np.ndarray:
        """Concatenate the rows of ``sources`` into one word array."""
        sources = np.asarray(sources, dtype=np.int64)
        if sources.size == 0:
            return np.zeros(0, dtype=np.uint32)
        lengths = self.length[sources]
        total = int(lengths.sum())
        if total == 0:
            return np.zeros(0, dtype=np.uint32)
        starts = self.start[sources]
        # index = start of own row + offset within row
        offsets = np.arange(total) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        return self.words[np.repeat(starts, lengths) + offsets]

    def input_sources(self) -> np.ndarray:
        """Source ids with a lookup-table entry on this core."""
        return np.flatnonzero(self.known)

    def fanouts(self) -> np.ndarray:
        """Fan-outs of every input source of this core."""
        return self.length[self.known].copy()

    def rows(self) -> list[SynapseRow]:
        return [self.row(int(s)) for s in self.input_sources()]


def write_rows(path: str | Path, rows: list[SynapseRow]) -> None:
    """Dump rows as ``[source, length, word...]`` little-endian uint32 records."""
    chunks = []
    for row in rows:
        chunks.append(np.array([row.source_neuron, row.fanout], dtype="<u4"))
        chunks.append(np.asarray(row.words, dtype="<u4"))
    data = np.concatenate(chunks) if chunks else np.zeros(0, dtype="<u4")
    Path(path).write_bytes(data.tobytes())


def read_rows(path: str | Path) -> list[SynapseRow]:
    data = np.frombuffer(Path(path).read_bytes(), dtype="<u4")
    rows, i = [], 0
    while i < data.size:
        if i + 2 > data.size:
            raise ValueError("truncated synapse row file")
        src, n = int(data[i]), int(data[i + 1])
        if i + 2 + n > data.size:
            raise ValueError("truncated synapse row file")
        rows.append(SynapseRow(src, data[i + 2 : i + 2 + n].astype(np.uint32)))
        i += 2 + n
    return rows
