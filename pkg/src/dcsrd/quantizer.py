"""Uniform scalar quantization and empirical (conditional) entropy.

Rates are measured the way an ideal entropy coder would spend them: the
plug-in entropy of symbol occurrence counts.  Counting is a map-reduce over
:class:`CountTable` objects, which merge associatively, so partitioned and
serial estimates agree exactly.
"""

import math
from dataclasses import dataclass

import numpy as np

from ._kernels import count_keys, quantize_symbols

#: Bit width reserved for the side-information bin index in packed joint keys.
_SIDE_BITS = 31
_SIDE_OFFSET = 1 << (_SIDE_BITS - 1)

CORRECTIONS = ("none", "miller-madow")


@dataclass(frozen=True)
class QuantizerSpec:
    step: float
    convention: str = "midtread"

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("quantizer step must be positive")
        if self.convention != "midtread":
            raise ValueError("only the midtread convention is supported")


@dataclass(frozen=True)
class SymbolStream:
    symbols: np.ndarray
    step: float


def quantize(y, spec):
    """Midtread quantizer: ``round(y / step)`` with ties away from zero."""
    if isinstance(spec, (int, float)):
        spec = QuantizerSpec(float(spec))
    return SymbolStream(quantize_symbols(np.ravel(y), spec.step), spec.step)


def dequantize(s):
    return s.symbols.astype(float) * s.step


@dataclass
class CountTable:
    """Occurrence counts of int64 keys.  ``merge`` is associative and commutative."""

    keys: np.ndarray
    counts: np.ndarray

    @classmethod
    def from_keys(cls, keys):
        k, c = count_keys(np.ravel(keys))
        return cls(k, c)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, np.int64), np.zeros(0, np.int64))

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def support_size(self):
        return int(self.keys.size)

    def merge(self, other):
        keys = np.concatenate((self.keys, other.keys))
        counts = np.concatenate((self.counts, other.counts))
        if keys.size == 0:
            return CountTable.empty()
        order = np.argsort(keys, kind="mergesort")
        keys, counts = keys[order], counts[order]
        starts = np.concatenate(([0], np.flatnonzero(np.diff(keys)) + 1))
        return CountTable(keys[starts], np.add.reduceat(counts, starts))

    def entropy(self, correction="none"):
        """Plug-in entropy in bits, optionally Miller-Madow corrected."""
        n = self.total
        if n == 0:
            raise ValueError("entropy of an empty table")
        p = self.counts / n
        h = float(-(p * np.log2(p)).sum())
        if correction == "miller-madow":
            h += (self.support_size - 1) / (2.0 * n * math.log(2))
        elif correction != "none":
            raise ValueError(f"correction must be one of {CORRECTIONS}")
        return max(h, 0.0)


def joint_keys(s1, b2):
    """Pack (symbol, side bin) pairs into single int64 keys."""
    s1 = np.asarray(s1, dtype=np.int64)
    b2 = np.asarray(b2, dtype=np.int64)
    if b2.size and (b2.min() < -_SIDE_OFFSET or b2.max() >= _SIDE_OFFSET):
        raise OverflowError("side-information bin index out of packing range")
    if s1.size and np.abs(s1).max() >= 1 << (62 - _SIDE_BITS):
        raise OverflowError("symbol out of packing range")
    return (s1 << _SIDE_BITS) + (b2 + _SIDE_OFFSET)


def side_bins(y2, side_step):
    if not side_step > 0:
        raise ValueError("side_step must be positive")
    return quantize_symbols(np.ravel(y2), side_step)


def empirical_entropy(s, correction="none"):
    """Entropy (bits/symbol) of a symbol stream from its occurrence counts."""
    symbols = s.symbols if isinstance(s, SymbolStream) else np.asarray(s)
    if symbols.size == 0:
        raise ValueError("empty symbol stream")
    return CountTable.from_keys(symbols).entropy(correction)


def conditional_entropy_from_tables(joint, side, correction="none", cap=None):
    """H(S|B) = H(S, B) - H(B) from merged count tables.

    Miller-Madow correction of the difference adds ``(m_joint - m_side)``
    occupied cells over ``2 n ln 2``.  The result is clipped to be
    non-negative.
    """
    h = joint.entropy("none") - side.entropy("none")
    if correction == "miller-madow":
        h += (joint.support_size - side.support_size) / (2.0 * joint.total * math.log(2))
    elif correction != "none":
        raise ValueError(f"correction must be one of {CORRECTIONS}")
    h = max(h, 0.0)
    if cap is not None:
        h = min(h, cap)
    return h


def empirical_conditional_entropy(s1, y2, side_step=None, correction="none"):
    """H(S1 | Q(Y2)) with Y2 binned by a midtread quantizer of width ``side_step``.

    ``side_step`` defaults to a quarter of the source quantizer step.  The
    result never exceeds the (equally corrected) unconditional entropy.
    """
    y2 = np.ravel(y2)
    if s1.symbols.size != y2.size:
        raise ValueError("s1 and y2 must have equal length")
    if s1.symbols.size == 0:
        raise ValueError("empty symbol stream")
    if side_step is None:
        side_step = s1.step / 4.0
    b2 = side_bins(y2, side_step)
    joint = CountTable.from_keys(joint_keys(s1.symbols, b2))
    side = CountTable.from_keys(b2)
    cap = empirical_entropy(s1, correction)
    return conditional_entropy_from_tables(joint, side, correction, cap=cap)
