"""Uniformly sampled signals and time-varying Hankel slices.

A signal ``z: [0, N T] -> R^sigma`` is stored on the grid ``t = i * delta``
with ``q = T / delta`` samples per segment (plus the closing sample at
``N T``). A Hankel slice at offset index ``k`` (time ``k * delta`` inside
``[0, T)``) has columns ``z(k delta + j T)``, read straight from the samples.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BoundsError, DimensionError
from .lti import InputFunction, _grid_count


@dataclass(frozen=True)
class SampledSignal:
    samples: np.ndarray
    delta: float
    T: float
    N: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples.reshape(-1, 1)
        if samples.ndim != 2 or samples.shape[1] < 1:
            raise DimensionError(f"samples must be (count, dim), got {samples.shape}")
        if int(self.N) < 1:
            raise ValueError("N must be at least 1")
        q = _grid_count(self.T, self.delta, what="T")
        expected = int(self.N) * q + 1
        if samples.shape[0] != expected:
            raise DimensionError(f"expected N*q+1 = {expected} samples, got {samples.shape[0]}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "T", float(self.T))

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def q(self) -> int:
        """Samples per segment."""
        return int(round(self.T / self.delta))

    @property
    def times(self) -> np.ndarray:
        return self.delta * np.arange(self.samples.shape[0])

    def scaled(self, factor: float) -> "SampledSignal":
        return SampledSignal(self.samples * factor, self.delta, self.T, self.N)

    @classmethod
    def from_function(cls, fn: InputFunction, delta: float, T: float, N: int) -> "SampledSignal":
        q = _grid_count(T, delta, what="T")
        return cls(fn(delta * np.arange(N * q + 1)), delta, T, N)


@dataclass(frozen=True)
class HankelSlice:
    offset_index: int
    matrix: np.ndarray


def _check_offset(z: SampledSignal, k: int) -> None:
    if not 0 <= k < z.q:
        raise BoundsError(f"offset index {k} outside [0, {z.q})")


def hankel_row(z: SampledSignal, a: int, b: int, k: int) -> HankelSlice:
    """``[z(k delta + a T), ..., z(k delta + b T)]`` as a ``dim x (b-a+1)`` matrix.

    ``a == b`` is accepted (a single column), which deep stacks of full depth need.
    """
    if not 0 <= a <= b <= z.N - 1:
        raise BoundsError(f"need 0 <= a <= b <= N-1 = {z.N - 1}, got a={a}, b={b}")
    _check_offset(z, k)
    idx = k + z.q * np.arange(a, b + 1)
    return HankelSlice(k, z.samples[idx].T.copy())


def hankel_deep(z: SampledSignal, L: int, k: int) -> HankelSlice:
    """Stack of ``hankel_row(z, l, N-L+l, k)`` for ``l = 0..L-1``; shape ``(dim L) x (N-L+1)``."""
    if not 1 <= L <= z.N:
        raise BoundsError(f"depth L={L} outside [1, N={z.N}]")
    _check_offset(z, k)
    rows = [hankel_row(z, l, z.N - L + l, k).matrix for l in range(L)]
    return HankelSlice(k, np.vstack(rows))


def dt_hankel(seq, L: int) -> np.ndarray:
    """Classic block Hankel matrix of depth ``L`` of a sequence of vectors ``seq[i]``."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq.reshape(-1, 1)
    M = seq.shape[0]
    if not 1 <= L <= M:
        raise BoundsError(f"depth L={L} outside [1, {M}]")
    cols = M - L + 1
    return np.vstack([seq[l:l + cols].T for l in range(L)])


def derivative_signal(z: SampledSignal, source: InputFunction | None = None) -> SampledSignal:
    """Time derivative of ``z`` on the same grid.

    With an analytic ``source`` its right-derivative is sampled exactly.
    Otherwise finite differences are taken separately on each segment's
    samples ``[iT, (i+1)T)`` (the last segment also owns ``N T``): central in
    the interior, second-order one-sided at segment ends, so no difference
    ever straddles a segment boundary.
    """
    if source is not None:
        return SampledSignal(source.derivative(z.times), z.delta, z.T, z.N)
    q = z.q
    if q < 2:
        raise ValueError("finite differences need at least two samples per segment")
    out = np.empty_like(z.samples)
    for i in range(z.N):
        lo = i * q
        hi = (i + 1) * q + (1 if i == z.N - 1 else 0)
        block = z.samples[lo:hi]
        edge = 2 if block.shape[0] >= 3 else 1
        out[lo:hi] = np.gradient(block, z.delta, axis=0, edge_order=edge)
    return SampledSignal(out, z.delta, z.T, z.N)


def signal_to_csv(z: SampledSignal) -> str:
    """CSV text with header ``t,ch0,ch1,...`` and 17-significant-digit values."""
    buf = io.StringIO()
    buf.write(",".join(["t"] + [f"ch{c}" for c in range(z.dim)]) + "\n")
    for t, row in zip(z.times, z.samples):
        buf.write(",".join(format_float(v) for v in (t, *row)) + "\n")
    return buf.getvalue()


def signal_from_csv(text_or_path, T: float, N: int) -> SampledSignal:
    """Parse CSV written by :func:`signal_to_csv`; ``delta`` is read from the time column."""
    if isinstance(text_or_path, Path):
        text = text_or_path.read_text()
    else:
        text = text_or_path
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if not header or header[0] != "t":
        raise ValueError("CSV header must start with 't'")
    rows = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    if rows.shape[0] < 2:
        raise ValueError("CSV needs at least two rows")
    delta = float(rows[1, 0] - rows[0, 0])
    # Recover the exact step the writer used, not the rounded difference.
    q = int(round(T / delta))
    return SampledSignal(rows[:, 1:], T / q, T, N)


def format_float(v: float) -> str:
    return format(float(v), ".17g")
