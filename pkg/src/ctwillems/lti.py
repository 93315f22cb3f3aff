"""Continuous-time LTI plant: input signals, RK4 simulation and exact discretization.

The simulator is the ground truth that data-based reconstructions are judged
against, so it never steps across an input discontinuity: every breakpoint of
the input is a step boundary, and the last RK4 stage of a step before a
breakpoint sees the left limit of the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError
from .linalg import as_matrix, matrix_exponential, numerical_rank

# Relative tolerance used to decide that a time instant sits on a breakpoint.
TIME_SNAP = 1e-10


def _snap_tol(t) -> np.ndarray:
    return TIME_SNAP * np.maximum(1.0, np.abs(t))


def _piece_index(t: np.ndarray, edges: np.ndarray, left: bool) -> np.ndarray:
    """Index of the piece containing ``t`` for pieces separated by ``edges``.

    Right-continuous by default: an instant on an edge belongs to the piece
    that starts there. With ``left=True`` it belongs to the piece that ends there.
    """
    tol = _snap_tol(t)
    if left:
        return np.searchsorted(edges, t - tol, side="right")
    return np.searchsorted(edges, t + tol, side="right")


class InputFunction:
    """Base class for vector-valued input signals ``u: [start, end] -> R^m``.

    Subclasses implement ``_value`` and ``_deriv`` on 1-D time arrays. Calling
    the object with a scalar returns an ``(m,)`` vector, with an array it
    returns ``(len(t), m)``.
    """

    m: int
    start: float = 0.0
    end: float = math.inf

    def __call__(self, t, left: bool = False) -> np.ndarray:
        return self._dispatch(self._value, t, left)

    def derivative(self, t, left: bool = False) -> np.ndarray:
        """Exact derivative; one-sided (right by default) at breakpoints."""
        return self._dispatch(self._deriv, t, left)

    def _dispatch(self, fn, t, left):
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        self._check_domain(ts)
        out = fn(ts, left)
        return out[0] if scalar else out

    def _check_domain(self, ts: np.ndarray) -> None:
        if ts.size == 0:
            return
        lo = self.start - _snap_tol(self.start)
        hi = self.end + (_snap_tol(self.end) if math.isfinite(self.end) else 0.0)
        if ts.min() < lo or ts.max() > hi:
            raise DomainError(
                f"input defined on [{self.start}, {self.end}], evaluated on [{ts.min()}, {ts.max()}]"
            )

    def covers(self, a: float, b: float) -> bool:
        return a >= self.start - _snap_tol(self.start) and (
            not math.isfinite(self.end) or b <= self.end + _snap_tol(self.end)
        )

    def breakpoints(self) -> np.ndarray:
        """Instants where the signal or its derivative may jump."""
        return np.empty(0)

    def __add__(self, other: "InputFunction") -> "InputFunction":
        return SumInput([self, other])

    def _value(self, ts, left):  # pragma: no cover - abstract
        raise NotImplementedError

    def _deriv(self, ts, left):  # pragma: no cover - abstract
        raise NotImplementedError

    def to_dict(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PiecewiseConstant(InputFunction):
    """Hold ``levels[i]`` on ``[i*hold, (i+1)*hold)``; defined on ``[0, N*hold]``.

    At the closing instant ``N*hold`` the last level is kept.
    """

    levels: np.ndarray
    hold: float

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        if levels.ndim == 1:
            levels = levels.reshape(-1, 1)
        if levels.ndim != 2 or levels.shape[0] < 1:
            raise DimensionError(f"levels must be (N, m), got shape {levels.shape}")
        if not self.hold > 0:
            raise ValueError("hold must be positive")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "hold", float(self.hold))

    @property
    def m(self) -> int:
        return self.levels.shape[1]

    @property
    def end(self) -> float:
        return self.levels.shape[0] * self.hold

    def breakpoints(self) -> np.ndarray:
        return self.hold * np.arange(1, self.levels.shape[0])

    def _value(self, ts, left):
        idx = _piece_index(ts, self.breakpoints(), left)
        return self.levels[idx]

    def _deriv(self, ts, left):
        return np.zeros((ts.size, self.m))

    def to_dict(self) -> dict:
        return {"kind": "piecewise_constant", "levels": self.levels.tolist(), "hold": self.hold}


@dataclass(frozen=True, eq=False)
class SquareWave(InputFunction):
    """Piecewise-constant signal with arbitrary breakpoints.

    ``levels`` has one more row than ``breakpoints``; ``levels[j]`` holds on
    ``[breakpoints[j-1], breakpoints[j])``.
    """

    levels: np.ndarray
    breakpoints_: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        levels = np.array(self.levels, dtype=float)
        if levels.ndim == 1:
            levels = levels.reshape(-1, 1)
        bps = np.sort(np.atleast_1d(np.array(self.breakpoints_, dtype=float)))
        if levels.shape[0] != bps.size + 1:
            raise DimensionError("square wave needs len(levels) == len(breakpoints) + 1")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "breakpoints_", bps)

    @property
    def m(self) -> int:
        return self.levels.shape[1]

    def breakpoints(self) -> np.ndarray:
        return self.breakpoints_

    def _value(self, ts, left):
        return self.levels[_piece_index(ts, self.breakpoints_, left)]

    def _deriv(self, ts, left):
        return np.zeros((ts.size, self.m))

    def to_dict(self) -> dict:
        return {
            "kind": "square_wave",
            "levels": self.levels.tolist(),
            "breakpoints": self.breakpoints_.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SinusoidSum(InputFunction):
    """``u_c(t) = sum_k a[c,k] sin(w[c,k] t + phi[c,k])`` for each channel ``c``."""

    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray | None = None

    def __post_init__(self):
        a = np.atleast_2d(np.array(self.amplitudes, dtype=float))
        w = np.atleast_2d(np.array(self.frequencies, dtype=float))
        ph = np.zeros_like(a) if self.phases is None else np.atleast_2d(np.array(self.phases, dtype=float))
        if not (a.shape == w.shape == ph.shape):
            raise DimensionError("amplitudes, frequencies and phases must share shape (m, K)")
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "phases", ph)

    @property
    def m(self) -> int:
        return self.amplitudes.shape[0]

    def _value(self, ts, left):
        arg = ts[:, None, None] * self.frequencies[None] + self.phases[None]
        return np.sum(self.amplitudes[None] * np.sin(arg), axis=2)

    def _deriv(self, ts, left):
        arg = ts[:, None, None] * self.frequencies[None] + self.phases[None]
        return np.sum(self.amplitudes[None] * self.frequencies[None] * np.cos(arg), axis=2)

    def to_dict(self) -> dict:
        return {
            "kind": "sinusoid_sum",
            "amplitudes": self.amplitudes.tolist(),
            "frequencies": self.frequencies.tolist(),
            "phases": self.phases.tolist(),
        }


@dataclass(frozen=True, eq=False)
class Polynomial(InputFunction):
    """Per-channel polynomial; ``coefficients[c]`` in ascending powers of ``t``."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.array(self.coefficients, dtype=float))
        object.__setattr__(self, "coefficients", c)

    @property
    def m(self) -> int:
        return self.coefficients.shape[0]

    def _value(self, ts, left):
        return np.polynomial.polynomial.polyval(ts, self.coefficients.T).T

    def _deriv(self, ts, left):
        dc = np.polynomial.polynomial.polyder(self.coefficients.T, axis=0)
        if dc.shape[0] == 0:
            return np.zeros((ts.size, self.m))
        return np.polynomial.polynomial.polyval(ts, dc).T

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "coefficients": self.coefficients.tolist()}


def zero_input(m: int) -> Polynomial:
    return Polynomial(np.zeros((m, 1)))


@dataclass(frozen=True, eq=False)
class SumInput(InputFunction):
    """Pointwise sum of inputs with matching channel counts."""

    terms: list

    def __post_init__(self):
        flat = []
        for term in self.terms:
            flat.extend(term.terms if isinstance(term, SumInput) else [term])
        if len({t.m for t in flat}) != 1:
            raise DimensionError("summed inputs must have the same number of channels")
        object.__setattr__(self, "terms", flat)

    @property
    def m(self) -> int:
        return self.terms[0].m

    @property
    def start(self) -> float:
        return max(t.start for t in self.terms)

    @property
    def end(self) -> float:
        return min(t.end for t in self.terms)

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([t.breakpoints() for t in self.terms]))

    def _value(self, ts, left):
        return sum(t._value(ts, left) for t in self.terms)

    def _deriv(self, ts, left):
        return sum(t._deriv(ts, left) for t in self.terms)

    def to_dict(self) -> dict:
        return {"kind": "sum", "terms": [t.to_dict() for t in self.terms]}


def input_from_dict(spec: dict, m: int | None = None) -> InputFunction:
    """Build an input from its JSON form.

    One-channel parameter lists are broadcast to ``m`` channels when ``m`` is given.
    """
    kind = spec.get("kind")

    def per_channel(values):
        arr = np.array(values, dtype=float)
        if m is not None and arr.ndim == 1:
            arr = np.tile(arr, (m, 1))
        return arr

    if kind == "piecewise_constant":
        return PiecewiseConstant(np.array(spec["levels"], dtype=float), spec["hold"])
    if kind == "square_wave":
        levels = np.array(spec["levels"], dtype=float)
        if m is not None and levels.ndim == 1:
            levels = np.tile(levels[:, None], (1, m))
        return SquareWave(levels, spec.get("breakpoints", []))
    if kind == "sinusoid_sum":
        amps = per_channel(spec["amplitudes"])
        phases = spec.get("phases")
        return SinusoidSum(amps, per_channel(spec["frequencies"]), None if phases is None else per_channel(phases))
    if kind == "polynomial":
        return Polynomial(per_channel(spec["coefficients"]))
    if kind == "zero":
        if m is None:
            raise ValueError("zero input needs the channel count")
        return zero_input(m)
    if kind == "sum":
        return SumInput([input_from_dict(t, m) for t in spec["terms"]])
    raise ValueError(f"unknown input kind: {kind!r}")


@dataclass(frozen=True)
class LtiSystem:
    """``xdot = A x + B u``, ``y = C x + D u``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        C = as_matrix(self.C, "C")
        D = as_matrix(self.D, "D")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DimensionError(f"B must have {n} rows, got {B.shape}")
        if C.shape[1] != n:
            raise DimensionError(f"C must have {n} columns, got {C.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D must be {(C.shape[0], B.shape[1])}, got {D.shape}")
        for name, mat in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, mat)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in "ABCD"}


def controllability_matrix(A, B) -> np.ndarray:
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def is_controllable(A, B, tol_rel: float = 1e-8) -> bool:
    return numerical_rank(controllability_matrix(A, B), tol_rel) == np.shape(A)[0]


@dataclass(frozen=True)
class Trajectory:
    """States, outputs and inputs on the uniform grid ``t_k = k * delta``.

    Inputs are sampled right-continuously, except at the final instant where
    the input's own closing convention applies.
    """

    times: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray

    @property
    def delta(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0


def _grid_count(horizon: float, delta: float, what: str = "horizon") -> int:
    if not delta > 0:
        raise ValueError("delta must be positive")
    ratio = horizon / delta
    K = int(round(ratio))
    if K < 1 or abs(ratio - K) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"{what} ({horizon}) must be a positive integer multiple of delta ({delta})")
    return K


def simulate(
    sys: LtiSystem,
    x0,
    u: InputFunction,
    horizon: float,
    delta: float,
    max_step: float | None = None,
) -> Trajectory:
    """Integrate the plant with classical RK4 and sample it on the ``delta`` grid.

    Args:
        sys: the plant.
        x0: initial state, shape ``(n,)``.
        u: input signal, must be defined on ``[0, horizon]``.
        horizon: final time, an integer multiple of ``delta``.
        delta: output sampling step.
        max_step: largest internal RK4 step. Defaults to
            ``min(delta, 1e-3, 0.01 / ||A||)``.

    Returns:
        A :class:`Trajectory` with ``horizon / delta + 1`` samples.

    Raises:
        DomainError: ``u`` is not defined on the whole horizon.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != sys.n:
        raise DimensionError(f"x0 must have {sys.n} entries, got {x0.size}")
    if u.m != sys.m:
        raise DimensionError(f"input has {u.m} channels, system expects {sys.m}")
    K = _grid_count(horizon, delta)
    if not u.covers(0.0, horizon):
        raise DomainError(f"input defined on [{u.start}, {u.end}], needed on [0, {horizon}]")

    if max_step is None:
        norm_a = np.linalg.norm(sys.A, 2)
        max_step = min(delta, 1e-3, 0.01 / norm_a if norm_a > 0 else math.inf)

    grid = delta * np.arange(K + 1)
    # Step boundaries: the grid plus every input breakpoint that is off-grid.
    bps = u.breakpoints()
    bps = bps[(bps > 0) & (bps < horizon)]
    if bps.size:
        nearest = np.rint(bps / delta)
        off_grid = np.abs(bps - nearest * delta) > _snap_tol(bps)
        bounds = np.union1d(grid, bps[off_grid])
    else:
        bounds = grid
    is_grid = np.isin(bounds, grid)

    widths = np.diff(bounds)
    nsub = np.maximum(1, np.ceil(widths / max_step - 1e-9).astype(int))
    h = np.repeat(widths / nsub, nsub)
    starts = np.repeat(bounds[:-1], nsub) + h * (
        np.arange(nsub.sum()) - np.repeat(np.cumsum(nsub) - nsub, nsub)
    )
    ends = np.append(starts[1:], bounds[-1])
    last_sub = np.cumsum(nsub) - 1  # index of the final substep of each interval
    ends[last_sub] = bounds[1:]

    u_start = u(starts)
    u_mid = u(starts + 0.5 * h)
    u_end = u(ends, left=True)
    Bu0 = u_start @ sys.B.T
    Bum = u_mid @ sys.B.T
    Bu1 = u_end @ sys.B.T

    A = sys.A
    states = np.empty((K + 1, sys.n))
    states[0] = x0
    x = x0.copy()
    record = np.zeros(h.size, dtype=bool)
    record[last_sub[is_grid[1:]]] = True
    k = 1
    for j in range(h.size):
        hj = h[j]
        k1 = A @ x + Bu0[j]
        k2 = A @ (x + 0.5 * hj * k1) + Bum[j]
        k3 = A @ (x + 0.5 * hj * k2) + Bum[j]
        k4 = A @ (x + hj * k3) + Bu1[j]
        x = x + (hj / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record[j]:
            states[k] = x
            k += 1

    inputs = u(grid)
    outputs = states @ sys.C.T + inputs @ sys.D.T
    return Trajectory(grid, states, outputs, inputs)


def exact_discretize(sys: LtiSystem, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization ``(exp(A T), int_0^T exp(A s) ds B)``.

    Both blocks come from one exponential of the augmented matrix ``[[A, B], [0, 0]]``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    n, m = sys.n, sys.m
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = sys.A
    aug[:n, n:] = sys.B
    E = matrix_exponential(aug, T)
    return E[:n, :n], E[:n, n:]


def step_discrete(Ad, Bd, x, mu) -> np.ndarray:
    return np.asarray(Ad) @ np.asarray(x, dtype=float) + np.asarray(Bd) @ np.asarray(mu, dtype=float)
