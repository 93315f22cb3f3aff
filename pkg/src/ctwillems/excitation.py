"""Persistence of excitation: sequence design, piecewise-constant PE inputs,
the sampling-period resonance check, and the per-offset rank certificate."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InfeasibleError
from .hankel import (
    SampledSignal,
    dt_hankel,
    hankel_deep,
    hankel_row,
    signal_from_csv,
    signal_to_csv,
)
from .linalg import DEFAULT_RANK_TOL, eigenvalues, numerical_rank
from .lti import InputFunction, LtiSystem, PiecewiseConstant, simulate

MAX_DESIGN_ATTEMPTS = 100


@dataclass(frozen=True)
class DtPeSequence:
    """Levels ``mu_0..mu_{N-1}`` whose depth-``order`` Hankel has full row rank."""

    values: np.ndarray
    order: int
    seed: int | None = None

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def N(self) -> int:
        return self.values.shape[0]

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "m": self.m,
            "N": self.N,
            "seed": self.seed,
            "rank": dt_pe_rank(self.values, self.order),
            "required_rank": self.order * self.m,
            "values": self.values.tolist(),
        }


def dt_pe_rank(values, order: int, tol_rel: float = DEFAULT_RANK_TOL) -> int:
    return numerical_rank(dt_hankel(values, order), tol_rel)


def _required_length(m: int, order: int) -> int:
    return order * (m + 1) - 1


def make_dt_pe_sequence(values, order: int, tol_rel: float = DEFAULT_RANK_TOL) -> DtPeSequence:
    """Wrap given levels as a PE sequence, refusing rank-deficient ones."""
    values = np.array(values, dtype=float)
    if values.ndim == 1:
        values = values.reshape(-1, 1)
    N, m = values.shape
    if N < _required_length(m, order):
        raise InfeasibleError(f"order {order} needs N >= order*(m+1)-1 = {_required_length(m, order)}, got {N}")
    rank = dt_pe_rank(values, order, tol_rel)
    if rank != order * m:
        raise InfeasibleError(f"sequence has Hankel rank {rank}, order {order} needs {order * m}")
    return DtPeSequence(values, order)


def design_dt_pe_sequence(m: int, order: int, N: int, seed: int, tol_rel: float = DEFAULT_RANK_TOL) -> DtPeSequence:
    """Draw levels uniformly from ``[-1, 1]^m`` until the Hankel rank certifies.

    Attempt ``j`` uses ``seed + j``, so the result is a function of ``seed``.
    """
    need = _required_length(m, order)
    if N < need:
        raise InfeasibleError(f"order {order} with m={m} needs N >= order*(m+1)-1 = {need}, got N={N}")
    for attempt in range(MAX_DESIGN_ATTEMPTS):
        rng = np.random.default_rng(seed + attempt)
        values = rng.uniform(-1.0, 1.0, size=(N, m))
        if dt_pe_rank(values, order, tol_rel) == order * m:
            return DtPeSequence(values, order, seed)
    raise InfeasibleError(f"no full-rank sequence after {MAX_DESIGN_ATTEMPTS} draws")  # pragma: no cover


def _imag_gaps(A) -> list[float]:
    lam = eigenvalues(A)
    scale = max(1.0, float(np.max(np.abs(lam))))
    gaps = []
    for i in range(lam.size):
        for j in range(i + 1, lam.size):
            d = abs((lam[i] - lam[j]).imag)
            if d > 1e-12 * scale:
                gaps.append(d)
    return gaps


def forbidden_periods(A, T_max: float) -> list[float]:
    """All values ``2 pi k / |Im(l_i - l_j)|`` in ``(0, T_max]``, sorted."""
    out = set()
    for d in _imag_gaps(A):
        period = 2.0 * math.pi / d
        for k in range(1, int(math.floor(T_max / period + 1e-12)) + 1):
            out.add(k * period)
    return sorted(out)


def check_assumption_T(A, T: float, guard: float = 1e-6) -> bool:
    """True when ``T`` stays more than ``guard * T`` away from every resonant period."""
    if not T > 0:
        raise ValueError("T must be positive")
    for d in _imag_gaps(A):
        period = 2.0 * math.pi / d
        k = round(T / period)
        if k >= 1 and abs(T - k * period) <= guard * T:
            return False
    return True


def build_pe_input(seq: DtPeSequence, T: float) -> PiecewiseConstant:
    return PiecewiseConstant(seq.values, T)


@dataclass(frozen=True)
class PeDataset:
    """Recorded ``(u, x, y)`` on a shared grid, plus certification status.

    ``u_source`` keeps the analytic input when the data were simulated here,
    so its derivative can be sampled exactly; data loaded from disk have none.
    """

    u: SampledSignal
    x: SampledSignal
    y: SampledSignal
    order_certified: int | None = None
    sigma_min_profile: np.ndarray | None = None
    u_source: InputFunction | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("x", "y"):
            s = getattr(self, name)
            if (s.delta, s.T, s.N) != (self.u.delta, self.u.T, self.u.N):
                raise ValueError(f"{name} grid differs from u grid")

    @property
    def T(self) -> float:
        return self.u.T

    @property
    def N(self) -> int:
        return self.u.N

    @property
    def delta(self) -> float:
        return self.u.delta

    @property
    def q(self) -> int:
        return self.u.q

    @property
    def m(self) -> int:
        return self.u.dim

    @property
    def n(self) -> int:
        return self.x.dim

    @property
    def p(self) -> int:
        return self.y.dim

    def certified(self, cert: "PeCertificate") -> "PeDataset":
        """Attach a certificate; ``order_certified`` is set only if it passed."""
        return replace(
            self,
            order_certified=cert.order if cert.passed else None,
            sigma_min_profile=np.array([row[2] for row in cert.per_offset]),
        )

    def scaled(self, factor: float) -> "PeDataset":
        return replace(
            self, u=self.u.scaled(factor), x=self.x.scaled(factor), y=self.y.scaled(factor), u_source=None
        )

    def sidecar(self) -> dict:
        return {
            "T": self.T,
            "N": self.N,
            "delta": self.delta,
            "m": self.m,
            "n": self.n,
            "p": self.p,
            "seed": self.meta.get("seed"),
        }


def collect_dataset(
    sys: LtiSystem, x0, u: InputFunction, T: float, N: int, delta: float, seed: int | None = None
) -> PeDataset:
    """Simulate the plant over ``[0, N T]`` and package the sampled ``(u, x, y)``."""
    traj = simulate(sys, x0, u, N * T, delta)
    return PeDataset(
        u=SampledSignal(traj.inputs, delta, T, N),
        x=SampledSignal(traj.states, delta, T, N),
        y=SampledSignal(traj.outputs, delta, T, N),
        u_source=u,
        meta={"seed": seed},
    )


@dataclass(frozen=True)
class PeCertificate:
    order: int
    L: int
    required_rank: int
    passed: bool
    per_offset: list  # (k, rank, sigma_min, sigma_max)
    worst_offset: int

    @property
    def min_rank(self) -> int:
        return min(row[1] for row in self.per_offset)

    @property
    def min_sigma_min(self) -> float:
        return min(row[2] for row in self.per_offset)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "L": self.L,
            "required_rank": self.required_rank,
            "passed": self.passed,
            "min_rank": self.min_rank,
            "worst_offset": self.worst_offset,
            "min_sigma_min": self.min_sigma_min,
            "per_offset": [
                {"k": k, "rank": r, "sigma_min": smin, "sigma_max": smax} for k, r, smin, smax in self.per_offset
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PeCertificate":
        rows = [(r["k"], r["rank"], r["sigma_min"], r["sigma_max"]) for r in d["per_offset"]]
        return cls(d["order"], d["L"], d["required_rank"], d["passed"], rows, d["worst_offset"])


def pe_matrix(data: PeDataset, L: int, k: int) -> np.ndarray:
    """``[H_L(u)(k); H_1(x over segments 0..N-L)(k)]``."""
    return np.vstack([hankel_deep(data.u, L, k).matrix, hankel_row(data.x, 0, data.N - L, k).matrix])


def certify_pe(data: PeDataset, L: int = 1, tol_rel: float = DEFAULT_RANK_TOL) -> PeCertificate:
    """Check the stacked input-Hankel / state matrix for full row rank at every offset.

    Raises:
        InfeasibleError: ``N < L(m+1)+n-1``, so full row rank is impossible.
    """
    m, n, N = data.m, data.n, data.N
    need = L * (m + 1) + n - 1
    if L < 1 or N < need:
        raise InfeasibleError(f"order {L + n} needs N >= L(m+1)+n-1 = {need}, got N={N}")
    required = L * m + n
    rows = []
    for k in range(data.q):
        M = pe_matrix(data, L, k)
        s = np.linalg.svd(M, compute_uv=False)
        smax = float(s[0])
        rank = 0 if smax == 0.0 else int(np.count_nonzero(s > tol_rel * smax * max(M.shape)))
        rows.append((k, rank, float(s[required - 1]), smax))
    passed = all(r[1] == required for r in rows)
    worst = min(rows, key=lambda r: r[2])[0]
    return PeCertificate(L + n, L, required, passed, rows, worst)


def save_dataset(data: PeDataset, directory: Path, writer) -> None:
    """Write ``data_u.csv``, ``data_x.csv``, ``data_y.csv`` and ``dataset.json``.

    ``writer(path, text)`` performs the (atomic) file write.
    """
    directory = Path(directory)
    for name in ("u", "x", "y"):
        writer(directory / f"data_{name}.csv", signal_to_csv(getattr(data, name)))
    writer(directory / "dataset.json", json.dumps(data.sidecar(), indent=2, sort_keys=True) + "\n")


def load_dataset(directory: Path) -> PeDataset:
    directory = Path(directory)
    side = json.loads((directory / "dataset.json").read_text())
    T, N = side["T"], side["N"]
    sig = {name: signal_from_csv(directory / f"data_{name}.csv", T, N) for name in ("u", "x", "y")}
    return PeDataset(sig["u"], sig["x"], sig["y"], meta={"seed": side.get("seed")})
