"""Data-based generation of continuous-time trajectories.

Given persistently excited data ``(u, x, y)`` with segment length ``T``, a
target input ``u_bar`` on ``[0, T)`` and an initial state ``x_bar0``, the
parameter vector ``alpha(t)`` solves

    alpha'(t) = Theta(t) [u_bar'(t) - H(u')(t) alpha(t); 0],
    alpha(0)  = Theta(0) [u_bar(0); x_bar0],

where ``Theta(t)`` is the pseudoinverse of ``[H(u)(t); H(x)(t)]`` and every
``H(.)(t)`` is the one-deep Hankel row over all ``N`` segments. Then
``H(u) alpha``, ``H(x) alpha`` and ``H(y) alpha`` are the input, state and
output of the plant driven by ``u_bar`` from ``x_bar0``.

At each breakpoint ``T_j`` of ``u_bar`` alpha is re-initialized so the input
jumps as commanded while ``H(x) alpha`` stays continuous.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, PreconditionError, SingularityError
from .excitation import PeDataset
from .hankel import SampledSignal, derivative_signal, format_float, hankel_row
from .linalg import DEFAULT_CUTOFF_REL, pseudoinverse, svd
from .lti import InputFunction, LtiSystem, _snap_tol, simulate

DEFAULT_TOL_SOLVE = 1e-6
STAGE_RULES = ("linear", "hold")


@dataclass(frozen=True)
class TargetSpec:
    u_bar: InputFunction
    x_bar0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x_bar0", np.asarray(self.x_bar0, dtype=float).reshape(-1))

    def breakpoint_offsets(self, T: float, delta: float) -> list[int]:
        """Grid offsets of the breakpoints strictly inside ``(0, T)``.

        Raises:
            DomainError: a breakpoint does not fall on the ``delta`` grid.
        """
        out = []
        for b in self.u_bar.breakpoints():
            if b <= _snap_tol(b) or b >= T - _snap_tol(T):
                continue
            k = int(round(b / delta))
            if abs(k * delta - b) > 1e-9 * max(1.0, b):
                raise DomainError(f"breakpoint {b} is not on the sampling grid (delta={delta})")
            out.append(k)
        return sorted(set(out))


class DataMatrices:
    """Per-offset access to the one-deep Hankel rows of a dataset.

    ``stage_rule`` fixes how matrices are formed between grid offsets:
    ``"linear"`` interpolates the two neighbouring samples, ``"hold"`` reuses
    the sample at the lower grid point.
    """

    def __init__(self, data: PeDataset, cutoff_rel: float = DEFAULT_CUTOFF_REL, stage_rule: str = "linear"):
        if stage_rule not in STAGE_RULES:
            raise ValueError(f"stage_rule must be one of {STAGE_RULES}")
        self.data = data
        self.cutoff_rel = cutoff_rel
        self.stage_rule = stage_rule
        self.udot = derivative_signal(data.u, data.u_source)
        self.N = data.N
        self.m = data.m
        self.n = data.n

    def H(self, z: SampledSignal, k: int) -> np.ndarray:
        return hankel_row(z, 0, self.N - 1, k).matrix

    def stacked(self, k: int) -> np.ndarray:
        return np.vstack([self.H(self.data.u, k), self.H(self.data.x, k)])

    def theta(self, M: np.ndarray, k: int) -> tuple[np.ndarray, float]:
        """Pseudoinverse of ``M`` and its ``sigma_min``; rank loss raises."""
        res = svd(M)
        if res.sigma_max == 0.0 or res.sigma_min <= self.cutoff_rel * res.sigma_max:
            raise SingularityError(
                f"stacked data matrix is rank deficient at offset {k} "
                f"(sigma_min={res.sigma_min:.3e}, sigma_max={res.sigma_max:.3e})",
                offset=k,
            )
        return (res.right_vectors / res.singular_values) @ res.left_vectors.T, res.sigma_min

    def at(self, k: int, frac: float = 0.0):
        """``(Theta, H(u'), sigma_min)`` at time ``(k + frac) * delta`` under the stage rule."""
        if frac == 0.0 or self.stage_rule == "hold":
            theta, smin = self.theta(self.stacked(k), k)
            return theta, self.H(self.udot, k), smin
        if frac == 1.0:
            return self.at(k + 1)
        M = (1.0 - frac) * self.stacked(k) + frac * self.stacked(k + 1)
        Hud = (1.0 - frac) * self.H(self.udot, k) + frac * self.H(self.udot, k + 1)
        theta, smin = self.theta(M, k)
        return theta, Hud, smin


def _check_certified(data: PeDataset, force: bool) -> None:
    if force:
        return
    if data.order_certified is None or data.order_certified < data.n + 1:
        raise PreconditionError(
            f"data must be certified persistently exciting of order n+1 = {data.n + 1} "
            f"(certified: {data.order_certified})"
        )


def alpha_initial(data: PeDataset, u_bar0, x_bar0, cutoff_rel: float = DEFAULT_CUTOFF_REL, force: bool = False) -> np.ndarray:
    """Minimum-norm ``alpha`` with ``H(u)(0) alpha = u_bar0`` and ``H(x)(0) alpha = x_bar0``."""
    _check_certified(data, force)
    mats = DataMatrices(data, cutoff_rel)
    theta, _ = mats.theta(mats.stacked(0), 0)
    rhs = np.concatenate([np.asarray(u_bar0, dtype=float).reshape(-1), np.asarray(x_bar0, dtype=float).reshape(-1)])
    return theta @ rhs


def reset_alpha(
    data: PeDataset, alpha_before, k_j: int, u_bar_Tj, cutoff_rel: float = DEFAULT_CUTOFF_REL, force: bool = False
) -> np.ndarray:
    """Re-initialize alpha at a breakpoint: new input value, same state ``H(x) alpha``."""
    _check_certified(data, force)
    mats = DataMatrices(data, cutoff_rel)
    theta, _ = mats.theta(mats.stacked(k_j), k_j)
    x_left = mats.H(data.x, k_j) @ np.asarray(alpha_before, dtype=float)
    return theta @ np.concatenate([np.asarray(u_bar_Tj, dtype=float).reshape(-1), x_left])


@dataclass
class AlphaSegment:
    """Alpha on offsets ``k_start..k_end-1``; ``alpha_end`` is the left limit at ``k_end``."""

    k_start: int
    k_end: int
    alpha: np.ndarray
    alpha_dot: np.ndarray
    input_residual: np.ndarray
    state_residual: np.ndarray
    sigma_min: np.ndarray
    alpha_end: np.ndarray | None


@dataclass(frozen=True)
class ResetRecord:
    time: float
    offset: int
    alpha_before: np.ndarray
    alpha_after: np.ndarray
    continuity_residual: float
    constraint_residual: float


@dataclass
class AlphaSolution:
    times: np.ndarray
    alpha: np.ndarray
    alpha_dot: np.ndarray
    input_residual: np.ndarray
    state_residual: np.ndarray
    sigma_min: np.ndarray
    u_bar: np.ndarray
    resets: list = field(default_factory=list)

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.times.size)


def solve_alpha(
    data: PeDataset,
    target: TargetSpec,
    k_start: int,
    k_end: int,
    alpha_start,
    cutoff_rel: float = DEFAULT_CUTOFF_REL,
    stage_rule: str = "linear",
    need_end: bool = False,
    force: bool = False,
) -> AlphaSegment:
    """Integrate the alpha ODE with fixed-step RK4 (step ``delta``) over one segment.

    Args:
        data: certified dataset.
        target: target input and initial state.
        k_start, k_end: the segment covers offsets ``k_start..k_end-1``.
        alpha_start: alpha at ``k_start`` (from :func:`alpha_initial` or
            :func:`reset_alpha`).
        stage_rule: how data matrices are formed at RK4 half steps.
        need_end: also take the final step to ``k_end`` and return the left
            limit there (used before a reset).

    Raises:
        SingularityError: the stacked data matrix loses rank at some offset.
    """
    _check_certified(data, force)
    if not 0 <= k_start < k_end <= data.q:
        raise ValueError(f"invalid segment [{k_start}, {k_end}) for q={data.q}")
    if need_end and k_end >= data.q:
        raise ValueError("the left limit is only available at interior offsets")
    mats = DataMatrices(data, cutoff_rel, stage_rule)
    delta = data.delta
    t_end = k_end * delta
    count = k_end - k_start
    N = data.N

    def ubar_dot(s: float) -> np.ndarray:
        # Stages on the segment's right end see the left derivative.
        return target.u_bar.derivative(s, left=abs(s - t_end) <= _snap_tol(t_end))

    def rhs(theta, Hud, s, alpha):
        v = ubar_dot(s) - Hud @ alpha
        return theta[:, : data.m] @ v

    alpha = np.empty((count, N))
    alpha_dot = np.empty((count, N))
    in_res = np.empty(count)
    st_res = np.empty(count)
    smin = np.empty(count)

    a = np.asarray(alpha_start, dtype=float).copy()
    theta_k, Hud_k, smin_k = mats.at(k_start)
    last = k_end if need_end else k_end - 1
    alpha_end = None
    for i, k in enumerate(range(k_start, last + 1)):
        t = k * delta
        if k < k_end:
            smin[i] = smin_k
            f1 = rhs(theta_k, Hud_k, t, a)
            alpha[i] = a
            alpha_dot[i] = f1
            in_res[i] = np.max(np.abs(mats.H(data.u, k) @ a - target.u_bar(t)))
            st_res[i] = np.linalg.norm(mats.H(data.x, k) @ f1)
        else:
            alpha_end = a
            break
        if k == last:
            break
        theta_m, Hud_m, _ = mats.at(k, 0.5)
        theta_n, Hud_n, smin_n = mats.at(k + 1)
        h = delta
        k2 = rhs(theta_m, Hud_m, t + 0.5 * h, a + 0.5 * h * f1)
        k3 = rhs(theta_m, Hud_m, t + 0.5 * h, a + 0.5 * h * k2)
        k4 = rhs(theta_n, Hud_n, t + h, a + h * k3)
        a = a + (h / 6.0) * (f1 + 2.0 * k2 + 2.0 * k3 + k4)
        theta_k, Hud_k, smin_k = theta_n, Hud_n, smin_n
    return AlphaSegment(k_start, k_end, alpha, alpha_dot, in_res, st_res, smin, alpha_end)


@dataclass
class Reconstruction:
    times: np.ndarray
    u_bar: np.ndarray
    u_rec: np.ndarray
    x_rec: np.ndarray
    y_rec: np.ndarray
    max_input_residual: float
    alpha: AlphaSolution | None = None
    y_oracle: np.ndarray | None = None
    oracle_error: float | None = None

    @property
    def oracle_scale(self) -> float | None:
        return None if self.y_oracle is None else float(np.max(np.abs(self.y_oracle)))

    def oracle_ok(self, rel_tol: float) -> bool | None:
        """``oracle_error <= rel_tol * (1 + max|y_oracle|)``."""
        if self.oracle_error is None:
            return None
        return self.oracle_error <= rel_tol * (1.0 + self.oracle_scale)

    def to_csv(self) -> str:
        m, p = self.u_bar.shape[1], self.y_rec.shape[1]
        cols = ["t"]
        cols += [f"ubar{c}" for c in range(m)] + [f"urec{c}" for c in range(m)]
        cols += [f"yrec{c}" for c in range(p)] + [f"yoracle{c}" for c in range(p)] + [f"abserr{c}" for c in range(p)]
        y_or = self.y_oracle if self.y_oracle is not None else np.full_like(self.y_rec, np.nan)
        err = np.abs(self.y_rec - y_or)
        table = np.hstack([self.times[:, None], self.u_bar, self.u_rec, self.y_rec, y_or, err])
        buf = io.StringIO()
        buf.write(",".join(cols) + "\n")
        for row in table:
            buf.write(",".join(format_float(v) for v in row) + "\n")
        return buf.getvalue()

    def diagnostics(self) -> dict:
        sol = self.alpha
        out = {
            "max_input_residual": self.max_input_residual,
            "oracle_error": self.oracle_error,
            "oracle_scale": self.oracle_scale,
        }
        if sol is not None:
            out.update(
                {
                    "max_state_residual": float(np.max(sol.state_residual)),
                    "min_sigma_min": float(np.min(sol.sigma_min)),
                    "argmin_sigma_min": int(np.argmin(sol.sigma_min)),
                    "resets": [
                        {
                            "time": r.time,
                            "offset": r.offset,
                            "continuity_residual": r.continuity_residual,
                            "constraint_residual": r.constraint_residual,
                        }
                        for r in sol.resets
                    ],
                }
            )
        return out


def generate_trajectory(data: PeDataset, alpha: AlphaSolution) -> Reconstruction:
    """``H(u) alpha``, ``H(x) alpha`` and ``H(y) alpha`` at every offset in ``[0, T)``."""
    q = data.q
    if alpha.alpha.shape != (q, data.N):
        raise ValueError(f"alpha must cover all {q} offsets with {data.N} entries each")
    u_rec = np.empty((q, data.m))
    x_rec = np.empty((q, data.n))
    y_rec = np.empty((q, data.p))
    last = data.N - 1
    for k in range(q):
        a = alpha.alpha[k]
        u_rec[k] = hankel_row(data.u, 0, last, k).matrix @ a
        x_rec[k] = hankel_row(data.x, 0, last, k).matrix @ a
        y_rec[k] = hankel_row(data.y, 0, last, k).matrix @ a
    resid = float(np.max(np.abs(u_rec - alpha.u_bar)))
    return Reconstruction(alpha.times, alpha.u_bar, u_rec, x_rec, y_rec, resid, alpha)


def solve_alpha_full(
    data: PeDataset,
    target: TargetSpec,
    cutoff_rel: float = DEFAULT_CUTOFF_REL,
    stage_rule: str = "linear",
    force: bool = False,
) -> AlphaSolution:
    """Alpha on every offset of ``[0, T)``, with resets at the target's breakpoints."""
    _check_certified(data, force)
    if target.x_bar0.size != data.n:
        raise ValueError(f"x_bar0 must have {data.n} entries")
    if target.u_bar.m != data.m:
        raise ValueError(f"u_bar must have {data.m} channels")
    q, delta = data.q, data.delta
    times = delta * np.arange(q)
    if not target.u_bar.covers(0.0, times[-1]):
        raise DomainError("u_bar must be defined on [0, T)")
    bounds = [0] + target.breakpoint_offsets(data.T, delta) + [q]

    a = alpha_initial(data, target.u_bar(0.0), target.x_bar0, cutoff_rel, force=True)
    segments, resets = [], []
    mats = DataMatrices(data, cutoff_rel)
    for j in range(len(bounds) - 1):
        k0, k1 = bounds[j], bounds[j + 1]
        seg = solve_alpha(
            data, target, k0, k1, a, cutoff_rel, stage_rule, need_end=k1 < q, force=True
        )
        segments.append(seg)
        if k1 < q:
            t_j = k1 * delta
            u_j = target.u_bar(t_j)
            a = reset_alpha(data, seg.alpha_end, k1, u_j, cutoff_rel, force=True)
            Hx = mats.H(data.x, k1)
            M = mats.stacked(k1)
            rhs = np.concatenate([u_j, Hx @ seg.alpha_end])
            resets.append(
                ResetRecord(
                    time=t_j,
                    offset=k1,
                    alpha_before=seg.alpha_end,
                    alpha_after=a,
                    continuity_residual=float(np.linalg.norm(Hx @ a - Hx @ seg.alpha_end)),
                    constraint_residual=float(np.linalg.norm(M @ a - rhs)),
                )
            )

    cat = lambda name: np.concatenate([getattr(s, name) for s in segments])
    return AlphaSolution(
        times=times,
        alpha=cat("alpha"),
        alpha_dot=cat("alpha_dot"),
        input_residual=cat("input_residual"),
        state_residual=cat("state_residual"),
        sigma_min=cat("sigma_min"),
        u_bar=target.u_bar(times),
        resets=resets,
    )


def reconstruct(
    data: PeDataset,
    target: TargetSpec,
    oracle: LtiSystem | None = None,
    cutoff_rel: float = DEFAULT_CUTOFF_REL,
    stage_rule: str = "linear",
    force: bool = False,
) -> Reconstruction:
    """Full data-based trajectory generation, optionally checked against the true plant.

    Args:
        data: dataset certified persistently exciting of order ``n+1``.
        target: target input and initial state.
        oracle: when given, the plant is simulated from ``x_bar0`` under
            ``u_bar`` and ``oracle_error`` is ``max_k |y_rec - y_oracle|_inf``.
        force: skip the certification precondition.
    """
    _check_certified(data, force)
    sol = solve_alpha_full(data, target, cutoff_rel, stage_rule, force=True)
    rec = generate_trajectory(data, sol)
    if oracle is not None:
        traj = simulate(oracle, target.x_bar0, target.u_bar, data.T, data.delta)
        rec.y_oracle = traj.outputs[: data.q]
        rec.oracle_error = float(np.max(np.abs(rec.y_rec - rec.y_oracle)))
    return rec


def solve_dt_willems(Hu: np.ndarray, Hy: np.ndarray, u_bar, y_bar, cutoff_rel: float = DEFAULT_CUTOFF_REL) -> np.ndarray:
    """Least-squares constant ``alpha`` for ``[Hu; Hy] alpha = [u_bar; y_bar]`` (stacked sequences)."""
    M = np.vstack([Hu, Hy])
    rhs = np.concatenate([np.ravel(u_bar), np.ravel(y_bar)])
    return pseudoinverse(M, cutoff_rel) @ rhs
