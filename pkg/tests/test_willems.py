import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctwillems.errors import DomainError, PreconditionError, SingularityError
from ctwillems.excitation import PeDataset, build_pe_input, certify_pe, collect_dataset, design_dt_pe_sequence
from ctwillems.hankel import SampledSignal, dt_hankel, hankel_row
from ctwillems.lti import (
    LtiSystem,
    PiecewiseConstant,
    Polynomial,
    SinusoidSum,
    SquareWave,
    exact_discretize,
    step_discrete,
    zero_input,
)
from ctwillems.presets import preset
from ctwillems.willems import (
    AlphaSolution,
    TargetSpec,
    alpha_initial,
    generate_trajectory,
    reconstruct,
    reset_alpha,
    solve_alpha,
    solve_alpha_full,
    solve_dt_willems,
)

_CACHE = {}


def certified(name, T=1.0, delta=0.01, seed=3):
    key = (name, T, delta, seed)
    if key not in _CACHE:
        sys = preset(name, seed=seed)
        N = 2 * (sys.m + 1) + sys.n + 4
        seq = design_dt_pe_sequence(sys.m, sys.n + 1, N, seed)
        data = collect_dataset(sys, np.zeros(sys.n), build_pe_input(seq, T), T, N, delta, seed)
        _CACHE[key] = (sys, data.certified(certify_pe(data)))
    return _CACHE[key]


def sine_target(sys, x0, amp=1.0, omega=3.0):
    return TargetSpec(SinusoidSum(np.full((sys.m, 1), amp), np.full((sys.m, 1), omega)), x0)


class TestInitialAlpha:
    def test_constraint_residual(self):
        sys, data = certified("random_controllable")
        u0, x0 = np.array([0.3, -0.7]), np.array([1.0, 0.5, -0.2])
        a = alpha_initial(data, u0, x0)
        assert np.linalg.norm(hankel_row(data.u, 0, data.N - 1, 0).matrix @ a - u0) <= 1e-9
        assert np.linalg.norm(hankel_row(data.x, 0, data.N - 1, 0).matrix @ a - x0) <= 1e-9

    def test_zero_target(self):
        _, data = certified("oscillator")
        assert np.array_equal(alpha_initial(data, [0.0], [0.0, 0.0]), np.zeros(data.N))

    def test_requires_certificate(self):
        sys, data = certified("scalar_stable")
        raw = PeDataset(data.u, data.x, data.y)
        with pytest.raises(PreconditionError):
            alpha_initial(raw, [0.0], [0.0])
        alpha_initial(raw, [0.0], [0.0], force=True)


class TestAlphaOde:
    def test_constant_input_keeps_alpha(self):
        # Constant target with PE (piecewise-constant) data: both derivatives vanish.
        _, data = certified("double_integrator")
        target = TargetSpec(Polynomial([[0.4]]), [0.1, -0.2])
        a0 = alpha_initial(data, [0.4], [0.1, -0.2])
        seg = solve_alpha(data, target, 0, data.q, a0)
        assert np.array_equal(seg.alpha_dot, np.zeros_like(seg.alpha_dot))
        assert np.all(seg.alpha == a0)

    def test_sinusoid_residuals(self):
        sys, data = certified("random_controllable")
        sol = solve_alpha_full(data, sine_target(sys, [0.2, -0.1, 0.3]))
        assert sol.input_residual.max() <= 1e-6
        assert sol.state_residual.max() <= 1e-5
        assert sol.alpha.shape == (data.q, data.N)
        assert np.all(sol.sigma_min > 0)

    def test_segment_validation(self):
        sys, data = certified("scalar_stable")
        with pytest.raises(ValueError):
            solve_alpha(data, sine_target(sys, [0.0]), 5, 5, np.zeros(data.N))
        with pytest.raises(ValueError):
            solve_alpha(data, sine_target(sys, [0.0]), 0, data.q, np.zeros(data.N), need_end=True)

    def test_unknown_stage_rule(self):
        sys, data = certified("scalar_stable")
        with pytest.raises(ValueError):
            solve_alpha_full(data, sine_target(sys, [0.0]), stage_rule="midpoint")


class TestReset:
    def test_continuity(self):
        _, data = certified("oscillator")
        a = np.random.default_rng(0).normal(size=data.N)
        k = 40
        Hx = hankel_row(data.x, 0, data.N - 1, k).matrix
        Hu = hankel_row(data.u, 0, data.N - 1, k).matrix
        b = reset_alpha(data, a, k, [0.7])
        assert np.linalg.norm(Hx @ b - Hx @ a) <= 1e-9
        assert np.linalg.norm(Hu @ b - [0.7]) <= 1e-9

    def test_zero_state_zero_input(self):
        _, data = certified("oscillator")
        assert np.array_equal(reset_alpha(data, np.zeros(data.N), 10, [0.0]), np.zeros(data.N))

    def test_square_wave_target(self):
        sys, data = certified("double_integrator")
        u = SquareWave([[1.0], [-1.0], [0.5]], [0.3, 0.7])
        rec = reconstruct(data, TargetSpec(u, [0.2, 0.0]), oracle=sys)
        assert [r.offset for r in rec.alpha.resets] == [30, 70]
        for r in rec.alpha.resets:
            assert r.continuity_residual <= 1e-8
            assert r.constraint_residual <= 1e-8
        assert rec.oracle_ok(1e-4)

    def test_off_grid_breakpoint(self):
        sys, data = certified("double_integrator")
        with pytest.raises(DomainError):
            reconstruct(data, TargetSpec(SquareWave([[1.0], [0.0]], [0.305]), [0.0, 0.0]))


class TestGenerate:
    def test_zero_alpha(self):
        _, data = certified("random_controllable")
        q, N = data.q, data.N
        sol = AlphaSolution(
            np.arange(q) * data.delta, np.zeros((q, N)), np.zeros((q, N)),
            np.zeros(q), np.zeros(q), np.ones(q), np.zeros((q, data.m)),
        )
        rec = generate_trajectory(data, sol)
        assert not rec.u_rec.any() and not rec.x_rec.any() and not rec.y_rec.any()

    def test_identity_output_map(self):
        sys = LtiSystem([[0.0, 1.0], [-2.0, -0.3]], [[0.0], [1.0]], np.eye(2), np.zeros((2, 1)))
        seq = design_dt_pe_sequence(1, 3, 10, seed=1)
        data = collect_dataset(sys, np.zeros(2), build_pe_input(seq, 1.0), 1.0, 10, 0.01)
        data = data.certified(certify_pe(data))
        rec = reconstruct(data, sine_target(sys, [0.5, -0.5]))
        assert np.allclose(rec.y_rec, rec.x_rec, rtol=0, atol=1e-12)

    def test_bad_shape(self):
        _, data = certified("scalar_stable")
        sol = AlphaSolution(np.zeros(3), np.zeros((3, data.N)), None, None, None, None, np.zeros((3, 1)))
        with pytest.raises(ValueError):
            generate_trajectory(data, sol)


class TestReconstruct:
    @pytest.mark.parametrize("name", ["scalar_stable", "double_integrator", "oscillator", "random_controllable"])
    def test_matches_simulation(self, name):
        sys, data = certified(name)
        x0 = np.random.default_rng(1).uniform(-1, 1, sys.n)
        rec = reconstruct(data, sine_target(sys, x0), oracle=sys)
        assert rec.oracle_ok(1e-4)
        assert rec.oracle_error <= 5e-5  # delta = 0.01 here

    def test_error_shrinks_with_delta(self):
        errs = []
        for delta in (0.02, 0.01, 0.005):
            sys, data = certified("oscillator", delta=delta)
            errs.append(reconstruct(data, sine_target(sys, [0.3, -0.4]), oracle=sys).oracle_error)
        assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0

    def test_hold_rule_is_first_order(self):
        errs = []
        for delta in (0.02, 0.01):
            sys, data = certified("oscillator", delta=delta)
            rec = reconstruct(data, sine_target(sys, [0.3, -0.4]), oracle=sys, stage_rule="hold")
            errs.append(rec.oracle_error)
        assert 1.5 < errs[0] / errs[1] < 2.5

    def test_quadratic_input_double_integrator(self):
        sys, data = certified("double_integrator")
        rec = reconstruct(data, TargetSpec(Polynomial([[0.0, 0.0, 1.0]]), [0.0, 0.0]), oracle=sys)
        t = rec.times
        assert np.max(np.abs(rec.y_rec[:, 0] - t**4 / 12)) <= 1e-4
        assert rec.oracle_error <= 5e-5

    def test_zero_target(self):
        sys, data = certified("random_controllable")
        rec = reconstruct(data, TargetSpec(zero_input(2), np.zeros(3)))
        assert not rec.y_rec.any()

    def test_self_reconstruction(self):
        # The first data segment is itself a trajectory; alpha = e_0 reproduces it.
        sys, data = certified("random_controllable")
        q = data.q
        mu0 = data.u.samples[0]
        rec = reconstruct(data, TargetSpec(PiecewiseConstant([mu0], data.T), data.x.samples[0]))
        assert np.max(np.abs(rec.y_rec - data.y.samples[:q])) <= 1e-6
        assert np.max(np.abs(rec.x_rec - data.x.samples[:q])) <= 1e-6

    @settings(max_examples=8, deadline=None)
    @given(seed=st.integers(0, 10_000), c1=st.floats(-2, 2), c2=st.floats(-2, 2))
    def test_linearity(self, seed, c1, c2):
        sys, data = certified("oscillator")
        rng = np.random.default_rng(seed)
        x1, x2 = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        w1, w2 = rng.uniform(0.5, 4, 2)
        t1 = TargetSpec(SinusoidSum([[1.0]], [[w1]]), x1)
        t2 = TargetSpec(SinusoidSum([[1.0]], [[w2]]), x2)
        t12 = TargetSpec(SinusoidSum([[c1, c2]], [[w1, w2]]), c1 * x1 + c2 * x2)
        r1, r2, r12 = (reconstruct(data, t) for t in (t1, t2, t12))
        assert np.allclose(c1 * r1.y_rec + c2 * r2.y_rec, r12.y_rec, rtol=0, atol=1e-8)

    def test_rank_loss_raises(self):
        z = SampledSignal(np.zeros((6 * 10 + 1, 1)), 0.1, 1.0, 6)
        data = PeDataset(z, z, z)
        with pytest.raises(SingularityError) as info:
            reconstruct(data, TargetSpec(zero_input(1), [0.0]), force=True)
        assert info.value.offset == 0

    def test_uncertified_refused(self):
        sys, data = certified("oscillator")
        with pytest.raises(PreconditionError):
            reconstruct(PeDataset(data.u, data.x, data.y), sine_target(sys, [0.0, 0.0]))

    def test_csv_columns(self):
        sys, data = certified("scalar_stable")
        rec = reconstruct(data, sine_target(sys, [0.0]), oracle=sys)
        lines = rec.to_csv().splitlines()
        assert lines[0] == "t,ubar0,urec0,yrec0,yoracle0,abserr0"
        assert len(lines) == data.q + 1


def test_dt_willems_recovers_trajectory():
    sys = preset("double_integrator")
    seq = design_dt_pe_sequence(1, 5, 30, seed=2)
    Ad, Bd = exact_discretize(sys, 0.5)
    x = np.zeros(2)
    ys = []
    for mu in seq.values:
        ys.append(sys.C @ x + sys.D @ mu)
        x = step_discrete(Ad, Bd, x, mu)
    Hu, Hy = dt_hankel(seq.values, 6), dt_hankel(np.array(ys), 6)
    rng = np.random.default_rng(4)
    u_new, x = rng.uniform(-1, 1, (6, 1)), rng.uniform(-1, 1, 2)
    y_new = []
    for mu in u_new:
        y_new.append(sys.C @ x + sys.D @ mu)
        x = step_discrete(Ad, Bd, x, mu)
    y_new = np.array(y_new)
    g = solve_dt_willems(Hu, Hy, u_new, y_new)
    assert np.allclose(Hy @ g, y_new.ravel(), atol=1e-8)
    assert np.allclose(Hu @ g, u_new.ravel(), atol=1e-8)
