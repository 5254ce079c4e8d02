import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from annulus_shooter.critical_patch import (
    PatchGrid,
    apply_T,
    ball_profiles,
    contraction_estimate,
    delta_bound,
    apriori_delta,
    patch_residual,
    solve_patch,
    weight_exponent,
)
from annulus_shooter.model import ProblemSpec, draw_spec

from oracles import momentum_reference


def test_uncapped_width_example():
    spec = ProblemSpec.symmetric(dimension=3, p=2.0, b=2.0)
    assert apriori_delta(1.0, spec, 2.0) == pytest.approx(2.0 / 9.0, rel=1e-14)


def test_uncapped_width_is_vacuous_for_small_N_k():
    spec = ProblemSpec(2, 1.0, 3.0, 0.2, 1.0, 1.0, 0.2, 1.0, 1.0, 1.0, 2.0)
    assert apriori_delta(1.0, spec, 2.0) == math.inf
    assert math.isfinite(delta_bound(1.0, spec))


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100.0), st.floats(1.01, 10.0))
def test_width_shrinks_as_maximum_grows(seed, A, factor):
    spec = draw_spec(np.random.default_rng(seed))
    assert delta_bound(A * factor, spec) <= delta_bound(A, spec)


def test_width_below_one_for_negative_alpha():
    spec = ProblemSpec.symmetric(alpha=-0.5, p=2.0)
    assert delta_bound(1e-6, spec) < 1.0


def test_grid_quadrature():
    grid = PatchGrid(0.3)
    assert grid.total(grid.x ** 3) == pytest.approx(0.3 ** 4 / 4, rel=1e-14)
    assert np.allclose(grid.cumulative(np.cos(grid.x)), np.sin(grid.x), atol=1e-15)
    assert np.allclose(grid.derivative(grid.x ** 2), 2 * grid.x, atol=1e-10)


def test_T_with_vanishing_weight():
    # N = 2 and k- = K- give N_k = 1, so (N_k - 1)(1 + alpha) = 0
    spec = ProblemSpec.symmetric(dimension=2, p=2.0)
    grid = PatchGrid(0.1)
    out = apply_T(np.ones_like(grid.x), grid, 1.0, 1.0, spec, weight=0.0)
    assert np.allclose(out, 1.0 - grid.x ** 2 / 2.0, atol=1e-15)
    grid_end = np.append(grid.x, 0.1)
    assert 1.0 - grid_end[-1] ** 2 / 2.0 == pytest.approx(0.995, abs=1e-15)


def test_T_with_integrating_factor_weight():
    spec = ProblemSpec.symmetric(dimension=2, p=2.0)
    assert weight_exponent(spec) == 1.0
    grid = PatchGrid(0.1)
    out = apply_T(np.ones_like(grid.x), grid, 1.0, 1.0, spec)

    def W(t):
        return (t * t - 1.0) / (2.0 * t)

    for i in (0, 100, len(grid.x) - 1):
        expected = 1.0 - quad(W, 1.0, 1.0 + grid.x[i], epsabs=1e-16)[0]
        assert out[i] == pytest.approx(expected, abs=1e-14)
    # closed form at the far end: 1 - (1.1^2 - 1)/4 + log(1.1)/2
    assert 1.0 - 0.21 / 4.0 + 0.5 * math.log(1.1) == pytest.approx(0.995155, abs=1e-6)
    patch = solve_patch(1.0, 1.0, spec, delta=0.1)
    # the fixed point sits below A, so it drops less than the constant input
    assert 0.995155 < patch.u_exit < 1.0


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0), st.floats(1.0, 5.0))
def test_T_is_order_reversing_and_pins_the_centre(seed, A, r0):
    spec = draw_spec(np.random.default_rng(seed))
    grid = PatchGrid(delta_bound(A, spec, max(spec.b, r0)))
    u, v = ball_profiles(grid, A, np.random.default_rng(seed), 2)
    lo, hi = np.minimum(u, v), np.maximum(u, v)
    T_lo, T_hi = apply_T(lo, grid, r0, A, spec), apply_T(hi, grid, r0, A, spec)
    # a larger profile drops faster
    assert np.all(T_hi <= T_lo + 1e-14 * A)
    assert grid.cumulative(np.zeros_like(grid.x))[0] == 0.0
    assert abs(T_lo[0] - A) <= 1e-6 * A


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_contraction_on_the_ball(seed, A):
    spec = draw_spec(np.random.default_rng(seed))
    grid = PatchGrid(delta_bound(A, spec))
    u, v = ball_profiles(grid, A, np.random.default_rng(seed), 2)
    assert np.max(np.abs(u - A)) < 0.5 * A
    assert contraction_estimate(u, v, grid, 1.3, A, spec) < 0.5
    assert contraction_estimate(u, u, grid, 1.3, A, spec) == 0.0


def test_ratio_grows_with_width():
    spec = ProblemSpec.symmetric(alpha=1.0, p=3.0)
    rng = np.random.default_rng(3)
    ratios = []
    for delta in (0.05, 0.2, 0.8):
        grid = PatchGrid(delta)
        u, v = ball_profiles(grid, 1.0, rng, 2)
        ratios.append(contraction_estimate(u, v, grid, 1.0, 1.0, spec))
    assert ratios[0] < ratios[1] < ratios[2]


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 20.0))
def test_patch_solution_properties(seed, A):
    spec = draw_spec(np.random.default_rng(seed))
    patch = solve_patch(1.4, A, spec)
    assert patch.iterates <= 60
    assert patch.final_defect <= max(1e-12, 64 * np.finfo(float).eps * A)
    assert np.all(np.abs(patch.u - A) <= 0.5 * A)
    assert np.all(np.diff(patch.u) <= 0)
    assert patch.w_exit < 0
    assert patch.u_exit < A
    assert patch_residual(patch, spec, 1e-6) < 1e-8


@pytest.mark.parametrize("alpha", [0.0, 0.5, 2.0])
def test_patch_agrees_with_reference(alpha):
    spec = ProblemSpec(3, alpha, 4.0, 1.0, 2.0, 1.0, 1.5, 1.5, 2.0, 1.0, 2.0)
    r0, A = 1.3, 1.2
    patch = solve_patch(r0, A, spec)
    ref = momentum_reference(spec, r0, A, patch.r_exit)
    inner = patch.r > r0 + 1e-6
    ref_u = ref.sol(patch.r[inner])[0]
    assert np.max(np.abs(patch.u[inner] - ref_u)) <= 1e-8
    u_end, w_end = ref.y[:, -1]
    assert patch.u_exit == pytest.approx(u_end, abs=1e-8)
    assert patch.w_exit == pytest.approx(w_end, abs=1e-8)
