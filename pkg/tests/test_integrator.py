import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from annulus_shooter.errors import NoSignChange
from annulus_shooter.integrator import Termination, integrate, locate_event, step
from annulus_shooter.model import DEFAULT_CONTROLS, ProblemSpec, draw_spec
from annulus_shooter.radial_operator import PhasePoint, momentum_rhs

from oracles import laplacian_shot


def _reference_step(pt, h, spec):
    sol = solve_ivp(lambda r, y: list(momentum_rhs(PhasePoint(r, y[0], y[1]), spec)),
                    (pt.r, pt.r + h), [pt.u, pt.w], method="DOP853", rtol=3e-14, atol=1e-16)
    return sol.y[:, -1]


def test_zero_state_is_fixed():
    spec = ProblemSpec.symmetric(alpha=0.5)
    new, err = step(PhasePoint(1.0, 0.0, 0.0), 0.1, spec)
    assert (new.u, new.w, err) == (0.0, 0.0, 0.0)
    assert new.r == pytest.approx(1.1)


@pytest.mark.parametrize("alpha, pt", [(0.0, PhasePoint(1.0, 0.0, 5.0)),
                                       (1.0, PhasePoint(1.2, 0.3, 2.0)),
                                       (-0.4, PhasePoint(1.5, 0.8, -1.0))])
def test_step_matches_reference(alpha, pt):
    spec = ProblemSpec.symmetric(alpha=alpha, p=3.0)
    new, _ = step(pt, 1e-3, spec)
    ref = _reference_step(pt, 1e-3, spec)
    assert new.u == pytest.approx(ref[0], abs=1e-10)
    assert new.w == pytest.approx(ref[1], abs=1e-10)


def test_error_estimate_is_fifth_order():
    spec = ProblemSpec.symmetric(p=3.0)
    # u away from 0 so the error weights barely move with h
    pt = PhasePoint(1.0, 1.0, 5.0)
    _, e1 = step(pt, 0.02, spec)
    _, e2 = step(pt, 0.01, spec)
    assert 32.0 * 0.8 <= e1 / e2 <= 32.0 * 1.2


def test_locate_event_examples():
    assert locate_event(lambda x: x - 0.3, (0.0, 1.0)) == pytest.approx(0.3, abs=1e-12)
    assert locate_event(math.cos, (1.0, 2.0)) == pytest.approx(math.pi / 2, abs=1e-12)
    assert locate_event(lambda x: x, (0.0, 1.0)) == 0.0
    with pytest.raises(NoSignChange):
        locate_event(lambda x: x * x + 1.0, (-1.0, 1.0))


def _check_shot_shape(traj, out, spec):
    assert traj.r[0] == spec.a
    assert np.all(np.diff(traj.r) > 0)
    if out.tau is not None:
        rise = traj.r < out.tau
        assert np.all(traj.w[rise] >= -1e-12)
        assert np.all(traj.w[traj.r > out.tau] <= 1e-12)
        assert out.u_at_tau == pytest.approx(np.max(traj.u), rel=1e-9)
    if out.hit_zero:
        assert traj.r[-1] == out.rho
        assert out.du_at_rho < 0
        inner = traj.r < out.rho
        assert np.all(traj.u[inner][1:] > 0)
    else:
        assert out.rho is None and out.du_at_rho is None


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.5, 5.0, 50.0]))
def test_shot_invariants(seed, gamma):
    spec = draw_spec(np.random.default_rng(seed))
    traj, out = integrate(gamma, spec)
    assert out.termination in (Termination.HIT_ZERO, Termination.TRUNCATED)
    _check_shot_shape(traj, out, spec)


def test_laplacian_zero_matches_reference(laplace):
    _, out = integrate(5.0, laplace)
    _, rho = laplacian_shot(5.0)
    assert out.hit_zero
    assert out.rho == pytest.approx(rho, abs=1e-7)


def test_tightening_tolerance_reduces_error(laplace):
    _, rho = laplacian_shot(5.0)
    errors = []
    for rtol in (1e-5, 1e-8, 1e-11):
        c = dataclasses.replace(DEFAULT_CONTROLS, rel_tol=rtol, abs_tol=rtol * 1e-3)
        errors.append(abs(integrate(5.0, laplace, c)[1].rho - rho))
    assert errors[0] > errors[1] > errors[2]


def test_negated_trajectory():
    traj, out = integrate(3.0, ProblemSpec.symmetric(alpha=0.5))
    neg = traj.negated()
    assert np.array_equal(neg.u, -traj.u)
    r = 0.5 * (traj.r[3] + traj.r[4])
    assert neg.evaluate(r)[0] == -traj.evaluate(r)[0]


def test_patch_is_used_only_for_positive_alpha():
    t1, _ = integrate(3.0, ProblemSpec.symmetric(alpha=0.5))
    t0, _ = integrate(3.0, ProblemSpec.symmetric(alpha=0.0))
    t2, _ = integrate(3.0, ProblemSpec.symmetric(alpha=-0.5, p=2.0))
    assert len(t1.patches) == 1
    assert t0.patches == [] and t2.patches == []


def test_truncated_when_gamma_tiny():
    spec = ProblemSpec.symmetric(dimension=4, p=4.0)
    c = dataclasses.replace(DEFAULT_CONTROLS, r_max=20.0)
    traj, out = integrate(1e-3, spec, c)
    assert out.termination is Termination.TRUNCATED
    assert traj.r[-1] == pytest.approx(20.0)
    assert np.all(traj.u[1:] > 0)


def test_gamma_must_be_positive(laplace):
    with pytest.raises(ValueError):
        integrate(0.0, laplace)
