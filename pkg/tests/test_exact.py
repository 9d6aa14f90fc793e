from fractions import Fraction as F

import numpy as np
import pytest

from gwlab.exact import (
    ConvergenceError,
    InvariantViolation,
    TransitionKernel,
    extinction_by,
    extinction_curve,
    extinction_limit,
    extinction_probability,
    law_at,
    phi,
    propagate,
    skeleton_law,
    sum_law,
)
from gwlab.offspring import OffspringLaw, Pmf, convolve, delta, geometric, max_abs_diff, poisson, two_point

import oracles
from conftest import FINITE, to_law

half = two_point(0.5)
super_law = two_point(0.25)


def test_propagate_examples():
    assert propagate(Pmf.delta(0), half, 16) == Pmf([1.0])
    one = propagate(Pmf.delta(1), half, 16)
    assert np.allclose(one.probs, [0.5, 0, 0.5])
    two = propagate(Pmf.delta(2), half, 16)
    assert np.allclose(two.probs, [0.25, 0, 0.5, 0, 0.25])


def test_law_at_examples():
    assert law_at(Pmf([0.2, 0.8]), half, 0) == Pmf([0.2, 0.8])
    two = law_at(1, half, 2)
    assert np.allclose(two.probs, [5 / 8, 0, 1 / 4, 0, 1 / 8], atol=0)


@pytest.mark.parametrize("n0,t", [(1, 3), (2, 2), (3, 2)])
def test_law_at_matches_enumeration(finite_case, n0, t):
    _, d, law = finite_case
    expected = oracles.law_at(n0, d, t)
    got = law_at(n0, law, t, cap=256)
    assert got.tail_mass == 0
    assert max_abs_diff(got, oracles.dense(expected)) < 1e-14


def test_propagate_tail_is_pessimistic():
    got = law_at(1, super_law, 4, cap=8)
    exact = oracles.law_at(1, FINITE["super"], 4)
    for k in range(9):
        assert got.mass_at(k) == pytest.approx(float(exact.get(k, 0)), abs=1e-15)
    assert got.tail_mass == pytest.approx(float(sum(p for k, p in exact.items() if k > 8)), abs=1e-15)


def test_propagate_forwards_pop_tail():
    pop = Pmf([0.5, 0.25], tail_mass=0.25)
    out = propagate(pop, half, 8)
    assert out.tail_mass == pytest.approx(0.25)
    assert out.mass_at(0) == pytest.approx(0.5 + 0.125)


def test_extinction_mass_monotone():
    prev = -1.0
    for b in extinction_curve(1, half, 30):
        assert b.value >= prev
        prev = b.value


def test_extinction_by_examples():
    assert extinction_by(1, delta(0), 1).value == 1.0
    assert extinction_by(1, two_point(0.75), 1).value == 0.75
    b = extinction_by(1, super_law, 20)
    assert b.value < 1 / 3
    assert 1 / 3 - b.value < 1e-6
    assert b.upper == pytest.approx(b.value, abs=1e-12)


def test_extinction_upper_bound_contains_truth():
    # cap small enough that mass escapes; the refined upper must still cover the truth
    cap = 16
    for t in range(1, 7):
        truth = float(oracles.law_at(1, FINITE["super"], t)[0])
        b = extinction_by(1, super_law, t, cap)
        assert b.value <= truth + 1e-15 <= b.upper + 2e-15


def test_extinction_probability_examples():
    assert extinction_probability(super_law) == pytest.approx(1 / 3, abs=1e-10)
    assert extinction_probability(OffspringLaw.from_dict({1: 0.5, 2: 0.5})) == 0.0
    assert extinction_probability(delta(1)) == 0.0
    # near-critical slow convergence: tol bounds the step, not the distance
    assert extinction_probability(half, tol=1e-10) == pytest.approx(1.0, abs=1e-4)


def test_extinction_probability_budget():
    with pytest.raises(ConvergenceError) as info:
        extinction_probability(half, tol=1e-15, max_iter=1000)
    assert 0.99 < info.value.last < 1


@pytest.mark.parametrize("name", ["sub", "super", "three"])
def test_extinction_probability_vs_bisection(name):
    d = FINITE[name]
    q = extinction_probability(to_law(d))
    assert q == pytest.approx(oracles.smallest_root({k: float(p) for k, p in d.items()}), abs=1e-9)


def test_parametric_extinction():
    # Poisson(2): q = exp(2(q-1)); geometric(1/3) has m = 2 and q = p/(1-p) = 1/2
    q = extinction_probability(poisson(2.0))
    assert q == pytest.approx(np.exp(2 * (q - 1)), abs=1e-12)
    assert extinction_probability(geometric(1 / 3)) == pytest.approx(0.5, abs=1e-10)


def test_extinction_limit_agrees_with_fixed_point():
    for law in (super_law, two_point(0.75), poisson(1.5)):
        q = extinction_probability(law)
        for n in (1, 2, 4):
            lim = extinction_limit(n, law, cap=1024)
            assert lim.value == pytest.approx(q**n, abs=1e-9)


def test_sum_law_examples():
    got = sum_law(1, 1, half, 1, 64)
    assert np.allclose(got.probs, [0.25, 0, 0.5, 0, 0.25])
    assert max_abs_diff(sum_law(Pmf([0.5, 0.5]), 2, half, 0, 64), convolve(Pmf([0.5, 0.5]), Pmf.delta(2), 64)) == 0
    assert max_abs_diff(sum_law(0, 3, half, 3, 64), law_at(3, half, 3, 64)) < 1e-15


@pytest.mark.parametrize("a,b,t", [(1, 2, 3), (2, 2, 3), (3, 1, 2)])
def test_sum_law_matches_enumeration(a, b, t):
    d = FINITE["three"]
    expected = oracles.conv(oracles.law_at(a, d, t), oracles.law_at(b, d, t))
    got = sum_law(a, b, to_law(d), t, cap=512)
    assert max_abs_diff(got, oracles.dense(expected)) < 1e-13


def test_sum_law_detects_violation(monkeypatch):
    import gwlab.exact as ex

    real = ex.law_at

    def skewed(initial, law, t, cap=4096):
        out = real(initial, law, t, cap)
        if isinstance(initial, Pmf) and initial.cap > 1:
            probs = out.probs.copy()
            probs[0] += 1e-6
            probs[-1] -= 1e-6
            return Pmf(probs, out.tail_mass)
        return out

    monkeypatch.setattr(ex, "law_at", skewed)
    with pytest.raises(InvariantViolation):
        ex.sum_law(1, 1, half, 2, 64)


def test_skeleton_examples():
    assert max_abs_diff(skeleton_law(half, 1, 64).probs, half.probs) == 0
    skel = skeleton_law(half, 2, 64)
    assert np.allclose(skel.probs, [5 / 8, 0, 1 / 4, 0, 1 / 8])


def test_skeleton_semigroup():
    for law in (half, super_law, to_law(FINITE["three"])):
        for T in (1, 2):
            for S in (1, 2, 3):
                lhs = skeleton_law(skeleton_law(law, T, 1024), S, 1024)
                rhs = skeleton_law(law, T * S, 1024)
                assert max_abs_diff(lhs, rhs) <= 1e-9


def test_phi_examples():
    assert phi(0, 1, half) == 1.0
    assert phi(1, 2, half) == 0.5
    assert phi(1, 3, half) == 1.0
    assert phi(2, 3, half) == 0.75


def test_transition_kernel_matches_propagate():
    law = poisson(1.3)
    ker = TransitionKernel(law, 128)
    probs, tails = ker.start([1, 3, 200])
    pmfs = [Pmf.delta(1, 128), Pmf.delta(3, 128), Pmf.delta(200, 128)]
    for _ in range(6):
        probs, tails = ker.step(probs, tails)
        pmfs = [propagate(p, law, 128) for p in pmfs]
    for row, pmf in enumerate(pmfs):
        assert np.max(np.abs(probs[row] - np.pad(pmf.probs, (0, 129 - len(pmf.probs))))) < 1e-13
        assert tails[row] == pytest.approx(pmf.tail_mass, abs=1e-12)
    assert tails[2] == 1.0


def test_oracle_convolution_matches_enumeration():
    d = FINITE["three"]
    for y in range(5):
        assert oracles.step_law({y: F(1)}, d) == oracles.enumerate_step(y, d)


def test_tail_warning_once_per_call():
    import warnings

    from gwlab.offspring import TailMassWarning

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        law_at(1, super_law, 12, cap=64)
        list(extinction_curve(1, super_law, 12, cap=64))
    kinds = [w.message.op for w in caught if issubclass(w.category, TailMassWarning)]
    assert kinds == ["law_at", "extinction_curve"]
