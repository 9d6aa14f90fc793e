import math

import numpy as np
import pytest

from gwlab.chain import (
    AtLeast,
    ChainConfig,
    PopulationOverflowError,
    Trajectory,
    batch_simulate,
    hoeffding_halfwidth,
    simulate,
    step,
    tau_of,
)
from gwlab.exact import extinction_by, extinction_probability, law_at
from gwlab.offspring import Pmf, delta, mean, two_point
from gwlab.rng import derive_seed, stream

half = two_point(0.5)


def test_step_basic():
    rng = stream(0)
    assert step(0, half, rng) == 0
    assert step(5, delta(2), rng) == 10
    with pytest.raises(ValueError):
        step(-1, half, rng)


@pytest.mark.parametrize("y", [10, 1000])
def test_step_clt(y):
    rng = stream(11)
    reps = 2000
    draws = np.array([step(y, half, rng) for _ in range(reps)])
    # mean y, sd sqrt(y) per draw
    assert abs(draws.mean() - y) <= 4 * math.sqrt(y / reps)
    assert set(np.unique(draws % 2)) == {0}


def test_step_overflow_is_reported():
    with pytest.raises(PopulationOverflowError):
        step(2**62, half, stream(0))


def test_simulate_examples():
    t = simulate(ChainConfig(half, 0, 5))
    assert t.sizes == (0,) and t.tau == 0 and not t.censored
    t = simulate(ChainConfig(delta(1), 7, 10))
    assert t.sizes == (7,) * 11 and t.tau is None and t.censored
    t = simulate(ChainConfig(delta(0), 5, 10))
    assert t.sizes == (5, 0) and t.tau == 1


def test_simulate_is_deterministic():
    cfg = ChainConfig(two_point(0.25), 3, 30, seed=1234)
    assert simulate(cfg) == simulate(cfg)


def test_population_cap_censors_alive():
    t = simulate(ChainConfig(delta(2), 1, 40, population_cap=1000))
    assert t.capped and t.censored and t.tau is None
    assert t.sizes[-1] == 1024
    assert t.alive_at(40)


def test_random_initial_law():
    init = Pmf([0.0, 0.5, 0.5])
    sizes = {simulate(ChainConfig(delta(1), init, 1, seed=s)).sizes[0] for s in range(50)}
    assert sizes == {1, 2}


def test_tau_of():
    assert tau_of(Trajectory((5, 3, 0, 0), 2, False, 0)) == 2
    assert tau_of(Trajectory((0,), 0, False, 0)) == 0
    assert tau_of(Trajectory((1, 2, 4), None, True, 0)) is None


def test_absorption_and_tau_invariant():
    for s in range(300):
        t = simulate(ChainConfig(half, 2, 25, seed=s))
        zeros = [i for i, y in enumerate(t.sizes) if y == 0]
        if zeros:
            assert zeros == [len(t.sizes) - 1]
            assert t.tau == zeros[0] == tau_of(t)
        assert t.censored == (t.tau is None)


def test_derived_seeds_are_distinct():
    seeds = {derive_seed(7, i) for i in range(10_000)}
    assert len(seeds) == 10_000
    assert derive_seed(7, 3) != derive_seed(8, 3)


def test_batch_deterministic_across_workers():
    cfg = ChainConfig(two_point(0.25), 1, 15, seed=99)
    serial = batch_simulate(cfg, 5000, AtLeast(15, 4), workers=1)
    parallel = batch_simulate(cfg, 5000, AtLeast(15, 4), workers=3)
    assert serial.to_dict() == parallel.to_dict()
    # any single path can be replayed from its derived seed
    from dataclasses import replace

    lone = simulate(replace(cfg, seed=derive_seed(99, 4321)))
    assert lone.seed == derive_seed(99, 4321)


def test_batch_all_extinct():
    stats = batch_simulate(ChainConfig(delta(0), 3, 5, seed=1), 100)
    assert stats.survival_counts[1] == 0
    assert stats.tau_histogram == {1: 100}


def test_batch_subcritical_vs_mean_bound():
    law = two_point(0.75)
    runs = 100_000
    stats = batch_simulate(ChainConfig(law, 1, 3, seed=5), runs)
    est = stats.survival_fraction(3)
    sigma = math.sqrt(0.5**3 * (1 - 0.5**3) / runs)
    assert est <= 0.5**3 + 3 * sigma
    exact = 1.0 - extinction_by(1, law, 3).value
    assert abs(est - exact) <= 4 * math.sqrt(exact * (1 - exact) / runs)


@pytest.mark.slow
def test_batch_supercritical_survival():
    runs = 100_000
    stats = batch_simulate(ChainConfig(two_point(0.25), 1, 30, seed=6), runs)
    est = stats.survival_fraction(30)
    truth = 1 - 1 / 3
    assert abs(est - truth) <= 3 * math.sqrt(truth * (1 - truth) / runs) + 1e-6


@pytest.mark.parametrize("law", [two_point(0.25), two_point(0.75), two_point(0.2, 3)])
def test_moment_identity(law):
    runs, n0 = 100_000, 2
    stats = batch_simulate(ChainConfig(law, n0, 10, seed=8), runs)
    m = mean(law)
    for t in range(11):
        assert stats.pop_n[t] == runs
        assert abs(stats.mean_pop(t) - m**t * n0) <= 4 * stats.mean_pop_se(t) + 1e-12


def test_extinction_power_statistical():
    law = two_point(0.25)
    runs, horizon = 50_000, 40
    q1 = batch_simulate(ChainConfig(law, 1, horizon, seed=21), runs).survival_fraction(horizon)
    q3 = batch_simulate(ChainConfig(law, 3, horizon, seed=22), runs).survival_fraction(horizon)
    e1, e3 = 1 - q1, 1 - q3
    se = math.sqrt(e3 * (1 - e3) / runs) + 3 * e1**2 * math.sqrt(e1 * (1 - e1) / runs)
    assert abs(e3 - e1**3) <= 4 * se
    assert e1**3 == pytest.approx(extinction_probability(law) ** 3, abs=0.01)


def test_event_predicate_and_hoeffding():
    law = two_point(0.5)
    stats = batch_simulate(ChainConfig(law, 1, 2, seed=3), 40_000, AtLeast(2, 2))
    exact = law_at(1, law, 2).mass_at_least(2)
    assert exact == 0.375
    assert abs(stats.event_fraction - exact) <= 4 * math.sqrt(exact * (1 - exact) / 40_000)
    assert hoeffding_halfwidth(10_000, 0.99) == pytest.approx(math.sqrt(math.log(100) / 20_000))
