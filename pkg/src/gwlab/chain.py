"""Monte Carlo simulation of Galton-Watson trajectories."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .offspring import OffspringLaw, Pmf, sample_many, sample_sum
from .rng import derive_seed, stream

DEFAULT_POPULATION_CAP = 10**7
# above this many parents a generation is drawn as one aggregate count
DIRECT_DRAW_LIMIT = 64
CHUNK = 2048
_MAX_PARENTS = 2**53


class PopulationOverflowError(ArithmeticError):
    """A generation would not fit in a 64-bit population count."""

    def __init__(self, parents: int):
        self.parents = parents
        super().__init__(f"population of {parents} parents overflows the 64-bit sampler")


@dataclass(frozen=True)
class ChainConfig:
    offspring: OffspringLaw
    initial: Union[int, Pmf] = 1
    horizon: int = 50
    population_cap: int = DEFAULT_POPULATION_CAP
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.population_cap < 1:
            raise ValueError("population_cap must be >= 1")
        if isinstance(self.initial, int) and self.initial < 0:
            raise ValueError("initial population must be non-negative")


@dataclass(frozen=True)
class Trajectory:
    """One path ``Y_0, ..., Y_k``.

    ``tau`` is the extinction time, or None when the path was still alive at
    the end (``censored``). ``capped`` marks a path stopped because it
    exceeded the population cap; it counts as alive from then on.
    """

    sizes: tuple
    tau: Optional[int]
    censored: bool
    seed: int
    capped: bool = False

    def size_at(self, t: int) -> Optional[int]:
        """``Y_t``, 0 after extinction, None if unknown (capped before t)."""
        if t < len(self.sizes):
            return self.sizes[t]
        if self.tau is not None:
            return 0
        return None

    def alive_at(self, t: int) -> bool:
        y = self.size_at(t)
        return y is None or y > 0


def tau_of(traj: Trajectory) -> Optional[int]:
    """First index with ``Y_n = 0``, or None ("not yet") for censored paths."""
    for n, y in enumerate(traj.sizes):
        if y == 0:
            return n
    return None


def _initial_size(initial, rng: np.random.Generator) -> int:
    if isinstance(initial, Pmf):
        if initial.tail_mass > 1e-12:
            raise ValueError("cannot sample an initial law with tail mass")
        cdf = np.cumsum(initial.probs)
        return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return int(initial)


def step(y: int, law: OffspringLaw, rng: np.random.Generator) -> int:
    """One generation: the total offspring of ``y`` independent parents."""
    if y < 0:
        raise ValueError("population must be non-negative")
    if y == 0:
        return 0
    if y > _MAX_PARENTS or (law.descriptor is None and y * law.max_support >= 2**63):
        raise PopulationOverflowError(y)
    if y <= DIRECT_DRAW_LIMIT:
        return int(sample_many(law, rng, y).sum())
    return sample_sum(law, rng, y)


def simulate(config: ChainConfig) -> Trajectory:
    rng = stream(config.seed)
    y = _initial_size(config.initial, rng)
    sizes = [y]
    capped = False
    for _ in range(config.horizon):
        if y == 0:
            break
        y = step(y, config.offspring, rng)
        sizes.append(y)
        if y > config.population_cap:
            capped = True
            break
    tau = len(sizes) - 1 if sizes[-1] == 0 else None
    return Trajectory(tuple(sizes), tau, tau is None, config.seed, capped)


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AtLeast:
    """Picklable predicate ``Y_t >= level``; capped paths count as satisfying it."""

    t: int
    level: int

    def __call__(self, traj: Trajectory) -> bool:
        y = traj.size_at(self.t)
        return True if y is None else y >= self.level


@dataclass
class EnsembleStats:
    runs: int
    horizon: int
    survival_counts: list  # index t: number of paths alive at t
    tau_histogram: dict  # tau -> count, extinct paths only
    censored: int
    capped: int
    pop_sum: list  # index t: sum of observed Y_t (capped paths excluded)
    pop_sqsum: list
    pop_n: list
    event_count: int = 0
    predicate: Optional[str] = None
    confidence_method: str = "hoeffding"
    master_seed: int = 0

    def survival_fraction(self, t: int) -> float:
        return self.survival_counts[t] / self.runs

    def survival_se(self, t: int) -> float:
        p = self.survival_fraction(t)
        return math.sqrt(p * (1 - p) / self.runs)

    def mean_pop(self, t: int) -> float:
        n = self.pop_n[t]
        return self.pop_sum[t] / n if n else math.nan

    def mean_pop_se(self, t: int) -> float:
        n = self.pop_n[t]
        if n < 2:
            return math.nan
        m = self.pop_sum[t] / n
        var = (self.pop_sqsum[t] - n * m * m) / (n - 1)
        return math.sqrt(max(var, 0.0) / n)

    @property
    def event_fraction(self) -> float:
        return self.event_count / self.runs

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "horizon": self.horizon,
            "master_seed": self.master_seed,
            "survival_counts": list(self.survival_counts),
            "tau_histogram": {str(k): v for k, v in sorted(self.tau_histogram.items())},
            "censored": self.censored,
            "capped": self.capped,
            "pop_sum": list(self.pop_sum),
            "pop_sqsum": list(self.pop_sqsum),
            "pop_n": list(self.pop_n),
            "event_count": self.event_count,
            "predicate": self.predicate,
            "confidence_method": self.confidence_method,
        }


def _empty_stats(config: ChainConfig, runs: int, predicate) -> EnsembleStats:
    h = config.horizon + 1
    return EnsembleStats(
        runs=runs,
        horizon=config.horizon,
        survival_counts=[0] * h,
        tau_histogram={},
        censored=0,
        capped=0,
        pop_sum=[0] * h,
        pop_sqsum=[0] * h,
        pop_n=[0] * h,
        predicate=None if predicate is None else repr(predicate),
        master_seed=config.seed,
    )


def _run_chunk(config: ChainConfig, start: int, stop: int, predicate) -> EnsembleStats:
    stats = _empty_stats(config, stop - start, predicate)
    h = config.horizon + 1
    # paths that stop early add to every later slot; record the start index once
    extinct_from = [0] * (h + 1)
    capped_from = [0] * (h + 1)
    for i in range(start, stop):
        traj = simulate(replace(config, seed=derive_seed(config.seed, i)))
        sizes = traj.sizes
        for t, y in enumerate(sizes):
            stats.pop_sum[t] += y
            stats.pop_sqsum[t] += y * y
            stats.pop_n[t] += 1
            if y:
                stats.survival_counts[t] += 1
        if traj.tau is not None:
            stats.tau_histogram[traj.tau] = stats.tau_histogram.get(traj.tau, 0) + 1
            extinct_from[len(sizes)] += 1
        else:
            stats.censored += 1
            if traj.capped:
                stats.capped += 1
                capped_from[len(sizes)] += 1
        if predicate is not None and predicate(traj):
            stats.event_count += 1
    extinct = capped = 0
    for t in range(h):
        extinct += extinct_from[t]
        capped += capped_from[t]
        stats.pop_n[t] += extinct
        stats.survival_counts[t] += capped
    return stats


def _merge(total: EnsembleStats, part: EnsembleStats) -> None:
    for name in ("survival_counts", "pop_sum", "pop_sqsum", "pop_n"):
        a, b = getattr(total, name), getattr(part, name)
        for t in range(len(a)):
            a[t] += b[t]
    for k, v in part.tau_histogram.items():
        total.tau_histogram[k] = total.tau_histogram.get(k, 0) + v
    total.censored += part.censored
    total.capped += part.capped
    total.event_count += part.event_count


def batch_simulate(
    config: ChainConfig,
    runs: int,
    predicate: Optional[Callable[[Trajectory], bool]] = None,
    workers: int = 1,
) -> EnsembleStats:
    """Simulate ``runs`` independent paths and aggregate counts.

    Path ``i`` is seeded with ``derive_seed(config.seed, i)``. All aggregates
    are integer counts, so the result does not depend on ``workers``. With
    ``workers > 1`` the predicate must be picklable (e.g. ``AtLeast``).
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    bounds = [(s, min(s + CHUNK, runs)) for s in range(0, runs, CHUNK)]
    total = _empty_stats(config, runs, predicate)
    if workers <= 1 or len(bounds) == 1:
        parts = (_run_chunk(config, a, b, predicate) for a, b in bounds)
        for part in parts:
            _merge(total, part)
        return total
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_chunk, config, a, b, predicate) for a, b in bounds]
        for fut in futures:
            _merge(total, fut.result())
    return total


def hoeffding_halfwidth(runs: int, confidence: float) -> float:
    """One-sided Hoeffding deviation for a mean of ``runs`` [0,1] variables."""
    if not 0 < confidence < 1:
        raise ValueError("confidence must lie in (0, 1)")
    return math.sqrt(math.log(1.0 / (1.0 - confidence)) / (2.0 * runs))
