"""Pairs of chains built on one shared array of offspring draws.

Generation n draws ``X_1^n, X_2^n, ...`` in index order, one per member of
the largest population. The dominated chain reads a prefix of the same
draws, which is what makes the pathwise order hold surely rather than in law.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import DEFAULT_POPULATION_CAP, ChainConfig, Trajectory, simulate
from .exact import InvariantViolation
from .offspring import OffspringLaw, sample_many
from .rng import derive_seed, stream


@dataclass(frozen=True)
class CoupledPath:
    upper: Trajectory
    lower: Trajectory
    relation: str
    shared_seed: int
    # thinning only: whether the two chains agreed at every step
    identical: Optional[bool] = None


def _trajectory(sizes: list, seed: int, capped: bool) -> Trajectory:
    tau = next((n for n, y in enumerate(sizes) if y == 0), None)
    if tau is not None:
        sizes = sizes[: tau + 1]
    return Trajectory(tuple(int(y) for y in sizes), tau, tau is None, seed, capped and tau is None)


def couple_superposition(law: OffspringLaw, t: int, seed: int):
    """Two independent chains from one individual each, and their sum.

    Returns ``(x, y, total)`` where ``total.sizes[k] == x_k + y_k``.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    x = simulate(ChainConfig(law, 1, t, seed=derive_seed(seed, 0)))
    y = simulate(ChainConfig(law, 1, t, seed=derive_seed(seed, 1)))
    if x.capped or y.capped:
        raise RuntimeError("population cap reached in superposition")
    sums = [(x.size_at(k) or 0) + (y.size_at(k) or 0) for k in range(t + 1)]
    total = _trajectory(sums, seed, False)
    for k in range(len(total.sizes)):
        if total.sizes[k] != x.size_at(k) + y.size_at(k):
            raise InvariantViolation(f"superposition mismatch at {k}")
    return x, y, total


def _check_integer_rate(a) -> int:
    if isinstance(a, (int, np.integer)) or (isinstance(a, float) and a.is_integer()):
        a = int(a)
        if a >= 1:
            return a
    raise ValueError(f"block rate must be an integer >= 1, got {a!r}")


def couple_block_minorant(
    law: OffspringLaw,
    N: int,
    a,
    t: int,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> CoupledPath:
    """Chain ``Y`` from ``N`` and the block chain ``M`` from 1 on shared draws.

    Block ``i`` of generation n is draws ``(i-1)N+1 .. iN``; it succeeds when
    their total reaches ``aN``, and each success contributes ``a`` to
    ``M_{n+1}``. Asserts ``Y_n >= N * M_n`` at every step.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    a = _check_integer_rate(a)
    rng = stream(seed)
    y, m = N, 1
    ys, ms = [y], [m]
    capped = False
    for _ in range(t):
        if y == 0:
            break
        draws = sample_many(law, rng, y)
        blocks = draws[: N * m].reshape(m, N).sum(axis=1) if m else np.zeros(0)
        m = a * int(np.count_nonzero(blocks >= a * N))
        y = int(draws.sum())
        ys.append(y)
        ms.append(m)
        if y < N * m:
            raise InvariantViolation(f"Y={y} < N*M={N * m} at step {len(ys) - 1} (seed {seed})")
        if y > population_cap:
            capped = True
            break
    return CoupledPath(_trajectory(ys, seed, capped), _trajectory(ms, seed, capped), "upper >= N*lower", seed)


def couple_thinning(
    law: OffspringLaw,
    p: float,
    N: int,
    t: int,
    seed: int,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> CoupledPath:
    """Chain ``Y`` and its Bernoulli(p)-thinned copy ``Y^p``, both from ``N``.

    Individual ``i`` of ``Y^p`` has ``B_i X_i`` children, reusing ``X_i`` from
    ``Y``. Marks come from a second stream keyed by the same seed.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"thinning probability {p!r} outside [0, 1]")
    draws_rng, marks_rng = stream(seed, 0), stream(seed, 1)
    y = yp = N
    ys, yps = [y], [yp]
    capped = False
    for _ in range(t):
        if y == 0:
            break
        draws = sample_many(law, draws_rng, y)
        marks = marks_rng.random(y) < p
        yp = int(draws[:yp][marks[:yp]].sum())
        y = int(draws.sum())
        ys.append(y)
        yps.append(yp)
        if yp > y:
            raise InvariantViolation(f"thinned {yp} > full {y} at step {len(ys) - 1} (seed {seed})")
        if y > population_cap:
            capped = True
            break
    identical = ys == yps
    return CoupledPath(_trajectory(ys, seed, capped), _trajectory(yps, seed, capped), "lower <= upper", seed, identical)


def couple_truncation(
    law: OffspringLaw,
    M: int,
    t: int,
    seed: int,
    initial: int = 1,
    population_cap: int = DEFAULT_POPULATION_CAP,
) -> CoupledPath:
    """Chain ``Y`` and the chain ``Z`` whose members have ``min(X_i, M)`` children."""
    if M < 0:
        raise ValueError("truncation level must be non-negative")
    rng = stream(seed)
    y = z = initial
    ys, zs = [y], [z]
    capped = False
    for _ in range(t):
        if y == 0:
            break
        draws = sample_many(law, rng, y)
        z = int(np.minimum(draws[:z], M).sum())
        y = int(draws.sum())
        ys.append(y)
        zs.append(z)
        if z > y:
            raise InvariantViolation(f"truncated {z} > full {y} at step {len(ys) - 1} (seed {seed})")
        if y > population_cap:
            capped = True
            break
    return CoupledPath(_trajectory(ys, seed, capped), _trajectory(zs, seed, capped), "lower <= upper", seed)
