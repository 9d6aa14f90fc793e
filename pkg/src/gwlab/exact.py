"""Exact laws of ``Y_t`` on a capped support, and extinction probabilities.

These computations never sample; they serve as the oracle that Monte Carlo
results are checked against. Mass pushed past the cap is kept in
``tail_mass`` and never comes back, so the mass reported at 0 (extinction by
time t) is a certified lower bound and ``value + tail`` an upper bound.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import NamedTuple, Union

import numpy as np

from .offspring import (
    DEFAULT_CAP,
    EPS,
    TAIL_WARN,
    OffspringLaw,
    Pmf,
    _warn_tail,
    convolve,
    convolve_power,
    max_abs_diff,
)

IDENTITY_TOL = 1e-10
FIXED_POINT_BUDGET = 10**6


class InvariantViolation(AssertionError):
    """A distributional identity or pathwise order failed to hold."""


class ConvergenceError(RuntimeError):
    def __init__(self, last: float, iterations: int):
        self.last = last
        self.iterations = iterations
        super().__init__(f"fixed-point iteration did not converge in {iterations} steps (last {last!r})")


class ExtinctionBound(NamedTuple):
    """Two-sided bound on P(tau <= t).

    ``value`` is the exact mass at 0 (a lower bound), ``tail`` the raw mass
    that escaped the cap, and ``upper`` a refined upper bound that charges
    escaped mass with the chance a population that large dies out in time.
    """

    value: float
    tail: float
    upper: float

    @property
    def error(self) -> float:
        return self.upper - self.value


def _as_pmf(initial: Union[int, Pmf], cap: int) -> Pmf:
    return Pmf.delta(initial, cap) if isinstance(initial, (int, np.integer)) else initial


def _clean(probs: np.ndarray, tail: float) -> Pmf:
    # cancellation in long sums can leave the total a hair above 1
    excess = float(probs.sum()) + tail - 1.0
    if excess > 0 and tail > 0:
        tail = max(0.0, tail - excess)
    return Pmf(probs, tail)


def propagate(pop: Pmf, law: OffspringLaw, cap: int = DEFAULT_CAP, warn: bool = True) -> Pmf:
    """Law of the next generation, ``sum_k pop(k) * law^{*k}``, truncated at ``cap``.

    Evaluated Horner-style from the largest occupied state down, one
    convolution with the offspring table per state. Convolution only moves
    mass upward, so cutting at ``cap`` in the middle loses nothing below it.
    """
    nu = law.as_pmf(cap)
    table, nu_tail = nu.probs, nu.tail_mass
    occupied = np.flatnonzero(pop.probs)
    if occupied.size == 0:
        return Pmf(np.zeros(1), 1.0)
    top = int(occupied[-1])
    acc = np.array([pop.probs[top]])
    lost = 0.0
    for k in range(top - 1, -1, -1):
        full = np.convolve(acc, table)
        lost += float(acc.sum()) * nu_tail + float(full[cap + 1 :].sum())
        acc = full[: cap + 1]
        acc[0] += pop.probs[k]
    tail = pop.tail_mass + lost
    if warn:
        _warn_tail("propagate", tail, cap)
    return _clean(acc, tail)


def law_at(initial: Union[int, Pmf], law: OffspringLaw, t: int, cap: int = DEFAULT_CAP) -> Pmf:
    """Law of ``Y_t`` started from ``initial`` (a size or a Pmf)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    pop = _as_pmf(initial, cap)
    for _ in range(t):
        pop = propagate(pop, law, cap, warn=False)
    _warn_tail("law_at", pop.tail_mass, cap)
    return pop


def _escape_floor(law: OffspringLaw, cap: int) -> int:
    """Smallest population size escaped mass can sit at."""
    nu = law.as_pmf(cap)
    if nu.tail_mass > 0:
        return min(cap + 1, law.max_support + 1)
    return cap + 1


def extinction_curve(initial: Union[int, Pmf], law: OffspringLaw, t_max: int, cap: int = DEFAULT_CAP):
    """Yield the bound on P(tau <= t) for t = 0..t_max (see ``extinction_by``)."""
    if t_max < 0:
        raise ValueError("t must be non-negative")
    pop = _as_pmf(initial, cap)
    one = Pmf.delta(1, cap)
    floor = _escape_floor(law, cap)
    escaped = [pop.tail_mass]  # new tail mass per step
    singles = [one.mass_at(0) + one.tail_mass]  # upper bounds on P^1(tau <= r)
    for t in range(t_max + 1):
        if t:
            before = pop.tail_mass
            pop = propagate(pop, law, cap, warn=False)
            escaped.append(max(pop.tail_mass - before, 0.0))
            one = propagate(one, law, cap, warn=False)
            if before <= TAIL_WARN < pop.tail_mass:
                _warn_tail("extinction_curve", pop.tail_mass, cap)
            singles.append(min(1.0, one.mass_at(0) + one.tail_mass))
        value = pop.mass_at(0)
        slack = sum(d * singles[t - s] ** floor for s, d in enumerate(escaped) if d > 0)
        yield ExtinctionBound(value, pop.tail_mass, min(1.0, value + slack, value + pop.tail_mass))


def extinction_by(initial: Union[int, Pmf], law: OffspringLaw, t: int, cap: int = DEFAULT_CAP) -> ExtinctionBound:
    """P(tau <= t) for the chain started from ``initial``.

    Mass escaping at step s sits at a size of at least L (the cap, or the
    offspring table length for a tabulated infinite law) and dies out within
    the remaining r steps with probability at most E_r^L, where E_r bounds
    P^1(tau <= r) from above and comes from the same computation run from 1.
    """
    for bound in extinction_curve(initial, law, t, cap):
        pass
    return bound


def pgf(law: OffspringLaw):
    """Generating function ``s -> E[s^X]`` as a plain float callable."""
    d = law.descriptor
    if d is not None:

        def from_descriptor(desc):
            if desc.family == "poisson":
                return lambda s: math.exp(desc.param * (s - 1.0))
            if desc.family == "geometric":
                return lambda s: desc.param / (1.0 - (1.0 - desc.param) * s)
            inner = from_descriptor(desc.inner)
            return lambda s: 1.0 - desc.param + desc.param * inner(s)

        return from_descriptor(d)
    if law.tail_mass > EPS:
        raise ValueError("generating function unknown: law has an unexplained tail")
    coeffs = [float(c) for c in law.probs[::-1]]

    def horner(s: float) -> float:
        acc = 0.0
        for c in coeffs:
            acc = acc * s + c
        return acc

    return horner


def extinction_probability(law: OffspringLaw, tol: float = 1e-12, max_iter: int = FIXED_POINT_BUDGET) -> float:
    """P^1(tau < inf) as the smallest fixed point of the generating function.

    Iterates ``q <- G(q)`` from 0; the iterates increase to the smallest root.
    The stopping rule is on successive differences, which near criticality
    is far tighter than the true distance to the root.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = pgf(law)
    q = 0.0
    for i in range(max_iter):
        nxt = min(1.0, g(q))
        if abs(nxt - q) < tol:
            return nxt
        q = nxt
    raise ConvergenceError(q, max_iter)


def extinction_limit(
    initial: Union[int, Pmf],
    law: OffspringLaw,
    tol: float = 1e-13,
    cap: int = DEFAULT_CAP,
    max_t: int = 10_000,
) -> ExtinctionBound:
    """lim_t P(tau <= t) by propagating the exact law until it stops moving.

    Independent of the generating function; used to cross-check
    ``extinction_probability`` from several initial sizes.
    """
    pop = _as_pmf(initial, cap)
    prev = pop.mass_at(0)
    for _ in range(max_t):
        pop = propagate(pop, law, cap, warn=False)
        cur = pop.mass_at(0)
        if cur - prev < tol:
            _warn_tail("extinction_limit", pop.tail_mass, cap)
            return ExtinctionBound(cur, pop.tail_mass, min(1.0, cur + pop.tail_mass))
        prev = cur
    raise ConvergenceError(prev, max_t)


def sum_law(a_initial, b_initial, law: OffspringLaw, t: int, cap: int = DEFAULT_CAP) -> Pmf:
    """Law of ``X_t + Y_t`` for independent chains with the same offspring law.

    Computed as the chain started from the convolved initial law, and checked
    pointwise against the convolution of the two separate laws at time t.
    """
    a0, b0 = _as_pmf(a_initial, cap), _as_pmf(b_initial, cap)
    joint = law_at(convolve(a0, b0, cap), law, t, cap)
    separate = convolve(law_at(a0, law, t, cap), law_at(b0, law, t, cap), cap)
    gap = max_abs_diff(joint, separate)
    if gap > IDENTITY_TOL:
        raise InvariantViolation(f"sum of independent chains is not Galton-Watson: gap {gap:.3e}")
    return joint


def skeleton_law(law: OffspringLaw, T: int, cap: int = DEFAULT_CAP, check_upto: int = 5) -> OffspringLaw:
    """Offspring law of the subsampled chain ``(Y_{Tn})``: the law of ``Y_T`` under ``P^1``.

    Verifies ``law_at(k, law, T) == skeleton^{*k}`` below the cap for
    ``k <= check_upto``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    pmf = law_at(1, law, T, cap)
    skel = OffspringLaw(pmf.probs, pmf.tail_mass)
    for k in range(check_upto + 1):
        gap = max_abs_diff(law_at(k, law, T, cap), convolve_power(skel, k, cap))
        if gap > IDENTITY_TOL:
            raise InvariantViolation(f"skeleton law mismatch at k={k}: gap {gap:.3e}")
    return skel


def phi(k: int, x: float, law: OffspringLaw, cap: int = DEFAULT_CAP) -> float:
    """P^k(Y_1 < x)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    return convolve_power(law, k, cap).mass_below(x)


# ---------------------------------------------------------------------------
# batched transitions
# ---------------------------------------------------------------------------


class TransitionKernel:
    """Dense transition matrix ``P[k] = law^{*k}`` restricted to ``0..cap``.

    Propagates many initial laws at once with one matrix product per
    generation; ``row_tail[k]`` is the mass of ``law^{*k}`` above the cap.
    """

    def __init__(self, law: OffspringLaw, cap: int):
        self.law = law
        self.cap = cap
        nu = law.as_pmf(cap)
        rows = np.zeros((cap + 1, cap + 1))
        row_tail = np.zeros(cap + 1)
        rows[0, 0] = 1.0
        for k in range(1, cap + 1):
            full = np.convolve(rows[k - 1], nu.probs)
            rows[k] = full[: cap + 1]
            prev_mass = 1.0 - row_tail[k - 1]
            row_tail[k] = row_tail[k - 1] + prev_mass * nu.tail_mass + float(full[cap + 1 :].sum())
        self.matrix = rows
        self.row_tail = np.minimum(row_tail, 1.0)

    def step(self, probs: np.ndarray, tails: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One generation for a stack of laws (one per row of ``probs``)."""
        return probs @ self.matrix, tails + probs @ self.row_tail

    def start(self, sizes) -> tuple[np.ndarray, np.ndarray]:
        sizes = list(sizes)
        probs = np.zeros((len(sizes), self.cap + 1))
        tails = np.zeros(len(sizes))
        for row, n in enumerate(sizes):
            if n <= self.cap:
                probs[row, n] = 1.0
            else:
                tails[row] = 1.0
        return probs, tails


@lru_cache(maxsize=4)
def _kernel_cached(law_key, cap: int) -> TransitionKernel:
    probs, tail, desc = law_key
    return TransitionKernel(OffspringLaw(np.array(probs), tail, desc), cap)


def kernel(law: OffspringLaw, cap: int) -> TransitionKernel:
    return _kernel_cached((tuple(law.probs.tolist()), law.tail_mass, law.descriptor), cap)
