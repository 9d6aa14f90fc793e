"""Numeric certificates for the survival/extinction bounds.

Each function returns a :class:`Certificate`: the parameters it used, the
number it certifies, a pass/fail verdict, and enough provenance (caps,
seeds, run counts, intermediate exact values) to reproduce it bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .chain import AtLeast, ChainConfig, batch_simulate, hoeffding_halfwidth
from .exact import extinction_probability, kernel, law_at, phi, propagate
from .offspring import DEFAULT_CAP, OffspringLaw, Pmf, _warn_tail, mean, thin, truncate, variance
from .rng import derive_seed

CRITICAL_TOL = 1e-12
PROB_TOL = 1e-10
EXACT_KERNEL_CAP = 4096
CRITERION_CAP = 2048

KINDS = (
    "subcritical-decay",
    "supercritical-survival",
    "lemma1-rate",
    "criterion-witness",
    "critical-markov",
    "thinning-pipeline",
)


def _plain(x):
    """Convert numpy scalars/arrays so json emits them natively."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_plain(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


@dataclass
class Certificate:
    kind: str
    parameters: dict
    bound_value: float
    verdict: bool
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown certificate kind {self.kind!r}")

    @property
    def passed(self) -> bool:
        return self.verdict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": _plain(self.parameters),
            "bound_value": _plain(self.bound_value),
            "verdict": "pass" if self.verdict else "fail",
            "provenance": _plain(self.provenance),
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Certificate":
        return cls(
            data["kind"],
            data["parameters"],
            data["bound_value"],
            data["verdict"] == "pass",
            data.get("provenance", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "Certificate":
        return cls.from_dict(json.loads(text))


def _law_tag(law: OffspringLaw) -> str:
    if law.descriptor is not None:
        return str(law.descriptor)
    return ",".join(f"{int(k)}:{float(law.probs[k])!r}" for k in np.flatnonzero(law.probs))


def _mass_at_least(pmf: Pmf, level: int) -> tuple[float, float]:
    """(lower, upper) bounds on P(Y >= level) for a capped pmf."""
    lo = pmf.mass_at_least(level)
    return lo, min(1.0, lo + pmf.tail_mass)


# ---------------------------------------------------------------------------
# subcritical decay
# ---------------------------------------------------------------------------


def subcritical_decay_check(law: OffspringLaw, initial=1, n_max: int = 30, cap: int = DEFAULT_CAP) -> Certificate:
    """Check P(tau > n) <= m^n E[Y_0] for n = 0..n_max against the exact law."""
    m = mean(law)
    if m >= 1:
        raise ValueError(f"subcritical check needs mean < 1, got {m!r}")
    pop = Pmf.delta(initial, cap) if isinstance(initial, int) else initial
    if pop.tail_mass > 0:
        raise ValueError("initial law must have no tail mass")
    ey0 = pop.mean()
    rows = []
    worst = -math.inf
    for n in range(n_max + 1):
        if n:
            pop = propagate(pop, law, cap, warn=False)
        survive = 1.0 - pop.mass_at(0)  # upper bound: tail counted as alive
        bound = m**n * ey0
        rows.append([n, survive, bound])
        worst = max(worst, survive - bound)
    _warn_tail("subcritical_decay_check", pop.tail_mass, cap)
    return Certificate(
        "subcritical-decay",
        {"m": m, "E_Y0": ey0, "n_max": n_max},
        worst,
        worst <= PROB_TOL,
        {"law": _law_tag(law), "cap": cap, "table": rows, "method": "exact"},
    )


# ---------------------------------------------------------------------------
# supercritical product bound
# ---------------------------------------------------------------------------


def smallest_truncation(law: OffspringLaw, a: float, limit: int = 10**6) -> int:
    """Smallest M with E[min(X, M)] > a."""
    for M in range(limit):
        if mean(truncate(law, M)) > a:
            return M
    raise ValueError(f"no truncation level below {limit} lifts the mean above {a!r}")


def survival_product(c: float, n: int, a: float, rel_tol: float = 1e-12) -> tuple[float, float, int]:
    """Bounds on prod_{i>=0} (1 - c / (n a^i)) as (lower, upper, terms used).

    The partial product is an upper bound; the remaining log-sum is at most
    x_I/(1-x_I) * a/(a-1) with x_I the first omitted term, which yields the
    lower bound.
    """
    if c == 0:
        return 1.0, 1.0, 0
    if n <= c:
        return 0.0, 0.0, 0
    log_sum = 0.0
    i = 0
    while True:
        x = c / (n * a**i)
        rest = x / (1.0 - x) * a / (a - 1.0)
        if x < 0.5 and rest < rel_tol:
            break
        log_sum += math.log1p(-x)
        i += 1
    return math.exp(log_sum - rest), math.exp(log_sum), i


def supercritical_certificate(law: OffspringLaw, a: float, n: int, cap: int = DEFAULT_CAP) -> Certificate:
    """Product lower bound on P^n(tau = inf) from the truncated Chebyshev argument.

    Uses c = Var(X ^ M) / (E[X ^ M] - a)^2, the constant the Chebyshev step
    actually delivers; the unsquared variant is reported alongside.
    """
    m = mean(law)
    if not (m > 1 and 1 < a < m):
        raise ValueError(f"need 1 < a < m, got a={a!r}, m={m!r}")
    M = smallest_truncation(law, a)
    trunc = truncate(law, M)
    e_t, v_t = mean(trunc), variance(trunc)
    c = v_t / (e_t - a) ** 2
    c_unsquared = v_t / (e_t - a)
    min_n = math.floor(c) + 1
    params = {"a": a, "M": M, "c": c, "n": n, "m": m}
    prov = {
        "law": _law_tag(law),
        "E_trunc": e_t,
        "Var_trunc": v_t,
        "c_unsquared_denominator": c_unsquared,
        "min_admissible_n": min_n,
        "cap": cap,
    }
    if n <= c:
        return Certificate("supercritical-survival", params, 0.0, False, prov)
    lower, upper, terms = survival_product(c, n, a)
    # the Chebyshev step itself, checked exactly: P^n(Y_1 < an) <= c/n
    below = phi(n, a * n, law, cap)
    below_trunc = phi(n, a * n, trunc, cap)
    q = extinction_probability(law)
    truth = 1.0 - q**n
    prov.update(
        {
            "product_upper": upper,
            "product_terms": terms,
            "P_n_Y1_below_an": below,
            "P_n_trunc_sum_below_an": below_trunc,
            "chebyshev_bound": c / n,
            "oracle_survival": truth,
        }
    )
    ok = lower > 0 and below <= below_trunc + PROB_TOL and below_trunc <= c / n + PROB_TOL and lower <= truth + 1e-9
    return Certificate("supercritical-survival", params, lower, ok, prov)


# ---------------------------------------------------------------------------
# block rate
# ---------------------------------------------------------------------------


def lemma1_rate(law: OffspringLaw, N: int, a: int, cap: int = DEFAULT_CAP) -> Certificate:
    """a * P^N(Y_1 >= aN), the mean of the block chain; passes when > 1."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not float(a).is_integer() or a < 1:
        raise ValueError("block rate must be an integer >= 1")
    a = int(a)
    if a * N > cap + 1:
        raise ValueError(f"cap {cap} too small to resolve the level {a * N}")
    success = 1.0 - phi(N, a * N, law, cap)
    rate = a * success
    return Certificate(
        "lemma1-rate",
        {"N": N, "a": a, "block_success": success},
        rate,
        rate > 1.0,
        {"law": _law_tag(law), "cap": cap, "method": "exact"},
    )


# ---------------------------------------------------------------------------
# local criterion scan
# ---------------------------------------------------------------------------


def scan_order(N_max: int, T_max: int):
    """Cells (N, T) by diagonal N + T = 2, 3, ..., N ascending within each."""
    for d in range(2, N_max + T_max + 1):
        for N in range(max(1, d - T_max), min(N_max, d - 1) + 1):
            yield N, d - N


def criterion_table(law: OffspringLaw, N_max: int, T_max: int, cap: int = CRITERION_CAP):
    """Exact (lower, upper) bounds on P^N(Y_T >= 2N) for all cells, shape (N_max, T_max)."""
    if 2 * N_max > cap:
        raise ValueError(f"cap {cap} below the largest level {2 * N_max}")
    ker = kernel(law, cap)
    probs, tails = ker.start(range(1, N_max + 1))
    levels = 2 * np.arange(1, N_max + 1)
    lower = np.zeros((N_max, T_max))
    upper = np.zeros((N_max, T_max))
    for T in range(1, T_max + 1):
        probs, tails = ker.step(probs, tails)
        rev = np.cumsum(probs[:, ::-1], axis=1)[:, ::-1]
        lo = rev[np.arange(N_max), levels]
        lower[:, T - 1] = lo
        upper[:, T - 1] = np.minimum(1.0, lo + tails)
    return lower, upper


def criterion_search(
    law: OffspringLaw,
    N_max: int = 64,
    T_max: int = 64,
    runs: int = 10_000,
    confidence: float = 0.99,
    seed: int = 0,
    mode: str = "auto",
    cap: int = CRITERION_CAP,
    workers: int = 1,
) -> Certificate:
    """Look for (N, T) with P^N(Y_T >= 2N) > 1/2, scanning in ``scan_order``.

    Exact mode evaluates every cell with a batched transition kernel and
    certifies the witness by its lower bound. Monte Carlo mode uses a
    one-sided Hoeffding bound per cell with a union-bound correction so the
    whole scan holds at ``confidence``.
    """
    if mode not in ("auto", "exact", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "auto":
        mode = "exact" if cap <= EXACT_KERNEL_CAP and 2 * N_max <= cap else "mc"
    params = {"N_max": N_max, "T_max": T_max, "mode": mode}
    prov = {
        "law": _law_tag(law),
        "nu0_positive": law.mass_at(0) > 0,
        "scan_order": "diagonal N+T ascending, N ascending",
    }
    if mode == "exact":
        lower, upper = criterion_table(law, N_max, T_max, cap)
        prov.update({"cap": cap, "max_lower": float(lower.max()), "max_upper": float(upper.max())})
        for N, T in scan_order(N_max, T_max):
            if lower[N - 1, T - 1] > 0.5:
                params.update({"N": N, "T": T})
                prov["value_upper"] = float(upper[N - 1, T - 1])
                return Certificate("criterion-witness", params, float(lower[N - 1, T - 1]), True, prov)
        return Certificate("criterion-witness", params, float(lower.max()), False, prov)

    cells = list(scan_order(N_max, T_max))
    per_cell = 1.0 - (1.0 - confidence) / len(cells)
    half = hoeffding_halfwidth(runs, per_cell)
    prov.update({"runs": runs, "confidence": confidence, "per_cell_confidence": per_cell, "master_seed": seed})
    best = -math.inf
    for idx, (N, T) in enumerate(cells):
        cfg = ChainConfig(law, N, T, seed=derive_seed(seed, idx))
        stats = batch_simulate(cfg, runs, AtLeast(T, 2 * N), workers=workers)
        lo = stats.event_fraction - half
        best = max(best, stats.event_fraction)
        if lo > 0.5:
            params.update({"N": N, "T": T})
            prov.update({"estimate": stats.event_fraction, "cell_seed": cfg.seed})
            return Certificate("criterion-witness", params, lo, True, prov)
    prov["max_estimate"] = best
    return Certificate("criterion-witness", params, max(best - half, 0.0), False, prov)


# ---------------------------------------------------------------------------
# critical case
# ---------------------------------------------------------------------------


def _require_critical(law: OffspringLaw) -> float:
    m = mean(law)
    if abs(m - 1.0) > CRITICAL_TOL:
        raise ValueError(f"law is not critical: mean {m!r}")
    return m


def critical_markov_bound(law: OffspringLaw, N: int, T: int, cap: int = DEFAULT_CAP) -> Certificate:
    """Exact P^N(Y_T >= 2N) against the Markov bound E^N[Y_T] / 2N = 1/2."""
    m = _require_critical(law)
    pmf = law_at(N, law, T, cap)
    lo, hi = _mass_at_least(pmf, 2 * N)
    bound = m**T * N / (2 * N)
    return Certificate(
        "critical-markov",
        {"N": N, "T": T, "markov_bound": bound, "exact_lower": lo},
        hi,
        hi <= 0.5 + PROB_TOL,
        {"law": _law_tag(law), "cap": cap, "nu0_positive": law.mass_at(0) > 0, "tail": pmf.tail_mass},
    )


def restricted_event(law: OffspringLaw, N: int, T: int, M: int) -> float:
    """P^N(max_{i<=T} Y_i <= M, Y_T >= 2N) by propagating with cap M.

    Any mass leaving ``0..M`` is dropped, so what remains at time T is
    exactly the mass of paths that never exceeded M.
    """
    return law_at(N, law, T, M).mass_at_least(2 * N)


def thinning_pipeline(
    law: OffspringLaw,
    N: int,
    T: int,
    M: int,
    p: float,
    runs: int = 10_000,
    seed: int = 0,
    cap: int = DEFAULT_CAP,
    confidence: float = 0.99,
) -> Certificate:
    """Lower bound r * p^(TM) on P(Y^p_T >= 2N), checked against the thinned chain.

    r = P^N(max_{i<=T} Y_i <= M, Y_T >= 2N) is exact for M up to the kernel
    budget and a Hoeffding lower bound otherwise. The thinned chain's own
    probability is computed exactly and also simulated.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"thinning probability {p!r} outside (0, 1]")
    prov = {"law": _law_tag(law), "runs": runs, "master_seed": seed, "cap": cap}
    if M <= EXACT_KERNEL_CAP:
        r = restricted_event(law, N, T, M)
        prov["r_method"] = "exact"
    else:
        cfg = ChainConfig(law, N, T, population_cap=M, seed=derive_seed(seed, 1))
        stats = batch_simulate(cfg, runs, _RestrictedEvent(T, 2 * N, M))
        r = max(0.0, stats.event_fraction - hoeffding_halfwidth(runs, confidence))
        prov["r_method"] = "mc-hoeffding"
    bound = r * p ** (T * M)

    thinned = thin(law, p)
    lo, hi = _mass_at_least(law_at(N, thinned, T, cap), 2 * N)
    stats = batch_simulate(ChainConfig(thinned, N, T, seed=derive_seed(seed, 0)), runs, AtLeast(T, 2 * N))
    est = stats.event_fraction
    clipped = min(max(est, 1.0 / runs), 1.0 - 1.0 / runs)
    sigma = math.sqrt(clipped * (1.0 - clipped) / runs)
    pm = p * mean(law)
    contradiction = bound > 0.5 and pm < 1.0
    prov.update(
        {
            "thinned_exact_lower": lo,
            "thinned_exact_upper": hi,
            "thinned_mc": est,
            "thinned_mc_sigma": sigma,
            "p_times_m": pm,
            "contradiction": contradiction,
        }
    )
    ok = bound <= hi + PROB_TOL and bound <= est + 4 * sigma and not contradiction
    return Certificate("thinning-pipeline", {"N": N, "T": T, "M": M, "p": p, "r": r}, bound, ok, prov)


@dataclass(frozen=True)
class _RestrictedEvent:
    t: int
    level: int
    ceiling: int

    def __call__(self, traj) -> bool:
        if traj.capped or max(traj.sizes) > self.ceiling:
            return False
        return (traj.size_at(self.t) or 0) >= self.level


# ---------------------------------------------------------------------------
# phase sweep
# ---------------------------------------------------------------------------


def survival_sweep(laws, horizon: int, runs: int, seed: int = 0, confidence: float = 0.95, workers: int = 1):
    """Survival-to-horizon estimates for a list of ``(m, law)`` pairs.

    Returns rows ``(m, estimate, ci_low, ci_high)`` with two-sided Hoeffding
    intervals; point ``j`` uses master seed ``derive_seed(seed, j)``.
    """
    half = hoeffding_halfwidth(runs, 1.0 - (1.0 - confidence) / 2.0)
    rows = []
    for j, (m, law) in enumerate(laws):
        stats = batch_simulate(ChainConfig(law, 1, horizon, seed=derive_seed(seed, j)), runs, workers=workers)
        est = stats.survival_fraction(horizon)
        rows.append((m, est, max(0.0, est - half), min(1.0, est + half)))
    return rows
