"""Offspring laws and population-size pmfs on a dense integer support.

Both types store probabilities as a dense float64 array indexed by the
population count, plus an explicit ``tail_mass`` for whatever lies beyond
the represented support. Tail mass is never redistributed: arithmetic that
pushes mass past a cap moves it into the tail, so every value stored below
the cap is a lower bound on the true probability.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from scipy import stats

EPS = 1e-12
DEFAULT_CAP = 4096
TAIL_WARN = 1e-6
# table length for parametric laws is chosen so the cut-off tail is below this
_PARAM_TAIL = 1e-17


class TailMassWarning(UserWarning):
    """Raised (as a warning) when an operation leaks more than TAIL_WARN into the tail."""

    def __init__(self, op: str, tail_mass: float, cap: int):
        self.op = op
        self.tail_mass = tail_mass
        self.cap = cap
        super().__init__(f"{op}: tail mass {tail_mass:.3e} beyond cap {cap} exceeds {TAIL_WARN:g}")


def _warn_tail(op: str, tail: float, cap: int) -> None:
    if tail > TAIL_WARN:
        warnings.warn(TailMassWarning(op, tail, cap), stacklevel=3)


# ---------------------------------------------------------------------------
# parametric descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Descriptor:
    """Parametric origin of a law, used for exact sampling and exact moments.

    ``family`` is one of ``poisson`` (param = rate), ``geometric``
    (param = success probability, support {0, 1, ...}) or ``thin``
    (param = keep probability, ``inner`` = the thinned law's descriptor).
    """

    family: str
    param: float
    inner: Optional["Descriptor"] = None

    def __str__(self) -> str:
        if self.family == "thin":
            return f"thin({self.inner}, {self.param!r})"
        return f"{self.family}({self.param!r})"

    def mean(self) -> float:
        if self.family == "poisson":
            return self.param
        if self.family == "geometric":
            return (1.0 - self.param) / self.param
        return self.param * self.inner.mean()

    def second_moment(self) -> float:
        if self.family == "poisson":
            return self.param + self.param**2
        if self.family == "geometric":
            p = self.param
            return (1.0 - p) * (2.0 - p) / p**2
        return self.param * self.inner.second_moment()

    def pmf(self, upto: int) -> np.ndarray:
        k = np.arange(upto + 1)
        if self.family == "poisson":
            return stats.poisson.pmf(k, self.param)
        if self.family == "geometric":
            return self.param * (1.0 - self.param) ** k
        out = self.param * self.inner.pmf(upto)
        out[0] += 1.0 - self.param
        return out

    def sf(self, k: int) -> float:
        """P(X > k)."""
        if self.family == "poisson":
            return float(stats.poisson.sf(k, self.param))
        if self.family == "geometric":
            return (1.0 - self.param) ** (k + 1)
        return self.param * self.inner.sf(k)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.family == "poisson":
            return rng.poisson(self.param, size)
        if self.family == "geometric":
            return rng.geometric(self.param, size) - 1
        keep = rng.random(size) < self.param
        return np.where(keep, self.inner.sample(rng, size), 0)

    def sample_sum(self, rng: np.random.Generator, count: int) -> int:
        """Exact draw of the sum of ``count`` independent samples."""
        if self.family == "poisson":
            return int(rng.poisson(self.param * count))
        if self.family == "geometric":
            return int(rng.negative_binomial(count, self.param))
        kept = int(rng.binomial(count, self.param))
        return self.inner.sample_sum(rng, kept) if kept else 0


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


def _as_probs(probs) -> np.ndarray:
    arr = np.array(probs, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        arr = np.zeros(1)
    arr.setflags(write=False)
    return arr


def _check_mass(probs: np.ndarray, tail: float, what: str) -> None:
    if np.any(probs < 0) or tail < 0 or not np.all(np.isfinite(probs)):
        raise ValueError(f"{what}: probabilities must be finite and non-negative")
    total = float(probs.sum()) + tail
    if abs(total - 1.0) > EPS:
        raise ValueError(f"{what}: total mass {total!r} != 1 (tolerance {EPS:g})")


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """A reproduction law: ``probs[k]`` is the probability of ``k`` children."""

    probs: np.ndarray
    tail_mass: float = 0.0
    descriptor: Optional[Descriptor] = None

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_probs(self.probs))
        object.__setattr__(self, "tail_mass", float(self.tail_mass))
        _check_mass(self.probs, self.tail_mass, "OffspringLaw")

    @classmethod
    def from_dict(cls, masses: Mapping[int, float]) -> "OffspringLaw":
        if not masses:
            raise ValueError("empty law")
        if min(masses) < 0:
            raise ValueError("support points must be non-negative")
        probs = np.zeros(max(masses) + 1)
        for k, p in masses.items():
            probs[int(k)] += p
        return cls(probs)

    @property
    def max_support(self) -> int:
        return len(self.probs) - 1

    def mass_at(self, k: int) -> float:
        return float(self.probs[k]) if 0 <= k < len(self.probs) else 0.0

    @property
    def is_exact(self) -> bool:
        """True when the table (plus descriptor, if any) fully determines the law."""
        return self.tail_mass <= EPS or self.descriptor is not None

    def as_pmf(self, cap: int = DEFAULT_CAP) -> "Pmf":
        head = self.probs[: cap + 1]
        spill = float(self.probs[cap + 1 :].sum())
        return Pmf(head, self.tail_mass + spill)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OffspringLaw):
            return NotImplemented
        return (
            _dense_equal(self.probs, other.probs)
            and self.tail_mass == other.tail_mass
            and self.descriptor == other.descriptor
        )

    def __repr__(self) -> str:
        if self.descriptor is not None:
            return f"OffspringLaw({self.descriptor}, tail={self.tail_mass:.2e})"
        nz = {int(k): float(self.probs[k]) for k in np.flatnonzero(self.probs)}
        return f"OffspringLaw({nz})"


@dataclass(frozen=True, eq=False)
class Pmf:
    """Law of a population size, represented on ``0..cap`` plus a tail bucket."""

    probs: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_probs(self.probs))
        object.__setattr__(self, "tail_mass", float(self.tail_mass))
        _check_mass(self.probs, self.tail_mass, "Pmf")

    @classmethod
    def delta(cls, k: int, cap: int = DEFAULT_CAP) -> "Pmf":
        if k < 0:
            raise ValueError("population size must be non-negative")
        if k > cap:
            return cls(np.zeros(cap + 1), 1.0)
        probs = np.zeros(k + 1)
        probs[k] = 1.0
        return cls(probs)

    @property
    def cap(self) -> int:
        return len(self.probs) - 1

    def mass_at(self, k: int) -> float:
        return float(self.probs[k]) if 0 <= k < len(self.probs) else 0.0

    def mass_at_least(self, k: int) -> float:
        """Mass represented on ``[k, cap]``; the tail is reported separately."""
        return float(self.probs[max(k, 0) :].sum())

    def mass_below(self, x: float) -> float:
        """Mass on integers strictly below ``x``."""
        hi = math.ceil(x)
        return float(self.probs[: max(hi, 0)].sum())

    def total(self) -> float:
        return float(self.probs.sum()) + self.tail_mass

    def mean(self) -> float:
        """Mean over the represented support (a lower bound when tail_mass > 0)."""
        return float(np.dot(np.arange(len(self.probs)), self.probs))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pmf):
            return NotImplemented
        return _dense_equal(self.probs, other.probs) and self.tail_mass == other.tail_mass

    def __repr__(self) -> str:
        nz = {int(k): float(self.probs[k]) for k in np.flatnonzero(self.probs)[:8]}
        more = "..." if np.count_nonzero(self.probs) > 8 else ""
        return f"Pmf({nz}{more}, tail={self.tail_mass:.2e})"


def _dense_equal(a: np.ndarray, b: np.ndarray) -> bool:
    n = max(len(a), len(b))
    return np.array_equal(np.pad(a, (0, n - len(a))), np.pad(b, (0, n - len(b))))


def max_abs_diff(a, b) -> float:
    """Pointwise sup distance between two dense tables, padding the shorter one."""
    pa, pb = np.asarray(getattr(a, "probs", a)), np.asarray(getattr(b, "probs", b))
    n = max(len(pa), len(pb))
    return float(np.max(np.abs(np.pad(pa, (0, n - len(pa))) - np.pad(pb, (0, n - len(pb))))))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def delta(k: int) -> OffspringLaw:
    probs = np.zeros(k + 1)
    probs[k] = 1.0
    return OffspringLaw(probs)


def two_point(p0: float, k: int = 2) -> OffspringLaw:
    """``p0 * delta_0 + (1 - p0) * delta_k``."""
    return OffspringLaw.from_dict({0: p0, k: 1.0 - p0})


def _parametric(desc: Descriptor, support: Optional[int]) -> OffspringLaw:
    if support is None:
        support = 0
        while desc.sf(support) > _PARAM_TAIL:
            support = max(2 * support, support + 8)
    probs = desc.pmf(support)
    tail = desc.sf(support)
    # pmf and sf come from independent formulas
    drift = float(probs.sum()) + tail - 1.0
    if abs(drift) > EPS:
        raise ValueError(f"{desc}: table does not normalise (drift {drift:.3e})")
    return OffspringLaw(probs, tail, desc)


def poisson(rate: float, support: Optional[int] = None) -> OffspringLaw:
    """Poisson law, tabulated on ``0..support`` with the remainder as tail."""
    if rate < 0:
        raise ValueError("Poisson rate must be non-negative")
    return _parametric(Descriptor("poisson", float(rate)), support)


def geometric(p: float, support: Optional[int] = None) -> OffspringLaw:
    """Geometric law on {0, 1, ...} with P(k) = (1 - p)^k p."""
    if not 0 < p <= 1:
        raise ValueError("geometric parameter must lie in (0, 1]")
    return _parametric(Descriptor("geometric", float(p)), support)


# ---------------------------------------------------------------------------
# moments and transforms
# ---------------------------------------------------------------------------


def mean(law: OffspringLaw) -> float:
    """Mean of ``law``: exact for finite or parametric laws, else the table's part."""
    if law.descriptor is not None:
        return law.descriptor.mean()
    return float(np.dot(np.arange(len(law.probs)), law.probs))


def mean_interval(law: OffspringLaw) -> tuple[float, float]:
    """Interval known to contain the mean; unbounded above for an undescribed tail."""
    if law.descriptor is not None or law.tail_mass <= EPS:
        m = mean(law)
        return m, m
    return mean(law), math.inf


def variance(law: OffspringLaw) -> float:
    if law.descriptor is not None:
        d = law.descriptor
        return d.second_moment() - d.mean() ** 2
    if law.tail_mass > EPS:
        raise ValueError("variance undefined: law has an unexplained tail")
    k = np.arange(len(law.probs), dtype=np.float64)
    m = float(np.dot(k, law.probs))
    return float(np.dot((k - m) ** 2, law.probs))


def truncate(law: OffspringLaw, cutoff: int) -> OffspringLaw:
    """Law of ``min(X, cutoff)``."""
    if cutoff < 0:
        raise ValueError("truncation level must be non-negative")
    if cutoff <= law.max_support:
        probs = law.probs[: cutoff + 1].copy()
        probs[cutoff] += float(law.probs[cutoff + 1 :].sum()) + law.tail_mass
        return OffspringLaw(probs)
    if law.tail_mass <= EPS:
        return OffspringLaw(law.probs)
    if law.descriptor is None:
        raise ValueError("cannot truncate beyond the table of a law with an unexplained tail")
    probs = law.descriptor.pmf(cutoff)
    probs[cutoff] = law.descriptor.sf(cutoff - 1)
    return OffspringLaw(probs / probs.sum())


def thin(law: OffspringLaw, p: float) -> OffspringLaw:
    """Law of ``B * X`` with ``B ~ Bernoulli(p)`` independent of ``X ~ law``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"thinning probability {p!r} outside [0, 1]")
    probs = p * law.probs
    probs[0] += 1.0 - p
    desc = None
    if law.descriptor is not None and p < 1.0:
        desc = Descriptor("thin", float(p), law.descriptor)
    elif p == 1.0:
        desc = law.descriptor
    return OffspringLaw(probs, p * law.tail_mass, desc)


def convolve(a: Pmf, b: Pmf, cap: Optional[int] = None) -> Pmf:
    """Law of the independent sum; everything above ``cap`` goes to the tail.

    Without ``cap`` the full support ``a.cap + b.cap`` is kept.
    """
    if cap is None:
        cap = a.cap + b.cap
    full = np.convolve(a.probs, b.probs)
    head = full[: cap + 1]
    overflow = float(full[cap + 1 :].sum())
    tail = a.tail_mass + b.tail_mass - a.tail_mass * b.tail_mass + overflow
    _warn_tail("convolve", tail, cap)
    return Pmf(head, tail)


def convolve_power(law: OffspringLaw, k: int, cap: int = DEFAULT_CAP) -> Pmf:
    """``law^{*k}`` by repeated squaring; ``k = 0`` gives the point mass at 0."""
    if k < 0:
        raise ValueError("convolution power must be non-negative")
    result = Pmf.delta(0, cap)
    base = law.as_pmf(cap)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailMassWarning)
        while k:
            if k & 1:
                result = convolve(result, base, cap)
            k >>= 1
            if k:
                base = convolve(base, base, cap)
    _warn_tail("convolve_power", result.tail_mass, cap)
    return result


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _require_sampleable(law: OffspringLaw) -> None:
    if law.descriptor is None and law.tail_mass > EPS:
        raise ValueError("cannot sample exactly: law has an unexplained tail")


def sample_many(law: OffspringLaw, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` independent draws, in draw order."""
    _require_sampleable(law)
    if law.descriptor is not None:
        return law.descriptor.sample(rng, size)
    cdf = np.cumsum(law.probs)
    return np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")


def sample(law: OffspringLaw, rng: np.random.Generator) -> int:
    return int(sample_many(law, rng, 1)[0])


def sample_sum(law: OffspringLaw, rng: np.random.Generator, count: int) -> int:
    """Exact draw of the sum of ``count`` samples without drawing them one by one."""
    _require_sampleable(law)
    if count == 0:
        return 0
    if law.descriptor is not None:
        return law.descriptor.sample_sum(rng, count)
    counts = rng.multinomial(count, law.probs / law.probs.sum())
    return int(np.dot(np.arange(len(counts), dtype=np.int64), counts))
