import sys
from fractions import Fraction as F
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gwlab.offspring import OffspringLaw, geometric, poisson  # noqa: E402

# finite laws as exact dicts, shared with the brute-force oracle
FINITE = {
    "sub": {0: F(3, 4), 2: F(1, 4)},
    "crit": {0: F(1, 2), 2: F(1, 2)},
    "super": {0: F(1, 4), 2: F(3, 4)},
    "one": {1: F(1)},
    "no_death": {1: F(1, 2), 2: F(1, 2)},
    "three": {0: F(1, 5), 1: F(1, 2), 3: F(3, 10)},
}


def to_law(d: dict) -> OffspringLaw:
    return OffspringLaw.from_dict({k: float(p) for k, p in d.items()})


def family():
    """Nine test laws: five finite, three tabulated Poisson, one geometric."""
    laws = {name: to_law(FINITE[name]) for name in ("sub", "crit", "super", "one", "no_death")}
    for rate in (0.8, 1.0, 1.2):
        laws[f"poisson{rate}"] = poisson(rate)
    laws["geometric0.5"] = geometric(0.5)
    return laws


@pytest.fixture(params=sorted(FINITE))
def finite_case(request):
    d = FINITE[request.param]
    return request.param, d, to_law(d)
