from __future__ import annotations

from pathlib import Path
import sys

import pytest

ROOT = Path(__file__).resolve().parents[1]
for path in (ROOT, ROOT / "src"):
    if str(path) not in sys.path:
        sys.path.insert(0, str(path))

from mmwave_relq.demand import DemandPmf  # noqa: E402
from mmwave_relq.solver import SystemConfig  # noqa: E402
from mmwave_relq.traffic import MapProcess, SppParams  # noqa: E402


@pytest.fixture
def erlang_system():
    """Poisson, p_1 = 1, N = R = 2, lambda = mu = 1."""
    return SystemConfig(
        servers=2,
        prbs=2,
        service_rate=1.0,
        pmf=DemandPmf.deterministic(1),
        arrivals=MapProcess.poisson(1.0),
    )


@pytest.fixture
def small_spp_system():
    return SystemConfig(
        servers=6,
        prbs=8,
        service_rate=1.0,
        pmf=DemandPmf.from_mapping({1: 0.5, 2: 0.3, 3: 0.2}),
        arrivals=SppParams(lambda1=1.0, lambda2=4.0, r1=0.5, r2=1.5).as_map(),
    )
