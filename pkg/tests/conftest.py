import os
from pathlib import Path

import pytest

# Keep disk caches (cp_nominal, value tables, trained agents) inside the
# repo so repeated test runs reuse them; safe to delete any time.
_CACHE = Path(__file__).resolve().parent.parent / ".test-cache"
os.environ.setdefault("WINDLAB_CACHE_DIR", str(_CACHE))


@pytest.fixture(scope="session")
def turbine():
    from windlab.aero import reference_turbine
    return reference_turbine()


@pytest.fixture(scope="session")
def cp_nom(turbine):
    from windlab.aero import cp_nominal
    return cp_nominal(turbine)


@pytest.fixture(scope="session")
def setpoints(turbine):
    """Setpoint curves are pure functions of the turbine; derive once and
    cache on disk for later sessions."""
    from windlab.pid import SetpointCurves, derive_setpoints
    cache = _CACHE / f"setpoints_{turbine.config_hash()[:16]}.csv"
    if cache.exists():
        return SetpointCurves.from_csv(cache)
    curves = derive_setpoints(turbine)
    cache.parent.mkdir(parents=True, exist_ok=True)
    curves.to_csv(cache)
    return curves
