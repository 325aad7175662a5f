import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kcsm.lattice import BoundaryCondition, ModelSpec, Region, SpinConfig

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def naive_constraint(model: ModelSpec, config: SpinConfig, bc: BoundaryCondition, x) -> bool:
    """Read the influence sets site by site from coordinates; no compiled tables."""
    region = config.region
    grid = config.grid()
    for A in model.offset_sets:
        ok = True
        for off in A:
            y = tuple(c + o for c, o in zip(x, off))
            if all(lo <= c < lo + s for c, lo, s in zip(y, region.origin, region.sides)):
                v = grid[tuple(c - lo for c, lo in zip(y, region.origin))]
            else:
                v = bc.outside_value(region, y)
            if v != 0:
                ok = False
                break
        if ok:
            return True
    return False


def all_configs(region: Region):
    for bits in range(1 << region.n_sites):
        yield SpinConfig(region, bits)


BUILTIN_1D = [ModelSpec.east(), ModelSpec.fa(1, 1), ModelSpec.fa(2, 1), ModelSpec.mb(1), ModelSpec.unconstrained(1)]
BUILTIN_2D = [ModelSpec.fa(1, 2), ModelSpec.fa(2, 2), ModelSpec.mb(2), ModelSpec.ne(), ModelSpec.unconstrained(2)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)



# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def report(number: int, passed: bool, detail: str, seconds: float) -> bool:
    ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  ({seconds:.1f} s)  {detail}"
    print(ACCEPTANCE[number])
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
