import numpy as np
import pytest

from mfgcs import constants, geometry, lagrangian
from mfgcs.equilibrium import initial_measure
from mfgcs.measures import StateMeasure


@pytest.fixture(scope="session")
def disk():
    return geometry.disk()


@pytest.fixture(scope="session")
def interval():
    return geometry.interval()


@pytest.fixture(scope="session")
def disk_atlas(disk):
    return geometry.build_atlas(disk, 0.2)


@pytest.fixture(scope="session")
def chase_setup(disk):
    """Disk target chase: quadratic cost, exterior quadratic target."""
    model = lagrangian.quadratic(2, c1=0.0)
    terminal = lagrangian.quadratic_distance([2.0, 0.0], disk)
    view = lagrangian.hamiltonian_view(model, disk)
    budget = constants.solve_k_budget(model, terminal, view, disk).budget
    return model, terminal, budget


@pytest.fixture(scope="session")
def frozen_setup(interval):
    """Frozen verification scenario on the interval."""
    model = lagrangian.quadratic(1, c1=0.01)
    terminal = lagrangian.saturating_ramp(target=[1.2], direction=[-1.0])
    view = lagrangian.hamiltonian_view(model, interval)
    return model, terminal, view


def single_particle_population(domain, x0, num_nodes=200, horizon=1.0):
    times = np.linspace(0.0, horizon, num_nodes + 1)
    m0 = StateMeasure(points=[list(x0)], weights=[1.0])
    return initial_measure(m0, times, domain)
