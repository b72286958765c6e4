import numpy as np
import pytest

import sdot


@pytest.fixture(scope="session")
def unit_square():
    """Unit square centered at the origin."""
    return sdot.box_domain([[-0.5, 0.5], [-0.5, 0.5]], seed=1)


@pytest.fixture(scope="session")
def big_square():
    return sdot.box_domain([[-1.0, 1.0], [-1.0, 1.0]], seed=2)


@pytest.fixture(scope="session")
def unit_disk():
    return sdot.disk_domain([0.0, 0.0], 1.0, seed=3)


@pytest.fixture(scope="session")
def two_point_target():
    return sdot.validate_target([(-0.5, 0.0), (0.5, 0.0)], [0.5, 0.5])


@pytest.fixture(scope="session")
def grid25_target():
    axis = np.linspace(-1.0, 1.0, 5)
    pts = np.array([(x, y) for y in axis for x in axis])
    return sdot.validate_target(pts, np.full(25, 0.04))


@pytest.fixture(scope="session")
def solved_grid25(big_square, grid25_target):
    """5x5 grid solve shared across test modules."""
    report = sdot.solve(big_square, grid25_target)
    assert report.converged
    return report


@pytest.fixture(scope="session")
def grid25_potential(grid25_target, solved_grid25):
    return sdot.BrenierPotential(grid25_target, solved_grid25.heights)


@pytest.fixture(scope="session")
def grid25_stats(grid25_potential, big_square):
    return sdot.exact_cell_stats_2d(grid25_potential, big_square)


@pytest.fixture(scope="session")
def cluster_instance(unit_disk):
    """Two tight clusters 10 apart, solved on the unit disk."""
    rng = np.random.default_rng(7)
    a = np.array([-5.0, 0.0]) + rng.uniform(-0.5, 0.5, size=(20, 2))
    b = np.array([5.0, 0.0]) + rng.uniform(-0.5, 0.5, size=(20, 2))
    target = sdot.validate_target(np.vstack([a, b]), np.full(40, 1.0 / 40.0))
    report = sdot.solve(unit_disk, target)
    assert report.converged
    potential = sdot.BrenierPotential(target, report.heights)
    stats = sdot.exact_cell_stats_2d(potential, unit_disk)
    return target, potential, stats


def random_solved_instance(seed, domain, n_range=(15, 31), spread=0.9):
    """Random target inside the domain, solved to the default tolerance."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(*n_range))
    pts = rng.uniform(-spread, spread, size=(n, 2))
    weights = rng.uniform(0.5, 1.5, size=n)
    weights /= weights.sum()
    target = sdot.validate_target(pts, weights)
    report = sdot.solve(domain, target)
    assert report.converged
    return target, sdot.BrenierPotential(target, report.heights)
