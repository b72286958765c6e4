"""Damped Newton solver for the semi-discrete transport heights.

The height vector h is the minimizer of the convex energy

    E(h) = integral over the straight path from a base height of
           sum_i w_i(eta) d(eta_i)  -  sum_i h_i nu_i,

whose gradient is ``w(h) - nu`` (cell masses minus target weights) and
whose Hessian couples adjacent cells through their shared facet mass over
the distance between their targets. Minimizing E while keeping every cell
mass positive (the admissible set) drives each cell mass to its target
weight. Exact 2D mode uses Newton steps on the facet-mass Hessian with a
damped line search; Monte Carlo mode falls back to safeguarded gradient
descent on frozen samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DimensionUnsupportedError,
    DiscreteTargetMeasure,
    GeometryError,
    sample_source,
)
from .potential import (
    BrenierPotential,
    PowerCellStats,
    exact_cell_stats_2d,
    mc_cell_stats_from_samples,
)

EXACT_TOLERANCE = 1e-6
MC_TOLERANCE = 5e-3

# Relative slack when lifting empty cells into the admissible set.
_BOOTSTRAP_SLACK = 1e-3


class SolverError(RuntimeError):
    """Base class for solver failures."""


class PathLeavesAdmissibleSetError(SolverError):
    """A cell mass vanished along the energy integration path."""


class FacetMeasuresUnavailableError(SolverError):
    """Hessian requested from Monte Carlo statistics."""


class InitialPointOutsideHError(SolverError):
    """Initial heights leave empty cells even after the bootstrap pass."""


@dataclass
class SolverConfig:
    """Solve parameters; tolerance defaults depend on the mode."""

    mode: str = "exact-2d"  # or "monte-carlo"
    tolerance: float | None = None
    max_iterations: int = 1000
    damping: float = 0.5
    min_step: float = 1e-12
    mc_samples: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("exact-2d", "monte-carlo"):
            raise ValueError(f"unknown solver mode {self.mode!r}")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping factor must lie in (0, 1)")
        if self.tolerance is not None and self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    @property
    def resolved_tolerance(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return EXACT_TOLERANCE if self.mode == "exact-2d" else MC_TOLERANCE


@dataclass
class SolveReport:
    """Outcome of a solve: final heights plus convergence diagnostics."""

    heights: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    converged: bool = False
    hit_max_iterations: bool = False
    step_underflow: bool = False
    mode: str = "exact-2d"

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1]

    def to_json_dict(self) -> dict:
        return {
            "heights": self.heights.tolist(),
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "energy_history": [float(e) for e in self.energy_history],
            "converged": self.converged,
            "hit_max_iterations": self.hit_max_iterations,
            "step_underflow": self.step_underflow,
            "final_residual": float(self.final_residual),
            "mode": self.mode,
        }


def gradient(potential: BrenierPotential, stats: PowerCellStats) -> np.ndarray:
    """Energy gradient: cell masses minus target weights."""
    return stats.cell_measures - potential.target.weights


def hessian(stats: PowerCellStats, target: DiscreteTargetMeasure) -> np.ndarray:
    """Energy Hessian from exact facet masses.

    Off-diagonal (i, j) is minus the shared facet mass over the distance
    between the two targets; diagonals make rows sum to zero. The matrix is
    diagonally dominant PSD with the all-ones null direction.
    """
    if not stats.has_facet_measures:
        raise FacetMeasuresUnavailableError(
            "facet masses are only available in exact 2D mode")
    n = stats.n
    H = np.zeros((n, n))
    pts = target.points
    for (i, j), s in zip(stats.facet_pairs, stats.facet_measures):
        gap = float(np.linalg.norm(pts[i] - pts[j]))
        v = s / gap
        H[i, j] -= v
        H[j, i] -= v
        H[i, i] += v
        H[j, j] += v
    return H


def _stats_fn_for(domain, target, config: SolverConfig):
    """Build the per-mode cell-statistics evaluator h -> PowerCellStats."""
    if config.mode == "exact-2d":
        def stats_fn(h):
            return exact_cell_stats_2d(BrenierPotential(target, h), domain)
        probe = _probe_grid(domain)
    else:
        rng = np.random.default_rng([config.seed, 0x5d07])
        frozen = sample_source(domain, config.mc_samples, rng=rng)

        def stats_fn(h):
            return mc_cell_stats_from_samples(BrenierPotential(target, h), frozen,
                                              adjacency_neighbors=0)
        probe = frozen[:4096]
    return stats_fn, probe


def _probe_grid(domain, per_axis: int = 64) -> np.ndarray:
    """Deterministic point grid inside the domain, used for deficit probes."""
    bb = domain.bounding_box()
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in bb]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(bb))
    inside = domain.contains(mesh)
    return mesh[inside]


def _voronoi_heights(domain, target) -> np.ndarray:
    """Heights whose diagram provably gives every cell positive mass.

    Choosing h_i = -(alpha/2)|y_i|^2 - <beta, y_i> turns the power diagram
    into the ordinary Voronoi diagram of the targets, shrunk by alpha and
    recentered at beta. With alpha small enough that the shrunk target
    cloud fits inside a ball contained in the domain, every Voronoi cell
    (which always surrounds its own site) lands inside the domain.
    """
    beta, r_in = domain.interior_ball()
    pts = target.points
    reach = float(np.linalg.norm(pts - beta, axis=1).max())
    alpha = 0.9 * r_in / max(reach, 1e-12)
    shifted = pts - beta
    return -0.5 * alpha * np.sum(shifted * shifted, axis=1)


def _bootstrap_admissible(h, domain, target, stats_fn, probe):
    """Lift empty cells into the admissible set.

    One pass raises each empty cell's height by its deficit against the
    envelope over the probe points, plus a small slack so the touching
    plane gains positive area (documented heuristic). If simultaneous
    raises still leave empty cells, fall back to scaled-Voronoi heights,
    which are admissible by construction.
    """
    h = np.array(h, dtype=float)
    stats = stats_fn(h)
    empty = stats.cell_measures <= 0.0
    if not empty.any():
        return h, stats

    vals = probe @ target.points.T + h
    env = vals.max(axis=1)
    deficit = (vals - env[:, None]).max(axis=0)
    scale = 1.0 + float(env.max() - env.min())
    h[empty] += -deficit[empty] + _BOOTSTRAP_SLACK * scale
    stats = stats_fn(h)
    if not np.any(stats.cell_measures <= 0.0):
        return h, stats

    h = _voronoi_heights(domain, target)
    stats = stats_fn(h)
    if np.any(stats.cell_measures <= 0.0):
        raise InitialPointOutsideHError(
            "could not reach the admissible set from the initial heights")
    return h, stats


def energy(potential: BrenierPotential, domain, h_base=None,
           quadrature_steps: int = 256, stats_fn=None) -> float:
    """Convex energy at the potential's heights.

    The mass term is a line integral of the cell masses along the straight
    path from ``h_base`` (default: zero heights, lifted into the admissible
    set if needed). The admissible set is convex, so the path stays inside
    it whenever both endpoints do; any vanishing cell mass along the way
    raises :class:`PathLeavesAdmissibleSetError`. Path-independence of the
    integral follows from the symmetry of the facet-mass Hessian.
    """
    target = potential.target
    if stats_fn is None:
        def stats_fn(h):
            return exact_cell_stats_2d(BrenierPotential(target, h), domain)
    if h_base is None:
        h_base = np.zeros(potential.n)
        base_stats = stats_fn(h_base)
        if np.any(base_stats.cell_measures <= 0.0):
            h_base, _ = _bootstrap_admissible(h_base, domain, target, stats_fn,
                                              _probe_grid(domain))
    else:
        h_base = np.asarray(h_base, dtype=float)

    h = potential.heights
    delta = h - h_base
    ts = np.linspace(0.0, 1.0, quadrature_steps + 1)
    coeff = np.full(quadrature_steps + 1, 1.0 / quadrature_steps)
    coeff[0] = coeff[-1] = 0.5 / quadrature_steps

    mass_term = 0.0
    for t, c in zip(ts, coeff):
        stats = stats_fn(h_base + t * delta)
        if np.any(stats.cell_measures <= 0.0):
            raise PathLeavesAdmissibleSetError(
                f"cell mass vanished at path parameter t={t:g}")
        mass_term += c * float(stats.cell_measures @ delta)
    return mass_term - float(h @ target.weights)


def _newton_direction(H: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Solve H d = -g on the gauge-fixed subspace (last height pinned)."""
    n = len(g)
    Hr = H[:n - 1, :n - 1]
    gr = g[:n - 1]
    try:
        dr = np.linalg.solve(Hr, -gr)
    except np.linalg.LinAlgError:
        dr = np.linalg.lstsq(Hr, -gr, rcond=None)[0]
    return np.concatenate([dr, [0.0]])


def solve(domain, target: DiscreteTargetMeasure, config: SolverConfig | None = None,
          h_init=None) -> SolveReport:
    """Find heights equalizing every cell mass with its target weight.

    Exact 2D mode performs damped Newton steps on the facet-mass Hessian;
    Monte Carlo mode descends along the negative gradient. Either way the
    step is halved until all cells keep positive mass and the max-norm
    residual decreases. The reported heights are gauge-normalized so the
    smallest is zero.
    """
    config = config or SolverConfig()
    if config.mode == "exact-2d" and domain.dimension != 2:
        raise DimensionUnsupportedError("exact-2d mode requires a 2D domain")
    tol = config.resolved_tolerance
    stats_fn, probe = _stats_fn_for(domain, target, config)

    h = np.zeros(target.n) if h_init is None else np.array(h_init, dtype=float)
    stats = stats_fn(h)
    if np.any(stats.cell_measures <= 0.0):
        h, stats = _bootstrap_admissible(h, domain, target, stats_fn, probe)

    nu = target.weights
    g = stats.cell_measures - nu
    residual = float(np.abs(g).max())
    residuals = [residual]
    energies = [0.0]  # path-integral estimate relative to the first iterate
    report = SolveReport(heights=h, iterations=0, residual_history=residuals,
                         energy_history=energies, mode=config.mode)

    for iteration in range(config.max_iterations):
        if residual <= tol:
            report.converged = True
            break
        if config.mode == "exact-2d":
            direction = _newton_direction(hessian(stats, target), g)
        else:
            direction = -g

        lam = 1.0
        accepted = False
        while lam >= config.min_step:
            h_try = h + lam * direction
            stats_try = stats_fn(h_try)
            g_try = stats_try.cell_measures - nu
            res_try = float(np.abs(g_try).max())
            if np.all(stats_try.cell_measures > 0.0) and res_try < residual:
                accepted = True
                break
            lam *= config.damping
        if not accepted:
            report.step_underflow = True
            break

        # two-point path-integral update of the energy diagnostic
        step = h_try - h
        d_energy = 0.5 * float((stats.cell_measures + stats_try.cell_measures) @ step)
        d_energy -= float(nu @ step)
        energies.append(energies[-1] + d_energy)

        h, stats, g, residual = h_try, stats_try, g_try, res_try
        residuals.append(residual)
        report.iterations = iteration + 1
    else:
        report.hit_max_iterations = residual > tol
        report.converged = residual <= tol

    if residual <= tol:
        report.converged = True
    report.heights = h - h.min()
    return report


def transport_cost(potential: BrenierPotential, domain, samples: int | None = None,
                   rng=None) -> float:
    """Quadratic transport cost of the potential's map.

    Without ``samples`` the cost is integrated exactly over the 2D cell
    polygons (uniform density) via polygon second moments; with ``samples``
    it is the Monte Carlo mean of half the squared displacement.
    """
    if samples is None:
        stats = exact_cell_stats_2d(potential, domain)
        pts = potential.target.points
        total = 0.0
        for i, verts in enumerate(stats.cells):
            if len(verts) < 3:
                continue
            a, sx, sy, ixx, iyy = _polygon_moments(verts)
            y = pts[i]
            total += 0.5 * (ixx + iyy - 2.0 * (y[0] * sx + y[1] * sy)
                            + (y @ y) * a)
        return total / stats.domain_area
    draws = sample_source(domain, samples, rng=rng)
    disp = draws - potential.transport_map(draws)
    return 0.5 * float(np.mean(np.sum(disp * disp, axis=1)))


def _polygon_moments(verts: np.ndarray):
    """Area, first moments, and axis second moments of a CCW polygon."""
    x, y = verts[:, 0], verts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * float(np.sum(cross))
    sx = float(np.sum((x + xn) * cross)) / 6.0
    sy = float(np.sum((y + yn) * cross)) / 6.0
    ixx = float(np.sum((x * x + x * xn + xn * xn) * cross)) / 12.0
    iyy = float(np.sum((y * y + y * yn + yn * yn) * cross)) / 12.0
    return a, sx, sy, ixx, iyy
