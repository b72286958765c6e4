"""Discrete singular-set extraction and segment probes.

Where the transport map jumps between far-apart targets, the potential has
a ridge over the shared facet; flagging facets whose target gap exceeds a
threshold gives a discrete surrogate for the codimension-1 singular set.
Diagram vertices where at least three flagged facets meet play the role of
higher-order singular points, and the convex hull of the targets reachable
around a vertex approximates the subgradient there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GeometryError, convex_hull_2d
from .potential import BrenierPotential, PowerCellStats


class ThresholdNonpositiveError(ValueError):
    """Singularity threshold must be positive."""


class PointOutsideDomainError(GeometryError):
    """Probe endpoint falls outside the source domain."""


class VertexNotFoundError(KeyError):
    """Requested diagram vertex does not exist."""


@dataclass(frozen=True, eq=False)
class SingularFacet:
    i: int
    j: int
    segment: np.ndarray  # (2, 2) endpoints in the source plane
    gap: float           # distance between the two targets


@dataclass(frozen=True, eq=False)
class DiagramVertex:
    point: np.ndarray
    cells: tuple        # indices of incident cells
    singular_degree: int
    is_singular: bool


@dataclass(eq=False)
class SingularityGraph:
    """Flagged facets and diagram vertices at a fixed threshold."""

    facets: list
    vertices: list
    theta: float
    target_points: np.ndarray

    def singular_vertices(self) -> list:
        return [v for v in self.vertices if v.is_singular]

    def to_json_dict(self) -> dict:
        return {
            "theta": self.theta,
            "facets": [
                {"i": f.i, "j": f.j, "gap": f.gap, "segment": f.segment.tolist()}
                for f in self.facets
            ],
            "vertices": [
                {"point": v.point.tolist(), "cells": list(v.cells),
                 "singular_degree": v.singular_degree, "is_singular": v.is_singular}
                for v in self.vertices
            ],
        }


def default_theta(stats: PowerCellStats, target, factor: float = 3.0) -> float:
    """Calibrated threshold: ``factor`` times the median adjacent-target gap."""
    if len(stats.facet_pairs) == 0:
        return factor
    pts = target.points
    gaps = [float(np.linalg.norm(pts[i] - pts[j])) for i, j in stats.facet_pairs]
    return factor * float(np.median(gaps))


def detect_singular_facets(stats: PowerCellStats, target, theta: float) -> SingularityGraph:
    """Flag facets whose adjacent targets are farther apart than ``theta``.

    Requires exact 2D statistics (facet geometry). Also assembles the
    diagram vertices (points where at least three cells meet) with their
    incident cells, marking as singular those meeting >= 3 flagged facets.
    """
    if theta <= 0:
        raise ThresholdNonpositiveError("theta must be positive")
    if not stats.has_facet_measures or stats.cells is None:
        raise GeometryError("singularity detection needs exact 2D statistics")

    pts = target.points
    facets = []
    for (i, j), seg in zip(stats.facet_pairs, stats.facet_segments):
        gap = float(np.linalg.norm(pts[i] - pts[j]))
        if gap > theta:
            facets.append(SingularFacet(int(i), int(j), np.array(seg), gap))

    vertices = _diagram_vertices(stats, facets)
    return SingularityGraph(facets, vertices, float(theta), pts)


def _quantize(point: np.ndarray, scale: float):
    return (round(float(point[0]) / scale), round(float(point[1]) / scale))


def _diagram_vertices(stats: PowerCellStats, facets: list) -> list:
    corners = {}
    all_pts = [v for c in stats.cells if len(c) for v in c]
    if not all_pts:
        return []
    span = float(np.abs(np.asarray(all_pts)).max()) + 1.0
    q = 1e-7 * span

    for idx, cell in enumerate(stats.cells):
        for v in cell:
            key = _quantize(v, q)
            corners.setdefault(key, (np.asarray(v, float), set()))[1].add(idx)

    singular_touch = {}
    for k, f in enumerate(facets):
        for end in f.segment:
            key = _quantize(end, q)
            singular_touch.setdefault(key, set()).add(k)

    vertices = []
    for key, (point, cells) in sorted(corners.items()):
        if len(cells) < 3:
            continue
        degree = len(singular_touch.get(key, ()))
        vertices.append(DiagramVertex(point, tuple(sorted(cells)), degree,
                                      degree >= 3))
    return vertices


def singular_chains(graph: SingularityGraph) -> list:
    """Connected components of the flagged facets, as lists of facet indices.

    Facets are linked when they share an endpoint; each component is one
    discrete singular chain.
    """
    if not graph.facets:
        return []
    span = max(float(np.abs(f.segment).max()) for f in graph.facets) + 1.0
    q = 1e-7 * span
    point_to_facets = {}
    for k, f in enumerate(graph.facets):
        for end in f.segment:
            point_to_facets.setdefault(_quantize(end, q), []).append(k)

    parent = list(range(len(graph.facets)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for members in point_to_facets.values():
        for other in members[1:]:
            ra, rb = find(members[0]), find(other)
            if ra != rb:
                parent[rb] = ra

    groups = {}
    for k in range(len(graph.facets)):
        groups.setdefault(find(k), []).append(k)
    return sorted(groups.values())


@dataclass(frozen=True)
class Crossing:
    t: float
    from_cell: int
    to_cell: int
    jump: float
    is_singular: bool


def probe_segment(potential: BrenierPotential, domain, graph: SingularityGraph,
                  p, q, steps: int = 10000) -> list:
    """Walk the segment from p to q and record every cell change.

    Uniform stepping with the crossing parameter reported at the midpoint
    of the bracketing samples; a crossing is singular when the target jump
    exceeds the graph's threshold.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    for name, pt in (("p", p), ("q", q)):
        if not bool(domain.contains(pt[None, :])[0]):
            raise PointOutsideDomainError(f"probe endpoint {name} lies outside the domain")

    ts = np.linspace(0.0, 1.0, steps + 1)
    samples = p[None, :] + ts[:, None] * (q - p)[None, :]
    cells = potential.assign_cell(samples)
    changes = np.nonzero(cells[1:] != cells[:-1])[0]

    pts = potential.target.points
    out = []
    for k in changes:
        a, b = int(cells[k]), int(cells[k + 1])
        jump = float(np.linalg.norm(pts[a] - pts[b]))
        out.append(Crossing(
            t=float(0.5 * (ts[k] + ts[k + 1])),
            from_cell=a,
            to_cell=b,
            jump=jump,
            is_singular=jump > graph.theta,
        ))
    return out


def cell_subgradient_extent(graph: SingularityGraph, vertex_index: int) -> np.ndarray:
    """Convex hull of the targets of all cells meeting at a diagram vertex.

    This is the discrete subgradient of the potential at the vertex; its
    diameter measures how violently the map jumps there.
    """
    try:
        vertex = graph.vertices[vertex_index]
    except IndexError:
        raise VertexNotFoundError(f"no diagram vertex {vertex_index}") from None
    targets = graph.target_points[list(vertex.cells)]
    return convex_hull_2d(targets)
