"""Command-line interface: solve | generate | probe | render | compare-oracle.

Errors go to stderr with exit code 1 (2 when the solver ran out of
iterations); results go to files in the config's output directory. The
``SDOT_OUTPUT_DIR`` environment variable overrides the output directory
and ``--seed`` overrides the config seed.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, build_domain, build_target, load_config
from .geometry import GeometryError, sample_source, validate_target
from .kantorovich import solve_lp
from .potential import BrenierPotential, PowerCellStats, exact_cell_stats_2d
from .render import build_scene, scene_to_svg
from .singularity import default_theta, detect_singular_facets, probe_segment
from .solver import SolverError, solve, transport_cost


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path: Path):
    return json.loads(path.read_text())


def _prepare(config_path, seed_override=None):
    config = load_config(config_path)
    if seed_override is not None:
        config.seed = int(seed_override)
        config.solver.seed = int(seed_override)
    domain = build_domain(config)
    target, labels = build_target(config, domain.dimension)
    outdir = Path(config.output_dir)
    return config, domain, target, labels, outdir


def _load_solved(config, outdir: Path, needs_stats: bool = True):
    """Re-ingest the artifacts written by `solve`."""
    heights_file = outdir / "heights.json"
    stats_file = outdir / "stats.json"
    target_file = outdir / "target.json"
    needed = [heights_file, target_file] + ([stats_file] if needs_stats else [])
    for f in needed:
        if not f.exists():
            raise FileNotFoundError(
                f"missing artifact {f}; run `sdot solve` on this config first")
    heights = np.asarray(_load_json(heights_file)["heights"], dtype=float)
    stats = PowerCellStats.from_json_dict(_load_json(stats_file)) if needs_stats else None
    tdata = _load_json(target_file)
    target = validate_target(np.asarray(tdata["points"], dtype=float),
                             np.asarray(tdata["weights"], dtype=float),
                             mass_tolerance=1e-9)
    labels = None if tdata["labels"] is None else np.asarray(tdata["labels"])
    return BrenierPotential(target, heights), stats, labels


def cmd_solve(args) -> int:
    config, domain, target, labels, outdir = _prepare(args.config, args.seed)
    outdir.mkdir(parents=True, exist_ok=True)
    report = solve(domain, target, config.solver)
    potential = BrenierPotential(target, report.heights)

    _write_json(outdir / "report.json", report.to_json_dict())
    _write_json(outdir / "heights.json", {"heights": report.heights.tolist()})
    _write_json(outdir / "target.json", {
        "points": target.points.tolist(),
        "weights": target.weights.tolist(),
        "labels": None if labels is None else [int(l) for l in labels],
    })
    if config.solver.mode == "exact-2d":
        stats = exact_cell_stats_2d(potential, domain)
        _write_json(outdir / "stats.json", stats.to_json_dict())
    if not report.converged:
        print(f"did not converge: residual {report.final_residual:.3e} "
              f"after {report.iterations} iterations", file=sys.stderr)
        return 2
    print(f"converged in {report.iterations} iterations, "
          f"residual {report.final_residual:.3e}")
    return 0


def cmd_generate(args) -> int:
    config, domain, _, _, outdir = _prepare(args.config, args.seed)
    potential, _, _ = _load_solved(config, outdir, needs_stats=False)
    count = int(args.count)
    if count < 1:
        raise ConfigError("--count must be >= 1")
    rng = np.random.default_rng([config.seed, 0x6e9])
    samples = sample_source(domain, count, rng=rng)
    idx = potential.assign_cell(samples)
    mapped = potential.target.points[idx]

    out = outdir / "generated.csv"
    d = domain.dimension
    header = ",".join([f"x{k}" for k in range(d)] + ["target_index"]
                      + [f"y{k}" for k in range(d)])
    with open(out, "w") as fh:
        fh.write(header + "\n")
        for row, i, y in zip(samples, idx, mapped):
            coords = ",".join(repr(float(v)) for v in row)
            ycoords = ",".join(repr(float(v)) for v in y)
            fh.write(f"{coords},{int(i)},{ycoords}\n")
    print(f"wrote {count} rows to {out}")
    return 0


def _parse_point(text: str) -> np.ndarray:
    try:
        return np.asarray([float(tok) for tok in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"expected comma-separated coordinates, got {text!r}") from None


def cmd_probe(args) -> int:
    config, domain, _, _, outdir = _prepare(args.config, args.seed)
    potential, stats, _ = _load_solved(config, outdir)
    theta = config.theta or default_theta(stats, potential.target)
    graph = detect_singular_facets(stats, potential.target, theta)
    p = _parse_point(args.p)
    q = _parse_point(args.q)
    crossings = probe_segment(potential, domain, graph, p, q, steps=int(args.steps))

    out = outdir / "probe.csv"
    with open(out, "w") as fh:
        fh.write("t,from_cell,to_cell,jump,is_singular\n")
        for c in crossings:
            fh.write(f"{float(c.t)!r},{c.from_cell},{c.to_cell},{float(c.jump)!r},"
                     f"{int(c.is_singular)}\n")
    singular = sum(1 for c in crossings if c.is_singular)
    print(f"{len(crossings)} crossings ({singular} singular), wrote {out}")
    return 0


def cmd_render(args) -> int:
    config, domain, _, _, outdir = _prepare(args.config, args.seed)
    potential, stats, labels = _load_solved(config, outdir)
    theta = config.theta or default_theta(stats, potential.target)
    graph = detect_singular_facets(stats, potential.target, theta)

    probe = crossings = None
    if args.probe:
        ends = args.probe.split(":")
        if len(ends) != 2:
            raise ConfigError('--probe expects "x1,y1:x2,y2"')
        p, q = _parse_point(ends[0]), _parse_point(ends[1])
        probe = np.stack([p, q])
        crossings = probe_segment(potential, domain, graph, p, q)

    scene = build_scene(
        domain.clip_polygon().vertices, stats, potential.target.points,
        labels=labels if config.render.palette == "auto" else None,
        graph=graph if config.render.show_singular_edges else None,
        probe=probe, crossings=crossings,
        show_targets=config.render.show_targets,
    )
    out = outdir / "diagram.svg"
    out.write_text(scene_to_svg(scene, size=config.render.size))
    print(f"wrote {out}")
    return 0


def cmd_compare_oracle(args) -> int:
    config, domain, _, _, outdir = _prepare(args.config, args.seed)
    potential, _, _ = _load_solved(config, outdir, needs_stats=False)
    ladder = [int(tok) for tok in args.samples.split(",")]
    n_seeds = int(args.seeds)
    if domain.dimension == 2:
        sd_cost = transport_cost(potential, domain)
    else:
        sd_cost = transport_cost(potential, domain, samples=10**6,
                                 rng=np.random.default_rng([config.seed, 0xc057]))

    runs = []
    for m in ladder:
        for seed in range(n_seeds):
            rng = np.random.default_rng([config.seed, seed, m])
            src = sample_source(domain, m, rng=rng)
            _, lp_cost = solve_lp(src, np.full(m, 1.0 / m), potential.target)
            runs.append({
                "m": m, "seed": seed, "lp_cost": lp_cost,
                "rel_gap": abs(lp_cost - sd_cost) / sd_cost,
            })
    medians = {
        str(m): float(np.median([r["rel_gap"] for r in runs if r["m"] == m]))
        for m in ladder
    }
    report = {
        "ladder": ladder,
        "seeds": n_seeds,
        "semi_discrete_cost": sd_cost,
        "runs": runs,
        "median_gaps": medians,
    }
    out = outdir / "oracle_report.json"
    _write_json(out, report)
    print(f"wrote {out}; median gaps: "
          + ", ".join(f"m={m}: {medians[str(m)]:.4f}" for m in ladder))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdot",
        description="Semi-discrete optimal transport solver and diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve for the transport heights")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("generate", help="sample the source and map through the solved potential")
    p.add_argument("config")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("probe", help="walk a segment and report cell crossings")
    p.add_argument("config")
    p.add_argument("--from", dest="p", required=True, metavar="X,Y")
    p.add_argument("--to", dest="q", required=True, metavar="X,Y")
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("render", help="render the solved diagram to SVG")
    p.add_argument("config")
    p.add_argument("--probe", default=None, metavar="X1,Y1:X2,Y2")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("compare-oracle", help="compare against the Kantorovich LP oracle")
    p.add_argument("config")
    p.add_argument("--samples", default="50,200,800", help="comma-separated ladder of m")
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_compare_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, GeometryError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
