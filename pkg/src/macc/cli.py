"""Command-line front end.

    macc --mode decompose --input tower.txt --out runs/tower
    macc --mode plan-sequential --input tower.txt --out runs/tower --max-robots 2
    macc --mode bench --dims 7x7x4 --count 20 --seed 7 --out runs/bench
    macc --manifest runs/tower/manifest.json   # rerun and compare outputs

Exit codes: 0 ok, 2 parse error, 3 infeasible, 4 timeout, 5 replay mismatch.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .decompose import decompose, dumps_decomposition, is_partition, verify_valid_prefixes
from .milp import NoPlanError, PlanTimeout, get_adapter
from .ordering import dependencies, dumps_order, edge_list, order_substructures, parallel_schedule
from .parallel import AssemblyError, stage_report
from .pipeline import ReplayMismatch, plan_parallel, plan_sequential
from .reachability import dump_traversability
from .simulate import IllegalAction, ReplayError, dumps_schedule, loads_schedule, replay
from .world import GridDims, HeightMap, dumps_structure, generate_random_structure, load_structure, occupancy

log = logging.getLogger("macc")

EXIT_OK, EXIT_PARSE, EXIT_INFEASIBLE, EXIT_TIMEOUT, EXIT_REPLAY = 0, 2, 3, 4, 5
MODES = ("decompose", "order", "plan-sequential", "plan-parallel", "simulate", "bench")
DEFAULT_ROBOT_CAPS = {(10, 10, 4): 20, (7, 7, 4): 6}

# corpus mix: a quarter below 40% occupancy, half in 40-60%, a quarter above 60%
BENCH_BANDS = ((10, 40), (40, 60), (40, 60), (60, 90))

TABLE_COLUMNS = ["Substructure", "Makespan", "Sum-of-costs", "Solve Time", "Total Solve Time"]


class ParseError(Exception):
    pass


@dataclass
class RunConfig:
    mode: str
    input: Optional[str] = None
    out: str = "macc-out"
    max_robots: Optional[int] = None
    solver: str = "highs"
    budget_s: float = 10_000.0
    seed: Optional[int] = None
    tmax: int = 200
    dump_traversability: bool = False
    schedule: Optional[str] = None
    dims: str = "7x7x4"
    count: int = 8
    workers: int = 1
    plan: str = "none"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ParseError(f"unknown mode {self.mode!r}")
        if self.mode != "bench" and not self.input:
            raise ParseError(f"--input is required for {self.mode}")
        if self.mode == "bench" and self.seed is None:
            raise ParseError("--seed is required for bench")
        if self.mode == "simulate" and not self.schedule:
            raise ParseError("--schedule is required for simulate")
        if self.max_robots is not None and self.max_robots < 1:
            raise ParseError("--max-robots must be positive")
        if self.budget_s <= 0:
            raise ParseError("--budget-s must be positive")

    def robots_for(self, dims: GridDims) -> int:
        if self.max_robots is not None:
            return self.max_robots
        return DEFAULT_ROBOT_CAPS.get((dims.x_size, dims.y_size, dims.z_size), 1)


def _versions() -> dict:
    import scipy
    out = {"macc": __version__, "python": platform.python_version(), "numpy": np.__version__,
           "scipy": scipy.__version__}
    try:
        import highspy  # noqa: F401
        from importlib.metadata import version
        out["highspy"] = version("highspy")
    except Exception:
        out["highspy"] = None
    return out


class Outputs:
    """Collects written files; deterministic ones are hashed into the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.hashes: dict = {}
        self.volatile: list = []

    def write(self, name: str, text: str, deterministic: bool = True) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        if deterministic:
            self.hashes[name] = hashlib.sha256(text.encode()).hexdigest()
        else:
            self.volatile.append(name)
        return path


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _seconds(v: float) -> str:
    return f"{v:.3f}"


def run_decompose(cfg: RunConfig, out: Outputs) -> int:
    hmap = load_structure(cfg.input)
    d = decompose(hmap)
    out.write("decomposition.json", dumps_decomposition(d))
    if cfg.dump_traversability:
        out.write("traversability.txt", dump_traversability(hmap))
    print(f"{len(d.substructures)} substructures, partition={is_partition(d)}, "
          f"valid prefixes={verify_valid_prefixes(d)}")
    return EXIT_OK


def run_order(cfg: RunConfig, out: Outputs) -> int:
    hmap = load_structure(cfg.input)
    d = decompose(hmap)
    order = order_substructures(d)
    edges = dependencies(d)
    out.write("order.json", dumps_order(order, edges, parallel_schedule(d)))
    out.write("dependencies.txt", edge_list(edges))
    if cfg.dump_traversability:
        out.write("traversability.txt", dump_traversability(hmap))
    print("order:", " ".join(map(str, order.sequence)), f"({len(order.merges)} merges)")
    return EXIT_OK


def _plan_outputs(plan, cfg: RunConfig, out: Outputs, robots: int) -> None:
    table = [[r.index, r.makespan, r.sum_of_costs, _seconds(r.solve_time), _seconds(r.total_solve_time)]
             for r in plan.rows]
    # the total row is the global schedule: concatenated, or overlapped in parallel mode
    table.append(["Total", plan.makespan, plan.sum_of_costs,
                  _seconds(plan.solve_time), _seconds(plan.total_solve_time)])
    out.write("table.csv", _csv(TABLE_COLUMNS, table), deterministic=False)
    metrics = [[r.index, r.makespan, r.sum_of_costs, r.variables, r.constraints] for r in plan.rows]
    out.write("metrics.csv", _csv(["substructure", "makespan", "sum_of_costs", "variables", "constraints"],
                                  metrics))
    out.write("schedule.json", dumps_schedule(plan.schedule))
    out.write("final_heightmap.txt", dumps_structure(replay(HeightMap.empty(plan.target.dims), plan.schedule)))
    summary = {
        "mode": cfg.mode,
        "max_robots": robots,
        "substructures": plan.n_substructures,
        "planning_merges": [list(m) for m in plan.merges],
        "replay_verified": True,
        "Sum of costs": plan.sum_of_costs,
        "No. of timesteps": plan.makespan,
        "Final Computation Time": round(plan.solve_time, 3),
        "Total Computation Time": round(plan.total_solve_time, 3),
    }
    if plan.stages is not None:
        summary["stages"] = stage_report(plan.stages)
    out.write("summary.json", json.dumps(summary, indent=2) + "\n", deterministic=False)
    print(f"T={plan.makespan} cost={plan.sum_of_costs} d={plan.n_substructures} "
          f"solve={plan.solve_time:.2f}s total={plan.total_solve_time:.2f}s (replay verified)")


def run_plan(cfg: RunConfig, out: Outputs) -> int:
    hmap = load_structure(cfg.input)
    robots = cfg.robots_for(hmap.dims)
    adapter = get_adapter(cfg.solver, cfg.seed or 0)
    planner = plan_sequential if cfg.mode == "plan-sequential" else plan_parallel
    plan = planner(hmap, adapter, max_robots=robots, t_max=cfg.tmax, time_budget=cfg.budget_s)
    if cfg.dump_traversability:
        out.write("traversability.txt", dump_traversability(hmap))
    _plan_outputs(plan, cfg, out, robots)
    return EXIT_OK


def run_simulate(cfg: RunConfig, out: Outputs) -> int:
    target = load_structure(cfg.input)
    try:
        schedule = loads_schedule(Path(cfg.schedule).read_text())
    except (ValueError, KeyError) as exc:
        raise ParseError(f"bad schedule file: {exc}") from exc
    final = replay(HeightMap.empty(target.dims), schedule, max_robots=cfg.max_robots)
    out.write("final_heightmap.txt", dumps_structure(final))
    if final != target:
        print("replay does not reproduce the target", file=sys.stderr)
        return EXIT_REPLAY
    print(f"replay ok: T={schedule.makespan} cost={schedule.sum_of_costs} robots={schedule.n_robots}")
    return EXIT_OK


def bench_corpus(dims: GridDims, count: int, seed: int) -> list[tuple[int, tuple, HeightMap]]:
    """Seeded structures cycling through the occupancy bands of the corpus mix."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=count)
    corpus = []
    for i, s in enumerate(seeds):
        band = BENCH_BANDS[i % len(BENCH_BANDS)]
        corpus.append((int(s), band, generate_random_structure(dims, band, seed=int(s))))
    return corpus


def _bench_one(args) -> dict:
    k, s, band, hmap, cfg = args
    d = decompose(hmap)
    order = order_substructures(d)
    ps = parallel_schedule(d)
    row = {
        "structure": k, "seed": s, "band": f"{band[0]}-{band[1]}", "blocks": hmap.total_blocks,
        "occupancy": round(occupancy(hmap), 4), "substructures": len(d.substructures),
        "partition": is_partition(d), "valid_prefixes": verify_valid_prefixes(d),
        "merges": len(order.merges), "stages": len(ps.stages),
    }
    timing = {}
    if cfg.plan != "none":
        adapter = get_adapter(cfg.solver, s)
        robots = cfg.robots_for(hmap.dims)
        for mode, planner in (("sequential", plan_sequential), ("parallel", plan_parallel)):
            if cfg.plan not in (mode, "both"):
                continue
            plan = planner(hmap, adapter, max_robots=robots, t_max=cfg.tmax, time_budget=cfg.budget_s)
            row[f"{mode}_makespan"] = plan.makespan
            row[f"{mode}_sum_of_costs"] = plan.sum_of_costs
            timing[f"{mode}_solve_time"] = _seconds(plan.solve_time)
            timing[f"{mode}_total_solve_time"] = _seconds(plan.total_solve_time)
    return {"row": row, "timing": timing, "structure": dumps_structure(hmap)}


def run_bench(cfg: RunConfig, out: Outputs) -> int:
    try:
        dims = GridDims.parse(cfg.dims)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    corpus = bench_corpus(dims, cfg.count, cfg.seed)
    jobs = [(k, s, band, hmap, cfg) for k, (s, band, hmap) in enumerate(corpus)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_bench_one, jobs))
    else:
        results = [_bench_one(j) for j in jobs]
    for k, res in enumerate(results):
        out.write(f"structures/{k:04d}.txt", res["structure"])
    rows = [r["row"] for r in results]
    header = list(rows[0]) if rows else []
    out.write("bench.csv", _csv(header, [[r.get(h, "") for h in header] for r in rows]))
    if cfg.plan != "none":
        theader = ["structure"] + sorted({k for r in results for k in r["timing"]})
        trows = [[k] + [r["timing"].get(h, "") for h in theader[1:]] for k, r in enumerate(results)]
        out.write("timings.csv", _csv(theader, trows), deterministic=False)
    n = len(rows)
    agg = {
        "structures": n,
        "mean_occupancy": round(float(np.mean([r["occupancy"] for r in rows])), 4) if n else 0,
        "mean_substructures": round(float(np.mean([r["substructures"] for r in rows])), 3) if n else 0,
        "failures": sum(not (r["partition"] and r["valid_prefixes"]) for r in rows),
        "merges": sum(r["merges"] for r in rows),
    }
    out.write("aggregate.json", json.dumps(agg, indent=2) + "\n")
    print(json.dumps(agg))
    return EXIT_OK


RUNNERS = {
    "decompose": run_decompose, "order": run_order, "plan-sequential": run_plan,
    "plan-parallel": run_plan, "simulate": run_simulate, "bench": run_bench,
}


def run(cfg: RunConfig) -> int:
    """Run one configuration; returns the exit status and writes a manifest next to the outputs."""
    try:
        cfg.validate()
        out = Outputs(Path(cfg.out))
        status = RUNNERS[cfg.mode](cfg, out)
    except (ParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NoPlanError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PlanTimeout as exc:
        print(f"timeout: {exc}", file=sys.stderr)
        return EXIT_TIMEOUT
    except (ReplayMismatch, ReplayError, IllegalAction, AssemblyError) as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_REPLAY
    manifest = {
        "config": asdict(cfg),
        "versions": _versions(),
        "seeds": {"run": cfg.seed},
        "outputs": out.hashes,
        "volatile_outputs": out.volatile,
        "status": status,
    }
    (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return status


def rerun(manifest_path: str, out: Optional[str] = None) -> int:
    """Rerun a manifest's configuration and compare the deterministic outputs."""
    try:
        manifest = json.loads(Path(manifest_path).read_text())
        known = {f.name for f in fields(RunConfig)}
        cfg = RunConfig(**{k: v for k, v in manifest["config"].items() if k in known})
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: bad manifest: {exc}", file=sys.stderr)
        return EXIT_PARSE
    if out:
        cfg.out = out
    status = run(cfg)
    if status != EXIT_OK:
        return status
    fresh = json.loads((Path(cfg.out) / "manifest.json").read_text())["outputs"]
    differ = sorted(k for k in manifest["outputs"] if fresh.get(k) != manifest["outputs"][k])
    if differ:
        print("outputs differ from manifest: " + ", ".join(differ), file=sys.stderr)
        return EXIT_REPLAY
    print("all outputs reproduced")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="macc", description="Decompose, order and plan block structures.")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--input", help="structure file (text or JSON)")
    p.add_argument("--out", default="macc-out", help="output directory")
    p.add_argument("--max-robots", type=int, help="robot cap (default 20 for 10x10x4, 6 for 7x7x4, else 1)")
    p.add_argument("--solver", default="highs", choices=["highs", "highs-mps"])
    p.add_argument("--budget-s", type=float, default=10_000.0, help="time budget per structure")
    p.add_argument("--seed", type=int)
    p.add_argument("--tmax", type=int, default=200, help="largest makespan tried")
    p.add_argument("--dump-traversability", action="store_true")
    p.add_argument("--schedule", help="schedule file for simulate")
    p.add_argument("--dims", default="7x7x4", help="bench grid, e.g. 10x10x4")
    p.add_argument("--count", type=int, default=8, help="bench corpus size")
    p.add_argument("--workers", type=int, default=1, help="bench worker processes")
    p.add_argument("--plan", default="none", choices=["none", "sequential", "parallel", "both"],
                   help="what bench plans besides decomposition and ordering")
    p.add_argument("--manifest", help="rerun the configuration stored in a manifest")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.manifest:
        return rerun(args.manifest, args.out if args.out != "macc-out" else None)
    if not args.mode:
        print("error: --mode is required", file=sys.stderr)
        return EXIT_PARSE
    cfg = RunConfig(**{k: v for k, v in vars(args).items() if k not in ("manifest", "verbose")})
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
