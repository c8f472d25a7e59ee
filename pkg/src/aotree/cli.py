"""Command-line entry point: ``aot <subcommand> ...``.

Exit codes: 0 success, 2 validation error, 3 planner failure, 4 I/O error.
Failures print a one-line JSON object ``{"error": ..., "message": ...}`` to
stderr. Set ``AOT_LOG`` (e.g. ``DEBUG``) to change log verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .envs import BeaconWorld, RandomPomdpSpec, default_world, gen_random_pomdp
from .errors import AotError, ValidationError
from .planner import (
    EXACT,
    SAMPLED,
    PlannerConfig,
    frozen_clock,
    monotonic_ms,
    plan,
    replan_episode,
)
from .pomdp import TabularPomdp
from .sparse import ConcentrationParams, SampleParams, concentration, v_max_for
from .topology import RefinementSchedule, Topology

log = logging.getLogger("aotree")

EXIT_OK, EXIT_VALIDATION, EXIT_PLANNER, EXIT_IO = 0, 2, 3, 4

TRACE_HEADER = ["iteration", "action", "lb", "ub", "pruned", "identified", "flipped_cum", "elapsed_ms"]
RUNS_HEADER = [
    "seed",
    "chosen_action",
    "baseline_action",
    "identified",
    "iterations",
    "elapsed_ms",
    "baseline_elapsed_ms",
    "agreement",
    "error",
]

CLOCKS = {"monotonic": monotonic_ms, "none": frozen_clock}

# Sample sizes when --obs-samples / --particles are not given.
SPARSE_DEFAULTS = (50, 50)
BEACON_DEFAULTS = (8, 20)


class CliIOError(AotError):
    pass


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _add_shared(p, defaults=(None, None)):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory (or file for gen-pomdp)")
    p.add_argument("--compare-full", action="store_true", help="also run the full-topology baseline")
    p.add_argument("--init-fraction", type=float, default=0.15)
    p.add_argument("--refine-step", type=_positive, default=5)
    p.add_argument("--max-iterations", type=_positive, default=None)
    p.add_argument("--depth", type=_positive, default=None, help="planning horizon (layers)")
    p.add_argument("--obs-samples", type=_positive, default=defaults[0])
    p.add_argument("--particles", type=_positive, default=defaults[1])
    p.add_argument("--epsilon", type=float, default=None, help="separation slack for identification")
    p.add_argument("--vmax", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="report the concentration bound")
    p.add_argument("--budget-nodes", type=_positive, default=None)
    p.add_argument("--topology-file", default=None)
    p.add_argument("--clock", choices=sorted(CLOCKS), default="monotonic",
                   help="'none' records 0 for every timing field (byte-stable output)")


def _add_generator(p):
    g = p.add_argument_group("random model generator")
    g.add_argument("--model", default=None, help="TabularPomdp JSON file")
    g.add_argument("--states", type=int, default=None)
    g.add_argument("--actions", type=int, default=None)
    g.add_argument("--observations", type=int, default=None)
    g.add_argument("--reward-range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    g.add_argument("--identical-actions", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aot", description="Adaptive observation-topology POMDP planning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pomdp", help="write a seeded random tabular POMDP")
    p.add_argument("--states", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--observations", type=int, required=True)
    p.add_argument("--horizon", type=int, default=2)
    p.add_argument("--reward-range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    p.add_argument("--identical-actions", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    for name, helptext in (("solve-exact", "exact bounds on a tabular model"),
                           ("solve-sparse", "sampled bounds with particle beliefs")):
        p = sub.add_parser(name, help=helptext)
        _add_shared(p)
        _add_generator(p)

    p = sub.add_parser("beacon-run", help="closed-loop beacon navigation episode")
    _add_shared(p, BEACON_DEFAULTS)
    p.add_argument("--world", default=None, help="world JSON (defaults to the bundled layout)")
    p.add_argument("--steps", type=_positive, default=10)

    p = sub.add_parser("bench", help="seed sweep with aggregate report")
    _add_shared(p)
    _add_generator(p)
    p.add_argument("--mode", choices=(EXACT, SAMPLED), default=EXACT)
    p.add_argument("--seeds", type=_positive, default=10, help="number of consecutive seeds from --seed")
    return parser


def _planner_config(args, mode) -> PlannerConfig:
    if not 0.0 <= args.init_fraction <= 1.0:
        raise ValidationError("init_fraction", "must lie in [0, 1]")
    defaults = BEACON_DEFAULTS if args.command == "beacon-run" else SPARSE_DEFAULTS
    params = SampleParams(
        obs_samples=args.obs_samples or defaults[0],
        particles=args.particles or defaults[1],
        depth=args.depth,
        seed=args.seed,
    )
    topology = None
    if args.topology_file:
        topology = _read(lambda: Topology.load(args.topology_file), args.topology_file)
    kwargs = {}
    if args.budget_nodes:
        kwargs["budget_nodes"] = args.budget_nodes
    return PlannerConfig(
        mode=mode,
        init_fraction=args.init_fraction,
        schedule=RefinementSchedule(args.refine_step, args.max_iterations, args.seed),
        params=params,
        epsilon=args.epsilon,
        topology=topology,
        seed=args.seed,
        **kwargs,
    )


def _read(loader, path):
    try:
        return loader()
    except FileNotFoundError:
        raise CliIOError(f"cannot read {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(str(path), f"malformed file ({exc})") from None


def _generator_spec(args, seed) -> RandomPomdpSpec | None:
    given = [args.states, args.actions, args.observations]
    if args.model and any(v is not None for v in given):
        raise ValidationError("model", "give either --model or generator sizes, not both")
    if args.model:
        return None
    if any(v is None for v in given):
        raise ValidationError("model", "need --model or all of --states/--actions/--observations")
    return RandomPomdpSpec(
        num_states=args.states,
        num_actions=args.actions,
        num_observations=args.observations,
        seed=seed,
        reward_range=tuple(args.reward_range),
        horizon=args.depth or 2,
        identical_actions=args.identical_actions,
    )


def _load_model(args, seed) -> TabularPomdp:
    spec = _generator_spec(args, seed)
    if spec is not None:
        return gen_random_pomdp(spec)
    model = _read(lambda: TabularPomdp.load(args.model), args.model)
    if args.depth:
        model = TabularPomdp(
            transition=model.transition,
            observation=model.observation,
            reward_table=model.reward_table,
            initial_belief=model.initial_belief,
            horizon=args.depth,
            r_max=model.r_max,
        )
    return model


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliIOError(f"cannot create {out}: {exc}") from None
    return out


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc}") from None


def _write_json(path: Path, doc):
    try:
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc}") from None


def _concentration_doc(args, model, num_actions):
    if args.lam is None:
        return None
    v_max = args.vmax if args.vmax is not None else v_max_for(model)
    horizon = args.depth or model.horizon
    error, prob = concentration(
        ConcentrationParams(args.obs_samples or SPARSE_DEFAULTS[0], horizon, num_actions, args.lam, v_max)
    )
    return {"lambda": args.lam, "v_max": v_max, "error_bound": error, "probability": prob}


def _speedup(full_ms, ms):
    if full_ms is None or not ms:
        return None
    return full_ms / ms


def cmd_gen_pomdp(args) -> int:
    spec = RandomPomdpSpec(
        num_states=args.states,
        num_actions=args.actions,
        num_observations=args.observations,
        seed=args.seed,
        reward_range=tuple(args.reward_range),
        horizon=args.horizon,
        identical_actions=args.identical_actions,
    )
    model = gen_random_pomdp(spec)
    out = Path(args.out)
    try:
        if out.parent != Path("."):
            out.parent.mkdir(parents=True, exist_ok=True)
        model.save(out)
    except OSError as exc:
        raise CliIOError(f"cannot write {out}: {exc}") from None
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_solve(args, mode) -> int:
    clock = CLOCKS[args.clock]
    model = _load_model(args, args.seed)
    config = _planner_config(args, mode)
    out = _out_dir(args.out)
    try:
        result = plan(model, None, config, clock)
    except AotError as exc:
        partial = getattr(exc, "partial_result", None)
        if partial is not None:
            _write_csv(out / "trace.csv", TRACE_HEADER, partial.trace_rows())
        raise
    _write_csv(out / "trace.csv", TRACE_HEADER, result.trace_rows())
    summary = {
        "chosen_action": result.chosen_action,
        "identified": result.identified,
        "iterations": result.iterations,
        "elapsed_ms": result.total_elapsed_ms,
        "mode": mode,
        "final_topology": result.final_topology_label,
        "baseline_action": None,
        "baseline_elapsed_ms": None,
        "agreement": None,
    }
    if args.compare_full:
        baseline = plan(model, None, config.full(), clock)
        summary.update(
            baseline_action=baseline.chosen_action,
            baseline_elapsed_ms=baseline.total_elapsed_ms,
            agreement=baseline.chosen_action == result.chosen_action,
        )
    if mode == SAMPLED:
        conc = _concentration_doc(args, model, model.num_actions)
        if conc is not None:
            summary["concentration"] = conc
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def _load_world(args) -> BeaconWorld:
    horizon = args.depth or 3
    if args.world:
        world = _read(lambda: BeaconWorld.load(args.world, horizon), args.world)
    else:
        world = default_world(horizon)
    if args.vmax is not None:
        world = BeaconWorld(
            beacon=world.beacon,
            goal=world.goal,
            obstacles=world.obstacles,
            start_mean=world.start_mean,
            start_cov_scale=world.start_cov_scale,
            horizon=horizon,
            v_max=args.vmax,
        )
    return world


def cmd_beacon(args) -> int:
    clock = CLOCKS[args.clock]
    world = _load_world(args)
    config = _planner_config(args, SAMPLED)
    out = _out_dir(args.out)
    episode = replan_episode(world, args.steps, config, args.seed, args.compare_full, clock)
    rows = (
        {
            "step": s.step,
            "action": s.action,
            "reward": s.reward,
            "planning_ms": s.planning_ms,
            "state_0": float(s.state[0]),
            "state_1": float(s.state[1]),
        }
        for s in episode.steps
    )
    _write_csv(out / "episode.csv", ["step", "action", "reward", "planning_ms", "state_0", "state_1"], rows)
    final = episode.steps[-1].state
    summary = {
        "steps": len(episode.steps),
        "total_planning_ms": episode.total_planning_ms,
        "total_full_planning_ms": episode.total_full_planning_ms,
        "agreement": episode.agreement,
        "speedup": _speedup(episode.total_full_planning_ms, episode.total_planning_ms),
        "actions": [s.action for s in episode.steps],
        "full_actions": [s.full_action for s in episode.steps] if args.compare_full else None,
        "identified_steps": sum(s.identified for s in episode.steps),
        "total_reward": sum(s.reward for s in episode.steps),
        "final_state": [float(v) for v in final],
        "final_distance": float(np.linalg.norm(final - world.goal)),
    }
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_bench(args) -> int:
    clock = CLOCKS[args.clock]
    out = _out_dir(args.out)
    config = _planner_config(args, args.mode)
    runs = []
    for seed in range(args.seed, args.seed + args.seeds):
        row = dict.fromkeys(RUNS_HEADER)
        row["seed"] = seed
        try:
            model = _load_model(args, seed)
            cfg = PlannerConfig(
                mode=config.mode,
                init_fraction=config.init_fraction,
                schedule=RefinementSchedule(config.schedule.flips_per_iteration,
                                            config.schedule.max_iterations, seed),
                params=SampleParams(config.params.obs_samples, config.params.particles,
                                    config.params.depth, seed),
                epsilon=config.epsilon,
                budget_nodes=config.budget_nodes,
                topology=config.topology,
                seed=seed,
            )
            result = plan(model, None, cfg, clock)
            baseline = plan(model, None, cfg.full(), clock)
        except AotError as exc:
            log.warning("seed %d failed: %s", seed, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
            runs.append(row)
            continue
        row.update(
            chosen_action=result.chosen_action,
            baseline_action=baseline.chosen_action,
            identified=int(result.identified),
            iterations=result.iterations,
            elapsed_ms=result.total_elapsed_ms,
            baseline_elapsed_ms=baseline.total_elapsed_ms,
            agreement=int(result.chosen_action == baseline.chosen_action),
            error="",
        )
        runs.append(row)
    _write_csv(out / "runs.csv", RUNS_HEADER, runs)
    _write_json(out / "report.json", bench_report(runs, args.mode))
    return EXIT_OK


def bench_report(runs, mode) -> dict:
    done = [r for r in runs if not r["error"]]
    identified = [r for r in done if r["identified"]]
    speedups = [
        s for s in (_speedup(r["baseline_elapsed_ms"], r["elapsed_ms"]) for r in done) if s is not None
    ]

    def rate(rows):
        return sum(r["agreement"] for r in rows) / len(rows) if rows else None

    return {
        "mode": mode,
        "runs": len(runs),
        "completed": len(done),
        "identified_runs": len(identified),
        "agreement_rate": rate(done),
        "agreement_rate_identified": rate(identified),
        "median_speedup": statistics.median(speedups) if speedups else None,
        "median_iterations": statistics.median(r["iterations"] for r in done) if done else None,
        "iteration_histogram": {str(k): v for k, v in sorted(Counter(r["iterations"] for r in done).items())},
        "failures": [{"seed": r["seed"], "error": r["error"]} for r in runs if r["error"]],
    }


def _fail(code, exc) -> int:
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    field = getattr(exc, "field", None)
    if field is not None:
        doc["field"] = field
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("AOT_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-pomdp":
            return cmd_gen_pomdp(args)
        if args.command == "solve-exact":
            return cmd_solve(args, EXACT)
        if args.command == "solve-sparse":
            return cmd_solve(args, SAMPLED)
        if args.command == "beacon-run":
            return cmd_beacon(args)
        return cmd_bench(args)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc)
    except CliIOError as exc:
        return _fail(EXIT_IO, exc)
    except AotError as exc:
        return _fail(EXIT_PLANNER, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)


if __name__ == "__main__":
    sys.exit(main())
