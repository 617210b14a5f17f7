"""Command-line front end: config files in, CSV experiment data out.

Subcommands: schedules, capacity, simulate, region3, fluid, init. Configs
are JSON (see `init` for templates); all numeric CSV output uses 12
significant digits and a fixed column order so runs are bit-comparable.
Exit codes: 0 success, 2 config error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from typing import Any

import numpy as np

from .capacity import TrafficProfile, capacity_verdict, scale_to_load
from .csma import AccessParams, Discipline
from .dynamics import SimConfig, simulate
from .errors import ConfigurationError, NumericalError
from .graph import ConflictGraph, ScheduleSet, enumerate_schedules
from .region3 import FluidState, fluid_trajectory, region3_verdict, symmetric_boundary

# Fixed 4-link topologies: the square is the 4-cycle, the line the 4-path,
# and the star has a centre link in conflict with three mutually
# non-conflicting leaves (reading committed in the README).
PRESETS: dict[str, dict[str, Any]] = {
    "single": {"num_links": 1, "conflicts": []},
    "line3": {"num_links": 3, "conflicts": [[1, 2], [2, 3]]},
    "line4": {"num_links": 4, "conflicts": [[1, 2], [2, 3], [3, 4]]},
    "square4": {"num_links": 4, "conflicts": [[1, 2], [2, 3], [3, 4], [4, 1]]},
    "star4": {"num_links": 4, "conflicts": [[1, 2], [1, 3], [1, 4]]},
}


def format_sig(value: float) -> str:
    """12 significant digits, plain decimal point."""
    if isinstance(value, float) and (np.isnan(value) or np.isinf(value)):
        return "nan" if np.isnan(value) else ("inf" if value > 0 else "-inf")
    return format(float(value), ".12g")


@dataclass
class Experiment:
    """Parsed experiment configuration."""

    graph: ConflictGraph
    schedules: ScheduleSet
    params: AccessParams
    traffic: TrafficProfile | None
    loads: list[float] | None
    sim: SimConfig
    fluid_beta: tuple[float, float, float] | None
    fluid_horizon: float
    region_sweep: list[float] | None
    output: str | None


def _config_error(msg: str) -> ConfigurationError:
    return ConfigurationError(msg)


def build_graph(network: dict) -> ConflictGraph:
    if "preset" in network:
        name = network["preset"]
        if name not in PRESETS:
            raise _config_error(
                f"unknown preset {name!r} (choose from {sorted(PRESETS)})"
            )
        preset = PRESETS[name]
        rates = network.get("physical_rates", 1.0)
        return ConflictGraph(preset["num_links"], [tuple(c) for c in preset["conflicts"]], rates)
    try:
        links = network["links"]
        conflicts = [tuple(c) for c in network.get("conflicts", [])]
    except (KeyError, TypeError) as exc:
        raise _config_error(f"network section malformed: {exc}")
    ids = [entry["id"] for entry in links]
    if sorted(ids) != list(range(1, len(ids) + 1)):
        raise _config_error("link ids must be 1..K")
    rates = [0.0] * len(ids)
    for entry in links:
        rates[entry["id"] - 1] = float(entry.get("physical_rate", 1.0))
    return ConflictGraph(len(ids), conflicts, rates)


def build_params(config: dict, num_links: int) -> AccessParams:
    discipline = config.get("discipline", "flow-aware")
    try:
        disc = Discipline(discipline)
    except ValueError:
        raise _config_error(f"unknown discipline {discipline!r}")
    alpha = config.get("alpha", 1.0)
    if alpha == "infinity":
        return AccessParams.limit(disc)
    if isinstance(alpha, list):
        if len(alpha) != num_links:
            raise _config_error(f"alpha list has {len(alpha)} entries for {num_links} links")
        return AccessParams(disc, tuple(float(a) for a in alpha))
    return AccessParams(disc, float(alpha))


def build_traffic(section: dict, num_links: int) -> TrafficProfile:
    if "lambda" in section:
        lam = section["lambda"]
        sigma = section.get("sigma", 1.0)
        if len(lam) != num_links:
            raise _config_error("lambda list does not match the number of links")
        return TrafficProfile(tuple(float(v) for v in lam), sigma)
    if "rho" in section:
        rho = section["rho"]
        sigma = float(section.get("sigma", 1.0))
        if isinstance(rho, list):
            if len(rho) != num_links:
                raise _config_error("rho list does not match the number of links")
            return TrafficProfile(tuple(float(r) / sigma for r in rho), sigma)
        return TrafficProfile.symmetric(num_links, float(rho), sigma)
    raise _config_error("traffic section needs either 'lambda' or 'rho'")


def parse_experiment(config: dict) -> Experiment:
    if "network" not in config:
        raise _config_error("config is missing the 'network' section")
    graph = build_graph(config["network"])
    schedules = enumerate_schedules(graph)
    params = build_params(config, graph.num_links)

    traffic = None
    loads = None
    if "traffic" in config:
        section = config["traffic"]
        loads = section.get("load_sweep")
        if loads is not None:
            if len(loads) < 2:
                raise _config_error("a load sweep needs at least 2 points")
            loads = [float(v) for v in loads]
            base = section.get("rho", 0.5)
            probe = dict(section)
            probe.pop("load_sweep")
            probe.setdefault("rho", base)
            traffic = build_traffic(probe, graph.num_links)
        else:
            traffic = build_traffic(section, graph.num_links)

    sim_section = config.get("sim", {})
    sim = SimConfig(
        total_jumps=int(sim_section.get("jumps", 10_000_000)),
        warmup_jumps=int(sim_section.get("warmup", 100_000)),
        rng_seed=int(sim_section.get("seed", 1)),
        num_batches=int(sim_section.get("batches", 20)),
        initial_state=(
            tuple(sim_section["initial_state"]) if "initial_state" in sim_section else None
        ),
        state_cap=sim_section.get("cap"),
    )

    fluid_section = config.get("fluid", {})
    beta = fluid_section.get("beta")
    region_section = config.get("region3", {})
    sweep = region_section.get("rho1_sweep")

    return Experiment(
        graph=graph,
        schedules=schedules,
        params=params,
        traffic=traffic,
        loads=loads,
        sim=sim,
        fluid_beta=tuple(beta) if beta else None,
        fluid_horizon=float(fluid_section.get("horizon", 1000.0)),
        region_sweep=[float(v) for v in sweep] if sweep else None,
        output=config.get("output"),
    )


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise _config_error(f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise _config_error(f"config is not valid JSON: {exc}")


def _write_rows(out_path: str | None, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(
            ",".join(v if isinstance(v, str) else format_sig(v) for v in row)
        )
    text = "\n".join(lines) + "\n"
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _schedule_label(schedules: ScheduleSet, i: int) -> str:
    links = schedules.links(i)
    return "+".join(str(k) for k in links) if links else "idle"


def cmd_schedules(exp: Experiment, out: str | None) -> int:
    rows = [[str(i + 1), _schedule_label(exp.schedules, i)] for i in range(len(exp.schedules))]
    sys.stdout.write(f"N={len(exp.schedules)}\n")
    _write_rows(out, ["schedule", "links"], rows)
    return 0


def cmd_capacity(exp: Experiment, out: str | None) -> int:
    if exp.traffic is None:
        raise _config_error("capacity needs a traffic section")
    verdict = capacity_verdict(exp.graph, exp.schedules, exp.traffic)
    rows = [
        [verdict.load, verdict.classification, _schedule_label(exp.schedules, i), q]
        for i, q in enumerate(verdict.witness)
    ]
    _write_rows(out, ["load", "classification", "schedule", "q"], rows)
    return 0


def _scaled_traffic(exp: Experiment, load: float) -> TrafficProfile:
    base = capacity_verdict(exp.graph, exp.schedules, exp.traffic)
    return scale_to_load(exp.traffic, base.load, load)


def cmd_simulate(exp: Experiment, out: str | None) -> int:
    if exp.traffic is None:
        raise _config_error("simulate needs a traffic section")
    loads = exp.loads
    rows = []
    if loads is None:
        points = [(capacity_verdict(exp.graph, exp.schedules, exp.traffic).load, exp.traffic)]
    else:
        points = [(load, _scaled_traffic(exp, load)) for load in loads]
    for load, traffic in points:
        est = simulate(exp.graph, exp.schedules, traffic, exp.params, exp.sim)
        capped = 1 if est.capped_time_fraction > 0 else 0
        for k in range(exp.graph.num_links):
            rows.append(
                [
                    load,
                    str(k + 1),
                    est.mean_counts[k],
                    est.throughputs[k],
                    est.ci_half_widths[k],
                    str(est.seed),
                    str(capped),
                ]
            )
    rows.sort(key=lambda r: (r[0], int(r[1])))
    _write_rows(out, ["load", "link", "ex", "gamma", "ci_half_width", "seed", "capped"], rows)
    return 0


def cmd_region3(exp: Experiment, out: str | None) -> int:
    if exp.graph.num_links != 3:
        raise _config_error("region3 needs a 3-link line network (preset line3)")
    if exp.region_sweep:
        rows = []
        for rho1 in exp.region_sweep:
            rho2_star, pi0, pi13 = symmetric_boundary(rho1)
            rows.append([rho1, rho2_star, pi0, pi13])
        _write_rows(out, ["rho1", "rho2_star", "pi0", "pi13"], rows)
        return 0
    if exp.traffic is None:
        raise _config_error("region3 needs a traffic section or a rho1_sweep")
    verdict = region3_verdict(exp.traffic)
    rho = exp.traffic.intensities
    _write_rows(
        out,
        ["rho1", "rho2", "rho3", "classification", "matched_case"],
        [[rho[0], rho[1], rho[2], verdict.classification, verdict.matched_case]],
    )
    return 0


def cmd_fluid(exp: Experiment, out: str | None) -> int:
    if exp.fluid_beta is None:
        raise _config_error("fluid needs a fluid.beta entry")
    if exp.traffic is None:
        raise _config_error("fluid needs a traffic section")
    path = fluid_trajectory(
        FluidState(exp.fluid_beta), exp.traffic, horizon=exp.fluid_horizon
    )
    rows = [[t, y[0], y[1], y[2]] for t, y in path.breakpoints]
    _write_rows(out, ["t", "x1", "x2", "x3"], rows)
    drained = "none" if path.drained_at is None else format_sig(path.drained_at)
    diverging = "+".join(str(k) for k in path.diverging) or "none"
    sys.stdout.write(f"drained_at={drained} diverging={diverging}\n")
    return 0


def cmd_init(preset: str, out: str | None) -> int:
    if preset not in PRESETS:
        raise _config_error(f"unknown preset {preset!r} (choose from {sorted(PRESETS)})")
    config = {
        "network": {"preset": preset},
        "discipline": "flow-aware",
        "alpha": 1.0,
        "traffic": {"rho": 0.4, "sigma": 1.0},
        "sim": {"jumps": 10_000_000, "warmup": 100_000, "seed": 1, "batches": 20},
    }
    text = json.dumps(config, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="flowcsma", description="Flow-level CSMA network experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("schedules", "capacity", "simulate", "region3", "fluid"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jumps", type=int, default=None)
        p.add_argument("--warmup", type=int, default=None)
    p_init = sub.add_parser("init")
    p_init.add_argument("--preset", required=True)
    p_init.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    try:
        if args.command == "init":
            return cmd_init(args.preset, args.out)
        config = load_config(args.config)
        sim = config.setdefault("sim", {})
        if args.seed is not None:
            sim["seed"] = args.seed
        if args.jumps is not None:
            sim["jumps"] = args.jumps
        if args.warmup is not None:
            sim["warmup"] = args.warmup
        exp = parse_experiment(config)
        out = args.out or exp.output
        handler = {
            "schedules": cmd_schedules,
            "capacity": cmd_capacity,
            "simulate": cmd_simulate,
            "region3": cmd_region3,
            "fluid": cmd_fluid,
        }[args.command]
        return handler(exp, out)
    except ConfigurationError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except NumericalError as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
