"""Experiment harness: JSON configs, CLI, CSV metrics, and SVG plots.

Subcommands:
  plan            print the planned parameter schedule as key=value lines
  run             execute one experiment and write its metric CSV
  sweep           run a cartesian grid of override lists, one CSV per entry
  validate-graph  print the contraction certificate of the configured graph
  plot            render f_gap and consensus_sq vs comm_total from CSVs

Config files are JSON, one experiment per file; see the README for the
schema.  ``DSTORM_DATA_DIR`` is consulted when a dataset path is relative.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .decentralized import (
    MetricRow,
    PlanError,
    RunPlan,
    RunRecord,
    plan_run,
    run_dsagd,
    run_dsgd,
)
from .problems import (
    ProblemError,
    gen_quadratic,
    make_logistic_instance,
    parse_libsvm,
    synthetic_classification,
)
from .topology import (
    Graph,
    GraphSchedule,
    TopologyError,
    contraction_certificate,
    random_geometric_graph,
    static_schedule,
    tau_connected_schedule,
)

__all__ = [
    "CSV_COLUMNS",
    "ConfigError",
    "MetricRow",
    "load_config",
    "build_problem",
    "build_schedule",
    "run_experiment",
    "write_csv",
    "read_csv",
    "plot_csvs",
    "main",
]

CSV_COLUMNS = [
    "round",
    "comm_total",
    "oracle_calls_per_node",
    "f_gap",
    "consensus_sq",
    "wallclock_ms",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# CSV


def write_csv(record: RunRecord, path: str | Path) -> None:
    """Write one metric row per outer iteration.

    Floats use repr (shortest round-trip form); an unknown f_gap becomes an
    empty field.
    """
    path = Path(path)
    lines = [",".join(CSV_COLUMNS)]
    for row in record.rows:
        gap = "" if row.f_gap is None else repr(float(row.f_gap))
        lines.append(
            f"{row.round},{row.comm_total},{row.oracle_calls_per_node},"
            f"{gap},{float(row.consensus_sq)!r},{float(row.wallclock_ms)!r}"
        )
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write CSV to {path}: {e}") from e


def read_csv(path: str | Path) -> list[MetricRow]:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != ",".join(CSV_COLUMNS):
        raise ConfigError(f"{path}: missing or wrong CSV header")
    rows = []
    for ln in lines[1:]:
        if not ln:
            continue
        parts = ln.split(",")
        if len(parts) != len(CSV_COLUMNS):
            raise ConfigError(f"{path}: malformed row {ln!r}")
        rows.append(
            MetricRow(
                round=int(parts[0]),
                comm_total=int(parts[1]),
                oracle_calls_per_node=int(parts[2]),
                f_gap=None if parts[3] == "" else float(parts[3]),
                consensus_sq=float(parts[4]),
                wallclock_ms=float(parts[5]),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# config loading and builders


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    for section in ("problem", "graph", "algorithm"):
        if section not in cfg:
            raise ConfigError(f"{path}: missing required section {section!r}")
    return cfg


def _resolve_data_path(raw: str) -> Path:
    p = Path(raw)
    if p.is_absolute() or p.exists():
        return p
    data_dir = os.environ.get("DSTORM_DATA_DIR")
    if data_dir:
        candidate = Path(data_dir) / p
        if candidate.exists():
            return candidate
    return p


def build_problem(cfg: dict):
    pc = cfg["problem"]
    ptype = pc.get("type")
    if ptype == "quadratic":
        return gen_quadratic(
            n=int(pc.get("n", 20)),
            d=int(pc.get("d", 10)),
            kappa_target=float(pc.get("kappa", 100.0)),
            seed=int(pc.get("seed", 0)),
            sigma=float(pc.get("sigma", 0.0)),
            spread=float(pc.get("spread", 1.0)),
        )
    if ptype == "logistic":
        if "data_path" in pc:
            dataset = parse_libsvm(_resolve_data_path(pc["data_path"]))
            limit = pc.get("limit_rows")
            if limit is not None and dataset.n_rows > int(limit):
                dataset = dataset.subset(np.arange(int(limit)))
        elif "synthetic" in pc:
            s = pc["synthetic"]
            dataset = synthetic_classification(
                n_rows=int(s.get("rows", 2000)),
                d=int(s.get("d", 30)),
                seed=int(s.get("seed", 0)),
                scale=float(s.get("scale", 1.0)),
                separation=float(s.get("separation", 1.0)),
            )
        else:
            raise ConfigError("logistic problem needs 'data_path' or 'synthetic'")
        return make_logistic_instance(
            dataset,
            n_nodes=int(pc.get("n", 20)),
            theta=float(pc.get("theta", 0.1)),
            partition_seed=int(pc.get("partition_seed", 0)),
        )
    raise ConfigError(f"unknown problem type {ptype!r}")


def build_schedule(cfg: dict) -> GraphSchedule:
    gc = cfg["graph"]
    gtype = gc.get("type")
    n = int(gc.get("n", 20))
    if gtype == "complete":
        return static_schedule(Graph.complete(n))
    if gtype == "path":
        return static_schedule(Graph.path(n))
    if gtype == "static-geometric":
        g = random_geometric_graph(n, float(gc.get("radius", 0.5)), int(gc.get("seed", 0)))
        return static_schedule(g)
    if gtype == "tau-connected":
        base = random_geometric_graph(n, float(gc.get("radius", 0.5)), int(gc.get("seed", 0)))
        return tau_connected_schedule(base, int(gc.get("tau", 1)), int(gc.get("seed", 0)))
    raise ConfigError(f"unknown graph type {gtype!r}")


def _certificate(cfg: dict, schedule: GraphSchedule):
    tau = schedule.tau
    horizon = cfg["graph"].get("horizon")
    return contraction_certificate(
        schedule, tau, None if horizon is None else int(horizon)
    )


def _resolve_R_est(cfg: dict, problem) -> float:
    ac = cfg["algorithm"]
    if ac.get("R_est") is not None:
        val = float(ac["R_est"])
        if val <= 0:
            raise ConfigError("R_est must be positive")
        return val
    x_star = getattr(problem, "x_star", None)
    if x_star is None:
        raise ConfigError("R_est is required when the optimum is unknown")
    x0 = np.zeros(problem.dim)
    return float(np.linalg.norm(x0 - x_star))


def _make_plan(cfg: dict, problem, schedule: GraphSchedule) -> RunPlan:
    ac = cfg["algorithm"]
    eps = ac.get("epsilon")
    if eps is None:
        raise ConfigError("algorithm.epsilon is required to plan a run")
    cert = _certificate(cfg, schedule)
    return plan_run(float(eps), problem.constants(), cert, _resolve_R_est(cfg, problem))


def _resolve_knobs(cfg: dict, problem, schedule: GraphSchedule) -> tuple[int, int, int]:
    """(T, r, N) from overrides, falling back to the planner."""
    ov = cfg["algorithm"].get("overrides", {}) or {}
    for key, val in ov.items():
        if key not in ("T", "r", "N"):
            raise ConfigError(f"unknown override {key!r}")
        if not isinstance(val, int) or val < 1:
            raise ConfigError(f"override {key} must be a positive integer, got {val!r}")
    if set(ov) >= {"T", "r", "N"}:
        return ov["T"], ov["r"], ov["N"]
    plan = _make_plan(cfg, problem, schedule)
    return ov.get("T", plan.T), ov.get("r", plan.r), ov.get("N", plan.N)


def run_experiment(cfg: dict, seed_override: int | None = None) -> RunRecord:
    """Execute one configured experiment and return its record."""
    problem = build_problem(cfg)
    schedule = build_schedule(cfg)
    if schedule.n != problem.constants().n:
        raise ConfigError(
            f"graph n={schedule.n} does not match problem n={problem.constants().n}"
        )
    ac = cfg["algorithm"]
    name = ac.get("name", "dsagd")
    seed = int(ac.get("seed", 0)) if seed_override is None else int(seed_override)
    if name == "dsagd":
        T, r, N = _resolve_knobs(cfg, problem, schedule)
        return run_dsagd(problem, schedule, seed, T=T, r=r, N=N)
    if name == "dsgd":
        ov = ac.get("overrides", {}) or {}
        if "r" not in ov or "N" not in ov:
            raise ConfigError("dsgd requires integer overrides r and N")
        return run_dsgd(problem, schedule, seed, r=int(ov["r"]), N=int(ov["N"]))
    raise ConfigError(f"unknown algorithm {name!r}")


# ---------------------------------------------------------------------------
# plotting


def plot_csvs(csv_paths: list[str | Path], out_path: str | Path) -> None:
    """Two-panel SVG: f_gap and consensus_sq against communication rounds."""
    if not csv_paths:
        raise ConfigError("plot needs at least one input CSV")
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "dstorm"
    import matplotlib.pyplot as plt

    series = [(Path(p).stem, read_csv(p)) for p in csv_paths]
    fig, (ax_gap, ax_cons) = plt.subplots(2, 1, figsize=(7, 8), sharex=True)
    for label, rows in series:
        comm = [r.comm_total for r in rows]
        gaps = [(c, r.f_gap) for c, r in zip(comm, rows) if r.f_gap is not None and r.f_gap > 0]
        if gaps:
            ax_gap.semilogy([c for c, _ in gaps], [g for _, g in gaps], label=label)
        cons = [(c, r.consensus_sq) for c, r in zip(comm, rows) if r.consensus_sq > 0]
        if cons:
            ax_cons.semilogy([c for c, _ in cons], [v for _, v in cons], label=label)
    ax_gap.set_ylabel("f(x_bar) - f*")
    if ax_gap.get_legend_handles_labels()[0]:
        ax_gap.legend()
    ax_gap.grid(True, alpha=0.3)
    ax_cons.set_ylabel("||X - X_bar||^2")
    ax_cons.set_xlabel("communication rounds")
    if ax_cons.get_legend_handles_labels()[0]:
        ax_cons.legend()
    ax_cons.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


# ---------------------------------------------------------------------------
# sweep


def _sweep_entries(cfg: dict) -> list[tuple[str, dict]]:
    """Expand list-valued overrides (and seed) into a cartesian grid."""
    ac = cfg["algorithm"]
    ov = ac.get("overrides", {}) or {}
    axes: list[tuple[str, list]] = []
    for key in ("T", "r", "N"):
        if isinstance(ov.get(key), list):
            axes.append((key, list(ov[key])))
    if isinstance(ac.get("seed"), list):
        axes.append(("seed", list(ac["seed"])))
    if not axes:
        axes = [("seed", [ac.get("seed", 0)])]
    entries = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        sub = json.loads(json.dumps(cfg))  # deep copy
        sub_ov = sub["algorithm"].setdefault("overrides", {})
        tags = []
        for (key, _), val in zip(axes, combo):
            if key == "seed":
                sub["algorithm"]["seed"] = val
            else:
                sub_ov[key] = val
            tags.append(f"{key}{val}")
        entries.append(("_".join(tags), sub))
    return entries


def _run_sweep_entry(args: tuple[str, dict, str]) -> str:
    tag, sub_cfg, out_dir = args
    record = run_experiment(sub_cfg)
    out = Path(out_dir) / f"sweep_{tag}.csv"
    write_csv(record, out)
    return str(out)


# ---------------------------------------------------------------------------
# CLI


def _add_config_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to the JSON experiment config")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dstorm",
        description="Decentralized stochastic optimization simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="print the planned parameter schedule")
    _add_config_arg(p_plan)

    p_run = sub.add_parser("run", help="run one experiment and write its CSV")
    _add_config_arg(p_run)
    p_run.add_argument("--out", help="output CSV path (overrides config)")
    p_run.add_argument("--seed", type=int, help="seed override")

    p_sweep = sub.add_parser("sweep", help="run a grid over list-valued overrides")
    _add_config_arg(p_sweep)
    p_sweep.add_argument("--out", help="output directory (default: cwd)")
    p_sweep.add_argument("--jobs", type=int, default=1, help="parallel jobs")

    p_val = sub.add_parser("validate-graph", help="print the contraction certificate")
    _add_config_arg(p_val)

    p_plot = sub.add_parser("plot", help="render metric curves from CSVs")
    p_plot.add_argument("inputs", nargs="*", help="input CSV files")
    p_plot.add_argument("--out", required=True, help="output SVG path")
    return parser


def _cmd_plan(args) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    schedule = build_schedule(cfg)
    plan = _make_plan(cfg, problem, schedule)
    for key in ("epsilon", "delta_prime", "delta", "r", "T", "N", "D", "R_est"):
        print(f"{key}={getattr(plan, key)}")
    print(f"N_orcl={plan.N_orcl}")
    print(f"N_comm={plan.N_comm}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    record = run_experiment(cfg, seed_override=args.seed)
    out = args.out or (cfg.get("output", {}) or {}).get("csv_path")
    if out is None:
        raise ConfigError("no output path: pass --out or set output.csv_path")
    write_csv(record, out)
    last = record.rows[-1]
    gap = "n/a" if last.f_gap is None else f"{last.f_gap:.6e}"
    print(
        f"wrote {out}: {len(record.rows) - 1} iterations, comm={last.comm_total}, "
        f"final f_gap={gap}, consensus_sq={last.consensus_sq:.6e}"
    )
    plot_path = (cfg.get("output", {}) or {}).get("plot_path")
    if plot_path:
        plot_csvs([out], plot_path)
        print(f"wrote {plot_path}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out_dir = Path(args.out) if args.out else Path.cwd()
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = _sweep_entries(cfg)
    jobs = [(tag, sub, str(out_dir)) for tag, sub in entries]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outputs = list(pool.map(_run_sweep_entry, jobs))
    else:
        outputs = [_run_sweep_entry(job) for job in jobs]
    for out in outputs:
        print(out)
    return 0


def _cmd_validate_graph(args) -> int:
    cfg = load_config(args.config)
    schedule = build_schedule(cfg)
    cert = _certificate(cfg, schedule)
    print(f"kind={schedule.kind}")
    print(f"tau={cert.tau}")
    print(f"lambda={cert.lam}")
    print(f"rho={'' if cert.rho is None else cert.rho}")
    print(f"chi={'' if cert.chi is None else cert.chi}")
    print(f"horizon={cert.horizon}")
    return 0


def _cmd_plot(args) -> int:
    plot_csvs(args.inputs, args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "plan": _cmd_plan,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "validate-graph": _cmd_validate_graph,
        "plot": _cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, ProblemError, TopologyError, PlanError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
