"""Command-line interface: ``depthad <command> [flags]``.

Commands: depth, fit, score, explain, simulate, bench.  Exit codes: 0 ok,
1 other error, 2 unreadable input, 3 dimension mismatch, 4 bad model file,
5 notion without directions, 6 bad scenario.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, depths, detect, explain, tables
from .core import (
    BadScenario,
    DepthError,
    DepthNotion,
    DimensionMismatch,
    FormatError,
)
from .optimize import SearchBudget, Strategy, approx_depths, optimal_direction

log = logging.getLogger("depthad")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_DIMENSION = 3
EXIT_MODEL = 4
EXIT_NO_DIRECTIONS = 5
EXIT_SCENARIO = 6


class NoDirections(DepthError):
    pass


# --------------------------------------------------------------------------
# Argument parsing


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def _add_budget(p, many: bool = False):
    p.add_argument("--notion", default="projection", choices=[n.value for n in DepthNotion])
    if many:
        p.add_argument("--strategy", type=_csv_list(str), default=["NelderMead"],
                       help="comma-separated list of RS, RRS, NelderMead")
        p.add_argument("--directions", type=_csv_list(int), default=[100],
                       help="comma-separated list of direction budgets")
    else:
        p.add_argument("--strategy", default="NelderMead", help="RS, RRS or NelderMead")
        p.add_argument("--directions", type=int, default=500)
    p.add_argument("--restarts", type=int, default=None)


def _add_common(p):
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)


def _add_scenario(p):
    p.add_argument("--scenario", required=True)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="other scenario parameter, e.g. split=test")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="depthad", description="Data depth and depth-based anomaly detection.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("depth", help="depth of query points with respect to reference data")
    p.add_argument("--input", required=True, help="CSV of query points")
    p.add_argument("--reference", required=True, help="CSV of reference data")
    p.add_argument("--output", default=None, help="report file (default: stdout)")
    _add_budget(p)
    _add_common(p)

    p = sub.add_parser("fit", help="train a detector and save the model")
    p.add_argument("--input", required=True, help="CSV of training data")
    p.add_argument("--output", required=True, help="model file to write")
    _add_budget(p)
    p.add_argument("--threshold-policy", default="quantile", choices=[k.value for k in detect.PolicyKind])
    p.add_argument("--alpha", type=float, default=detect.DEFAULT_ALPHA)
    p.add_argument("--threshold", type=float, default=None, help="value for the fixed policy")
    p.add_argument("--fraction", type=float, default=1.0, help="share of rows kept as reference")
    _add_common(p)

    p = sub.add_parser("score", help="score points with a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None, help="report file (default: stdout)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("explain", help="optimal directions, projection sequences, similarity matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="directory for the explanation tables")
    p.add_argument("--group-threshold", type=float, default=explain.GROUP_THRESHOLD)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("simulate", help="draw a labelled sample from a scenario")
    _add_scenario(p)
    p.add_argument("--output", default=None, help="CSV file (default: stdout)")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("bench", help="repeat a scenario and summarise the p-metric")
    _add_scenario(p)
    _add_budget(p, many=True)
    p.add_argument("--fraction", type=_csv_list(float), default=[1.0])
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--output", required=True, help="directory for the summary tables")
    _add_common(p)
    return parser


# --------------------------------------------------------------------------
# Helpers


def _seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    seed = int(np.random.SeedSequence().entropy % (2 ** 32))
    log.warning("no --seed given; using seed=%d", seed)
    return seed


def _budget(args, seed, strategy=None, directions=None) -> SearchBudget:
    return SearchBudget(
        n_directions=int(directions if directions is not None else args.directions),
        strategy=Strategy.parse(strategy if strategy is not None else args.strategy),
        seed=seed,
        restarts=args.restarts,
    )


def _emit(path, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _read_points(path, d: int | None = None) -> np.ndarray:
    t = tables.read_csv(path)
    X = t.data
    if X.size == 0:
        return np.empty((0, d if d is not None else 0))
    if d is not None and X.shape[1] != d:
        raise DimensionMismatch(f"{path} has {X.shape[1]} columns, expected {d}")
    return X


def _dir_header(d: int) -> list[str]:
    return [f"u{j + 1}" for j in range(d)]


def _load(path) -> detect.DepthModel:
    try:
        payload = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read model {path}: {exc}") from None
    return detect.load_model(payload)


def _scenario(args, seed: int) -> bench.Scenario:
    extra = {}
    for item in args.param:
        if "=" not in item:
            raise BadScenario(f"--param expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        try:
            extra[key] = float(value)
        except ValueError:
            extra[key] = value
    return bench.Scenario.default(args.scenario, seed=seed, d=args.d, n=args.n, epsilon=args.epsilon,
                                  rho=args.rho, **extra)


# --------------------------------------------------------------------------
# Commands


def cmd_depth(args) -> int:
    seed = _seed(args)
    X = tables.read_csv(args.reference).data
    if X.size == 0:
        raise tables.ParseError(f"{args.reference}: no reference data")
    d = X.shape[1]
    Q = _read_points(args.input, d)
    notion = DepthNotion.parse(args.notion)
    rows = []
    if notion.has_directions or (notion.has_projection_property and not depths.has_exact(notion, d)):
        budget = _budget(args, seed)
        results = approx_depths(Q, X, notion, budget, workers=args.workers)
        for i, r in enumerate(results):
            u = optimal_direction(r)
            rows.append([i, r.value.value, r.value.exactness.value, *u])
    else:
        for i in range(Q.shape[0]):
            v = depths.exact_depth(Q[i], X, notion)
            rows.append([i, v.value, v.exactness.value, *([None] * d)])
    _emit(args.output, tables.tsv_text(["index", "depth", "exactness", *_dir_header(d)], rows))
    return EXIT_OK


def cmd_fit(args) -> int:
    seed = _seed(args)
    t = tables.read_csv(args.input)
    kind = detect.PolicyKind(args.threshold_policy)
    if kind is detect.PolicyKind.FIXED:
        if args.threshold is None:
            raise tables.ParseError("--threshold is required with the fixed policy")
        policy = detect.ThresholdPolicy.fixed(args.threshold)
    elif kind is detect.PolicyKind.DETECT_ALL:
        policy = detect.ThresholdPolicy.detect_all()
    else:
        policy = detect.ThresholdPolicy.quantile(args.alpha)
    model = detect.fit(t.data, args.notion, _budget(args, seed), policy, subsample_fraction=args.fraction,
                       seed=seed, labels=t.labels, workers=args.workers)
    Path(args.output).write_bytes(detect.save_model(model))
    return EXIT_OK


def cmd_score(args) -> int:
    model = _load(args.model)
    Q = _read_points(args.input, model.d)
    reports = detect.score_many(model, Q, workers=args.workers)
    rows = []
    for i, r in enumerate(reports):
        u = r.direction if r.direction is not None else [None] * model.d
        rows.append([i, r.depth.value, r.is_anomaly, *u])
    flagged = sum(r.is_anomaly for r in reports)
    footer = [f"# points={len(reports)} anomalies={flagged} threshold={tables.fmt(model.threshold)}"]
    _emit(args.output, tables.tsv_text(["index", "depth", "is_anomaly", *_dir_header(model.d)], rows, footer))
    return EXIT_OK


def cmd_explain(args) -> int:
    model = _load(args.model)
    if not model.notion.has_directions:
        raise NoDirections(f"{model.notion.value} depth has no optimal directions")
    X = _read_points(args.input, model.d)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    sim = explain.direction_similarity(model, X, workers=args.workers)
    n = X.shape[0]
    rank_of = np.empty(n, dtype=np.int64)
    rank_of[sim.order] = np.arange(n)
    flagged = sim.depths < model.threshold
    rows = []
    for i in range(n):
        rows.append([i, int(rank_of[i]) + 1, sim.depths[i], flagged[i], sim.depths[i] >= 1.0,
                     *sim.directions[i]])
    tables.write_tsv(out / "directions.tsv",
                     ["index", "depth_rank", "depth", "is_anomaly", "ambiguous", *_dir_header(model.d)], rows)
    seq_rows = []
    for rank, i in enumerate(sim.order, start=1):
        seq = explain.projection_sequence(X, sim.directions[i], int(i))
        for pos, value in enumerate(seq.projections, start=1):
            seq_rows.append([rank, pos, value, pos == seq.own_position])
    tables.write_tsv(out / "sequences.tsv", ["point_rank", "projection_rank", "value", "is_own"], seq_rows)
    header = ["index"] + [str(int(i)) for i in sim.order]
    mat_rows = [[int(sim.order[a]), *sim.matrix[a]] for a in range(n)]
    tables.write_tsv(out / "similarity.tsv", header, mat_rows)
    groups = explain.anomaly_groups(sim, flagged, args.group_threshold)
    group_rows = [[g, i] for g, members in enumerate(groups, start=1) for i in members]
    tables.write_tsv(out / "groups.tsv", ["group", "index"], group_rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = _seed(args)
    sample = bench.generate(_scenario(args, seed))
    _emit(args.output, tables.csv_text(sample.data, labels=sample.labels))
    return EXIT_OK


def cmd_bench(args) -> int:
    seed = _seed(args)
    if args.reps < 1:
        raise BadScenario("--reps must be at least 1")
    scenario = _scenario(args, seed)
    notion = DepthNotion.parse(args.notion)
    methods = []
    for strategy in args.strategy:
        for k in args.directions:
            for f in args.fraction:
                budget = SearchBudget(k, Strategy.parse(strategy), seed=0, restarts=args.restarts)
                methods.append(bench.MethodConfig(notion, budget, f))
            if not notion.has_projection_property:
                break
        if not notion.has_projection_property:
            break
    for m in methods:
        if m.subsample_fraction != 1.0 and detect.subsample_size(scenario.n, m.subsample_fraction) < scenario.d + 1:
            raise BadScenario(f"fraction {m.subsample_fraction} leaves fewer than d+1 reference points")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    rep_rows, summary_rows, depth_rows, timing_rows = [], [], [], []
    for m in methods:
        summ = bench.run_repetitions(scenario, m, args.reps, base_seed=seed, workers=args.workers)
        for r in summ.reps:
            rep_rows.append([scenario.tag.value, m.label, r.rep, r.scenario_seed, r.method_seed, r.p])
            timing_rows.append([m.label, r.rep, r.millis])
            order = explain.depth_order(r.depths)
            for rank, i in enumerate(order, start=1):
                depth_rows.append([m.label, r.rep, rank, r.depths[i], r.labels[i]])
        summary_rows.append([scenario.tag.value, m.label, args.reps, *summ.quartiles])
    tables.write_tsv(out / "reps.tsv", ["scenario", "method", "rep", "scenario_seed", "method_seed", "p"], rep_rows)
    tables.write_tsv(out / "summary.tsv", ["scenario", "method", "reps", "min", "q1", "median", "q3", "max"],
                     summary_rows)
    tables.write_tsv(out / "ordered_depths.tsv", ["method", "rep", "rank", "depth", "label"], depth_rows)
    tables.write_tsv(out / "timings.tsv", ["method", "rep", "millis"], timing_rows)
    return EXIT_OK


COMMANDS = {
    "depth": cmd_depth,
    "fit": cmd_fit,
    "score": cmd_score,
    "explain": cmd_explain,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="depthad: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except tables.ParseError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except DimensionMismatch as exc:
        log.error("dimension mismatch: %s", exc)
        return EXIT_DIMENSION
    except FormatError as exc:
        log.error("bad model: %s", exc)
        return EXIT_MODEL
    except NoDirections as exc:
        log.error("%s", exc)
        return EXIT_NO_DIRECTIONS
    except BadScenario as exc:
        log.error("bad scenario: %s", exc)
        return EXIT_SCENARIO
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except (DepthError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
