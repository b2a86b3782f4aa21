"""Command-line entry point: ``laddr <subcommand> [flags]``.

Exit codes
----------
0  success
1  unexpected internal error
2  usage error (unknown flag, bad flag value)
3  missing or unreadable file
4  schema mismatch (columns, dimensions, modes)
5  invalid input data (empty, non-finite, out of range)
6  optimisation objective undefined for every candidate

Failures print one JSON line ``{"error": {...}}`` on standard error.
"""
from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .casestudy import STUDY_SCHEMA, build_datasets, reference_predictor
from .core import (
    DimensionError,
    DiameterVector,
    LaddrError,
    Mode,
    ReliabilityConfig,
    Schema,
    SchemaError,
    _kb_paths,
    atomic_write_text,
    build_knowledge_base,
    load_knowledge_base,
    read_raw_csv,
    save_knowledge_base,
)
from .index import build_index
from .metrics import AcceptanceCriterion, ConfusionCounts, metrics_report
from .optimizer import EvaluationSet, SearchSpec, UndefinedObjectiveError, optimize, write_trace_csv
from .reliability import build_query, generate_map, reliability, write_map_csv, write_map_image
from .supervisor import Supervisor, decision_log_csv, read_samples

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_FILE, EXIT_SCHEMA, EXIT_DATA, EXIT_UNDEFINED = range(7)

EPILOG = """exit codes: 0 ok, 1 internal error, 2 usage error, 3 missing file,
4 schema mismatch, 5 invalid data, 6 objective undefined for all candidates"""

DEFAULTS = {
    "gamma": None,
    "decay_threshold": 0.2,
    "threshold": 0.5,
    "epsilon": 10.0,
    "mode": None,
    "seed": 0,
    "d1_episodes": 64,
    "d2_episodes": 16,
    "steps": 200,
    "d1_range": "0.516,1.0",
    "d2_range": "0.0,0.387",
    "train_fraction": 0.1,
    "vary_ramp": None,
    "axes": "0,1",
    "fixed": None,
    "resolution": 201,
    "range": "-0.1,1.1",
    "grid": "0.01:1.0:5",
    "objective": "ineptitude",
    "freeze": None,
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error(EXIT_USAGE, "usage", message)
        self.print_usage(sys.stderr)
        sys.exit(EXIT_USAGE)


def _emit_error(code: int, kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"code": code, "kind": kind, "message": message}}) + "\n")


def _floats(text, name: str) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise CliError(EXIT_USAGE, f"--{name.replace('_', '-')}: expected comma-separated numbers, got {text!r}")


def _resolve(args, keys) -> dict:
    """Flags override config-file values, which override defaults."""
    cfg = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise CliError(EXIT_FILE, f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise CliError(EXIT_DATA, f"config file {path}: {err}")
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        if v is None:
            v = cfg.get(k, DEFAULTS.get(k))
        out[k] = v
    return out


def _provenance(command: str, resolved: dict) -> dict:
    return {"tool": "laddr", "version": __version__, "command": command, "config": resolved}


def _comment(command: str, resolved: dict) -> str:
    return json.dumps(_provenance(command, resolved), sort_keys=True)


def _kb(path):
    header, points = _kb_paths(path)
    for f in (header, points):
        if not f.is_file():
            raise CliError(EXIT_FILE, f"knowledge base file not found: {f}")
    return load_knowledge_base(path)


def _mode(kb, mode) -> Mode:
    if mode is None:
        return Mode.INPUT_PLUS_TARGET if kb.schema.target_index is not None else Mode.INPUT_ONLY
    return Mode(mode)


def _config(kb, r) -> ReliabilityConfig:
    mode = _mode(kb, r["mode"])
    dim = len(kb.schema.mode_indices(mode))
    if r["gamma"] is None:
        raise CliError(EXIT_USAGE, "--gamma is required")
    g = _floats(r["gamma"], "gamma")
    if len(g) == 1:
        g = g * dim
    if len(g) != dim:
        raise DimensionError(f"--gamma has {len(g)} values, mode {mode.value} needs {dim}")
    r["mode"] = mode.value
    return ReliabilityConfig(DiameterVector(g), float(r["decay_threshold"]), float(r["threshold"]), mode)


def _out(path, text: str, default_stream=None):
    if path:
        atomic_write_text(path, text)
    elif default_stream is not None:
        default_stream.write(text)


def _read_file(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise CliError(EXIT_FILE, f"file not found: {p}")
    return p.read_text()


# --- subcommands -------------------------------------------------------------

def cmd_simulate(args) -> int:
    keys = ["seed", "d1_episodes", "d2_episodes", "steps", "d1_range", "d2_range", "train_fraction", "vary_ramp"]
    r = _resolve(args, keys)
    r["outdir"] = args.outdir
    ramp = tuple(_floats(r["vary_ramp"], "vary_ramp")) if r["vary_ramp"] else None
    data = build_datasets(int(r["seed"]), int(r["d1_episodes"]), int(r["d2_episodes"]), int(r["steps"]),
                          tuple(_floats(r["d1_range"], "d1_range")), tuple(_floats(r["d2_range"], "d2_range")),
                          float(r["train_fraction"]), ramp)
    out = Path(args.outdir)
    comment = _comment("simulate", r)
    for name, table in (("train", data.train), ("d1_test", data.d1_test), ("d2_test", data.d2_test)):
        table.to_csv(out / f"{name}.csv", comment=comment)
    manifest = {"provenance": _provenance("simulate", r), **data.settings(),
                "files": {"train": "train.csv", "d1_test": "d1_test.csv", "d2_test": "d2_test.csv"},
                "schema": STUDY_SCHEMA.to_json()}
    atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    print(json.dumps({"outdir": str(out), "train_rows": len(data.train), "d1_test_rows": len(data.d1_test),
                      "d2_test_rows": len(data.d2_test), "train_episodes": list(data.train_episodes)}))
    return EXIT_OK


def cmd_kb_build(args) -> int:
    text = _read_file(args.input)
    inputs = [s.strip() for s in args.inputs.split(",") if s.strip()]
    schema = Schema.from_names(inputs, args.target)
    names, raw = read_raw_csv(io.StringIO(text), schema.names)
    src = args.source if args.source is not None else str(args.input)
    created = args.created
    if created is None:
        import datetime as dt
        created = dt.datetime.fromtimestamp(int(Path(args.input).stat().st_mtime), dt.timezone.utc).isoformat()
    kb = build_knowledge_base(raw, schema, source=src, created=created)
    r = {"input": str(args.input), "inputs": inputs, "target": args.target, "output": str(args.output)}
    hp, cp = save_knowledge_base(kb, args.output, extra={"provenance": _provenance("kb build", r)})
    print(json.dumps({"header": str(hp), "points": str(cp), "count": kb.count, "dim": kb.dim}))
    return EXIT_OK


def cmd_score(args) -> int:
    r = _resolve(args, ["gamma", "decay_threshold", "mode"])
    r["threshold"] = DEFAULTS["threshold"]
    kb = _kb(args.kb)
    cfg = _config(kb, r)
    index = build_index(kb, cfg.covariance, cfg.mode)
    dim = index.dim
    results = []
    for text in args.point:
        vals = _floats(text, "point")
        if args.raw:
            n_in = len(kb.schema.input_indices)
            if len(vals) not in (n_in, n_in + 1):
                raise DimensionError(f"--point has {len(vals)} values; expected {n_in} inputs (+ prediction)")
            q = build_query(kb, vals[:n_in], vals[n_in] if len(vals) > n_in else None, cfg)
        else:
            if len(vals) != dim:
                raise DimensionError(f"--point has {len(vals)} values, mode {cfg.mode.value} needs {dim}")
            q = np.asarray(vals)
        s = reliability(q, index)
        results.append({"point": vals, "reliability": s.value, "nearest_id": s.nearest_point_id,
                        "distance": s.nearest_distance})
    if args.json:
        print(json.dumps({"provenance": _provenance("score", r), "results": results}, indent=2))
    else:
        for res in results:
            print(f"{res['reliability']:.6g}")
    return EXIT_OK


def cmd_map(args) -> int:
    r = _resolve(args, ["gamma", "decay_threshold", "mode", "axes", "fixed", "resolution", "range"])
    kb = _kb(args.kb)
    r["threshold"] = DEFAULTS["threshold"]
    cfg = _config(kb, r)
    axes = [int(a) for a in _floats(r["axes"], "axes")]
    if len(axes) != 2:
        raise CliError(EXIT_USAGE, "--axes needs exactly two coordinates")
    fixed = None
    if r["fixed"] is not None:
        fv = _floats(r["fixed"], "fixed")
        others = [k for k in range(len(kb.schema.mode_indices(cfg.mode))) if k not in axes]
        if len(fv) == len(others):
            fixed = dict(zip(others, fv))
        else:
            fixed = fv
    rng = _floats(r["range"], "range")
    rng = rng if len(rng) == 2 else [rng[:2], rng[2:4]]
    rmap = generate_map(kb, cfg, axes, fixed, int(r["resolution"]), rng)
    text = write_map_csv(rmap, header_comment=_comment("map", r))
    _out(args.output, text, sys.stdout)
    if args.image:
        write_map_image(rmap, args.image)
    return EXIT_OK


def _counts_from_log(text: str) -> tuple[ConfusionCounts, dict]:
    import csv
    rows = csv.DictReader(ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#"))
    c = ConfusionCounts()
    for row in rows:
        if row.get("error") or row.get("correct", "") == "":
            continue
        acc, ok = row["accept"] == "1", row["correct"] == "1"
        c = c + ConfusionCounts(int(acc and ok), int(acc and not ok), int(ok and not acc), int(not acc and not ok))
    return c, {}


def cmd_metrics(args) -> int:
    r = {"counts": args.counts, "decisions": args.decisions}
    if (args.counts is None) == (args.decisions is None):
        raise CliError(EXIT_USAGE, "give exactly one of --counts or --decisions")
    if args.counts is not None:
        vals = _floats(args.counts, "counts")
        if len(vals) != 4:
            raise CliError(EXIT_USAGE, "--counts needs four values: A_o,R_x,A_x,R_o")
        c = ConfusionCounts.from_table_row(*vals)
    else:
        c, _ = _counts_from_log(_read_file(args.decisions))
    report = metrics_report(c, args.threshold, args.epsilon)
    report["provenance"] = _provenance("metrics", r)
    if args.output:
        atomic_write_text(args.output, json.dumps(report, indent=2) + "\n")
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        for name in ("peril", "degradation", "ineptitude"):
            v = report[name]
            print(f"{name} {'undefined' if v is None else f'{100 * v:.1f}%'}")
    return EXIT_OK


def _evaluation_set(kb, text: str, train_path, *, prediction_column="prediction", truth_column=None):
    schema = kb.schema
    truth_column = truth_column or schema.target_name or "truth"
    header_line = next(ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#"))
    header = [h.strip() for h in header_line.split(",")]
    names, x = read_raw_csv(io.StringIO(text), schema.input_names)
    _, truth = read_raw_csv(io.StringIO(text), [truth_column])
    if prediction_column in header:
        _, pred = read_raw_csv(io.StringIO(text), [prediction_column])
        return EvaluationSet(x, pred[:, 0], truth[:, 0])
    if train_path is None:
        raise SchemaError(f"evaluation file has no {prediction_column!r} column; pass --train to fit the "
                          "reference predictor")
    return EvaluationSet.from_predictor(x, truth[:, 0], _reference(kb, train_path))


def _reference(kb, train_path):
    text = _read_file(train_path)
    if kb.schema.target_name is None:
        raise SchemaError("the reference predictor needs a knowledge base with a target feature")
    _, x = read_raw_csv(io.StringIO(text), kb.schema.input_names)
    _, y = read_raw_csv(io.StringIO(text), [kb.schema.target_name])
    return reference_predictor((x, y[:, 0]))


def _grid_axes(text, dim: int):
    parts = [p.strip() for p in str(text).split(";") if p.strip()]
    if len(parts) == 1:
        parts = parts * dim
    if len(parts) != dim:
        raise DimensionError(f"--grid has {len(parts)} axes, search needs {dim}")
    axes = []
    for p in parts:
        if ":" in p:
            lo, hi, steps = p.split(":")
            axes.append((float(lo), float(hi), int(steps)))
        else:
            axes.append(_floats(p, "grid"))
    return tuple(axes)


def cmd_optimize(args) -> int:
    r = _resolve(args, ["decay_threshold", "threshold", "epsilon", "mode", "grid", "objective", "freeze"])
    r.update({"kb": str(args.kb), "eval": str(args.eval), "train": args.train})
    kb = _kb(args.kb)
    mode = _mode(kb, r["mode"])
    r["mode"] = mode.value
    dim = len(kb.schema.mode_indices(mode))
    eval_set = _evaluation_set(kb, _read_file(args.eval), args.train)
    frozen = {}
    if r["freeze"]:
        for item in str(r["freeze"]).split(","):
            k, v = item.split("=")
            frozen[int(k)] = float(v)
    search = SearchSpec(_grid_axes(r["grid"], dim), r["objective"], frozen)
    cfg = ReliabilityConfig(DiameterVector(np.ones(dim)), float(r["decay_threshold"]), float(r["threshold"]), mode)
    result = optimize(kb, search, eval_set, cfg, AcceptanceCriterion(float(r["epsilon"])))
    names = [kb.schema.names[i] for i in kb.schema.mode_indices(mode)]
    best = {"provenance": _provenance("optimize", r), "objective": result.objective,
            "feature_names": names, **result.best.to_json(), "candidates": len(result.trace)}
    text = json.dumps(best, indent=2) + "\n"
    _out(args.output, text, sys.stdout)
    if args.trace:
        write_trace_csv(result, names, args.trace, comment=_comment("optimize", r))
    return EXIT_OK


def cmd_supervise(args) -> int:
    r = _resolve(args, ["gamma", "decay_threshold", "threshold", "epsilon", "mode"])
    r.update({"kb": str(args.kb), "input": args.input, "train": args.train})
    kb = _kb(args.kb)
    cfg = _config(kb, r)
    predictor = _reference(kb, args.train) if args.train else None
    text = _read_file(args.input) if args.input and args.input != "-" else sys.stdin.read()
    truth_col = args.truth_column or kb.schema.target_name or "truth"
    header = next((ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), "")
    if predictor is None and "prediction" not in [h.strip() for h in header.split(",")]:
        raise SchemaError("stream has no 'prediction' column; pass --train to use the reference predictor")
    sup = Supervisor(kb, cfg, AcceptanceCriterion(float(r["epsilon"])), predictor)
    samples = read_samples(text.splitlines(), kb.schema.input_names, truth_column=truth_col)
    decisions = list(sup.run(samples))
    _out(args.output, decision_log_csv(decisions, comment=_comment("supervise", r)), sys.stdout)
    summary = sup.summary()
    summary["provenance"] = _provenance("supervise", r)
    s_text = json.dumps(summary, indent=2) + "\n"
    if args.summary:
        atomic_write_text(args.summary, s_text)
    else:
        sys.stderr.write(s_text)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _add_reliability_flags(p, threshold=True):
    p.add_argument("--gamma", help="extrapolation diameter(s), normalized; one value or one per query coordinate")
    p.add_argument("--decay-threshold", type=float, help="reliability level defining the diameter (default 0.2)")
    if threshold:
        p.add_argument("--threshold", type=float, help="accept threshold on reliability (default 0.5)")
    p.add_argument("--mode", choices=[m.value for m in Mode],
                   help="query coordinates (default: input_plus_target when the KB has a target)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="laddr", description="Training-data reliability scoring for ML predictions.",
                     epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"laddr {__version__}")
    parser.add_argument("--config", help="JSON file of flag values; explicit flags override it")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="generate the synthetic loss-of-flow datasets", epilog=EPILOG)
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--d1-episodes", type=int, help="number of D1 transients (default 64)")
    p.add_argument("--d2-episodes", type=int, help="number of D2 transients (default 16)")
    p.add_argument("--steps", type=int, help="samples per transient (default 200)")
    p.add_argument("--d1-range", help="D1 end-speed range lo,hi as fraction of nominal (default 0.516,1.0)")
    p.add_argument("--d2-range", help="D2 end-speed range lo,hi (default 0.0,0.387)")
    p.add_argument("--train-fraction", type=float, help="share of D1 episodes in the training split (default 0.1)")
    p.add_argument("--vary-ramp", help="draw ramp durations uniformly from lo,hi seconds (default: fixed 467.81)")
    p.add_argument("--outdir", required=True, help="directory for train.csv, d1_test.csv, d2_test.csv")
    p.set_defaults(func=cmd_simulate)

    kb = sub.add_parser("kb", help="knowledge-base operations")
    kbsub = kb.add_subparsers(dest="kb_command", parser_class=_Parser, required=True)
    p = kbsub.add_parser("build", help="normalize a raw CSV into a knowledge base", epilog=EPILOG)
    p.add_argument("--input", required=True, help="raw CSV with a header row")
    p.add_argument("--inputs", required=True, help="comma-separated input column names")
    p.add_argument("--target", help="target column name (optional)")
    p.add_argument("--output", required=True, help="output stem; writes <stem>.kb.json and <stem>.kb.csv")
    p.add_argument("--source", help="source label stored in the header (default: input path)")
    p.add_argument("--created", help="creation timestamp stored in the header (default: input file mtime)")
    p.set_defaults(func=cmd_kb_build)

    p = sub.add_parser("score", help="reliability of one or more points", epilog=EPILOG)
    p.add_argument("--kb", required=True, help="knowledge base (.kb.json or stem)")
    _add_reliability_flags(p, threshold=False)
    p.add_argument("--point", action="append", required=True,
                   help="comma-separated query coordinates (normalized unless --raw); repeatable")
    p.add_argument("--raw", action="store_true", help="points are raw inputs (+ prediction) in engineering units")
    p.add_argument("--json", action="store_true", help="print a JSON report instead of bare scores")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("map", help="reliability map over two query coordinates", epilog=EPILOG)
    p.add_argument("--kb", required=True, help="knowledge base (.kb.json or stem)")
    _add_reliability_flags(p, threshold=False)
    p.add_argument("--axes", help="two query-coordinate indices (default 0,1)")
    p.add_argument("--fixed", help="values for the non-grid coordinates (default 0.5 each)")
    p.add_argument("--resolution", type=int, help="grid points per axis (default 201)")
    p.add_argument("--range", help="normalized grid range lo,hi or lo1,hi1,lo2,hi2 (default -0.1,1.1)")
    p.add_argument("--output", help="CSV output path (default stdout)")
    p.add_argument("--image", help="also write a PPM heatmap here")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("metrics", help="peril, degradation and ineptitude from counts", epilog=EPILOG)
    p.add_argument("--counts", help="A_o,R_x,A_x,R_o (correct accept, correct reject, incorrect accept, "
                                    "incorrect reject)")
    p.add_argument("--decisions", help="decision log CSV from 'supervise'")
    p.add_argument("--threshold", type=float, help="accept threshold recorded in the report")
    p.add_argument("--epsilon", type=float, help="correctness tolerance recorded in the report")
    p.add_argument("--output", help="write the JSON report here")
    p.add_argument("--json", action="store_true", help="print the JSON report")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("optimize", help="grid search over extrapolation diameters", epilog=EPILOG)
    p.add_argument("--kb", required=True, help="knowledge base (.kb.json or stem)")
    p.add_argument("--eval", required=True,
                   help="evaluation CSV: input columns, truth (target name or 'truth'), optional 'prediction'")
    p.add_argument("--train", help="raw training CSV for the reference predictor when --eval lacks predictions")
    p.add_argument("--grid", help="per-axis 'lo:hi:steps' or 'v1,v2,..', ';'-separated, or one for all "
                                  "(default 0.01:1.0:5)")
    p.add_argument("--objective", choices=["peril", "degradation", "ineptitude"], help="metric to minimise")
    p.add_argument("--freeze", help="fixed diameters as idx=value[,idx=value]")
    p.add_argument("--decay-threshold", type=float, help="reliability level defining the diameter (default 0.2)")
    p.add_argument("--threshold", type=float, help="accept threshold (default 0.5)")
    p.add_argument("--epsilon", type=float, help="correctness tolerance in raw target units (default 10)")
    p.add_argument("--mode", choices=[m.value for m in Mode], help="query coordinates")
    p.add_argument("--output", help="best-candidate JSON (default stdout)")
    p.add_argument("--trace", help="full trace CSV, one row per candidate")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("supervise", help="accept/reject a stream of samples", epilog=EPILOG)
    p.add_argument("--kb", required=True, help="knowledge base (.kb.json or stem)")
    _add_reliability_flags(p)
    p.add_argument("--epsilon", type=float, help="correctness tolerance in raw target units (default 10)")
    p.add_argument("--input", help="input CSV (default stdin)")
    p.add_argument("--output", help="decision log CSV (default stdout)")
    p.add_argument("--summary", help="end-of-stream JSON summary (default stderr)")
    p.add_argument("--train", help="raw training CSV for the reference predictor (else a 'prediction' column)")
    p.add_argument("--truth-column", help="truth column name (default: KB target name, then 'truth')")
    p.set_defaults(func=cmd_supervise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(None if argv is None else [str(a) for a in argv])
    try:
        return args.func(args)
    except CliError as err:
        _emit_error(err.code, "usage" if err.code == EXIT_USAGE else "file" if err.code == EXIT_FILE else "data",
                    str(err))
        return err.code
    except FileNotFoundError as err:
        _emit_error(EXIT_FILE, "file", str(err))
        return EXIT_FILE
    except (SchemaError, DimensionError) as err:
        _emit_error(EXIT_SCHEMA, "schema", str(err))
        return EXIT_SCHEMA
    except UndefinedObjectiveError as err:
        _emit_error(EXIT_UNDEFINED, "undefined", str(err))
        return EXIT_UNDEFINED
    except (LaddrError, ValueError) as err:
        _emit_error(EXIT_DATA, "data", str(err))
        return EXIT_DATA
    except Exception as err:  # pragma: no cover
        _emit_error(EXIT_INTERNAL, "internal", f"{type(err).__name__}: {err}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
