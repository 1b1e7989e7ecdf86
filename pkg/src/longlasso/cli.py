"""Batch command-line front end.

Subcommands: ``simulate`` (protocol config to CSV plus a truth sidecar),
``fit`` (CSV to a model JSON, optionally with trace and coefficient-table
CSVs), ``predict`` (model + CSV to a predictions CSV), ``evaluate``
(predictions + CSV to a metrics JSON), ``cv`` (CSV + grid to a CV report
and a best-lambda model).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every failure prints a single machine-parsable line to stderr of the form
``error[<kind>]: <reason>``.  Outputs are written atomically (temp file
plus rename) and every JSON output embeds the resolved configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

from . import __version__, alternation, evaluation, simulate
from .correlation import STRUCTURES
from .dataset import build_lagged, load_csv, split_temporal, write_csv
from .errors import DataError, NumericalError
from .families import FAMILIES


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # single-line, remappable usage failures
        raise UsageError(message)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(prefix=".longlasso-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _parse_index_range(text: str, flag: str) -> tuple[int, ...]:
    """'a:b' half-open range, 'i,j,k' list, or 'none' for empty."""
    text = text.strip()
    if text.lower() in ("", "none"):
        return ()
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            return tuple(range(int(lo), int(hi)))
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise UsageError(f"{flag} expects 'a:b', 'i,j,k', or 'none'") from None


def _parse_grid(text: str):
    """'auto' or '<l1 list>;<l2 list>' with comma-separated values."""
    text = text.strip()
    if text.lower() == "auto":
        return None, None
    if ";" not in text:
        raise UsageError("--grid expects 'auto' or '<lambda1 list>;<lambda2 list>'")
    left, right = text.split(";", 1)
    try:
        lam1 = tuple(float(v) for v in left.split(",") if v.strip())
        lam2 = tuple(float(v) for v in right.split(",") if v.strip())
    except ValueError:
        raise UsageError("--grid values must be numbers") from None
    if not lam1 or not lam2:
        raise UsageError("--grid lists must be nonempty")
    return lam1, lam2


def _apply_config_file(args: argparse.Namespace, parser_dests: set[str]) -> None:
    """Merge --config JSON over the parsed flags; unknown keys are rejected."""
    if not getattr(args, "config", None):
        return
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {args.config}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise DataError("config file must hold a JSON object")
    for key, value in payload.items():
        if key not in parser_dests or key == "config":
            raise UsageError(f"unknown config key {key!r}")
        setattr(args, key, value)


def _invocation(args: argparse.Namespace) -> dict:
    skip = {"handler", "dests", "config"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, tuple):
            value = list(value)
        out[key] = value
    return out


def _load_dataset(path: str):
    try:
        return load_csv(path)
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None


# ---------------------------------------------------------------- simulate


def _cmd_simulate(args) -> None:
    cfg = simulate.SimConfig(
        d=args.d,
        T=args.times,
        m=args.subjects,
        tau=args.tau,
        feature_sd=args.feature_sd,
        coef_sd=args.coef_sd,
        zero_feature_rows=_parse_index_range(args.zero_feature_rows, "--zero-feature-rows"),
        zero_lag_columns=_parse_index_range(args.zero_lag_columns, "--zero-lag-columns"),
        structure=args.structure,
        alpha=args.alpha,
        residual_sd=args.residual_sd,
        seed=args.seed,
        coef_seed=args.coef_seed,
    )
    if args.family == "gaussian":
        ds, U, V = simulate.generate_regression(cfg)
    else:
        ds, U, V = simulate.generate_classification(cfg)
    buffer = io.StringIO()
    write_csv(ds, buffer)
    _atomic_write(args.output, buffer.getvalue())
    truth = simulate.truth_metadata(cfg, U, V, args.family)
    truth["invocation"] = _invocation(args)
    truth_path = args.truth_out or args.output + ".truth.json"
    _atomic_write(truth_path, _dump_json(truth))


# --------------------------------------------------------------------- fit


def _fit_config(args) -> alternation.FitConfig:
    return alternation.FitConfig(
        max_outer=args.max_outer,
        inner_max_iterations=args.inner_max_iterations,
        inner_tolerance=args.inner_tolerance,
        step_mode=args.step_mode,
    )


def _cmd_fit(args) -> None:
    ds = _load_dataset(args.input)
    if args.holdout:
        ds, _ = split_temporal(ds, args.holdout, args.tau)
    design = build_lagged(ds, args.tau, args.include_lagged_outcome)
    result = alternation.fit(
        design,
        family=args.family,
        structure=args.structure,
        lam1=args.lambda1,
        lam2=args.lambda2,
        config=_fit_config(args),
        seed=args.seed,
    )
    payload = alternation.to_json_dict(result)
    payload["invocation"] = _invocation(args)
    _atomic_write(args.output, _dump_json(payload))
    if args.trace_out:
        _atomic_write(args.trace_out, _trace_csv(result))
    if args.coefficients_out:
        _atomic_write(args.coefficients_out, _coefficients_csv(result))


def _trace_csv(result) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["round", "iteration", "objective", "step_L"])
    for rnd, (objectives, steps) in enumerate(
        zip(result.inner_traces, result.inner_step_traces), start=1
    ):
        for it, (obj, L) in enumerate(zip(objectives, steps), start=1):
            writer.writerow([rnd, it, repr(float(obj)), repr(float(L))])
    return buffer.getvalue()


def _coefficients_csv(result) -> str:
    """Plot-ready long table: one row per (feature, lag) coefficient."""
    U = result.coefficients.U
    V = result.coefficients.V
    W = U + V
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["feature", "lag", "abs_w", "abs_u", "abs_v"])
    for r, name in enumerate(result.feature_names):
        for lag in range(U.shape[1]):
            writer.writerow(
                [
                    name,
                    lag,
                    repr(abs(float(W[r, lag]))),
                    repr(abs(float(U[r, lag]))),
                    repr(abs(float(V[r, lag]))),
                ]
            )
    return buffer.getvalue()


# ----------------------------------------------------------------- predict


def _cmd_predict(args) -> None:
    with open(args.model, "r", encoding="utf-8") as fh:
        result = alternation.from_json_dict(json.load(fh))
    ds = _load_dataset(args.input)
    if args.holdout:
        _, ds = split_temporal(ds, args.holdout, result.tau)
    design = build_lagged(ds, result.tau, result.include_lagged_outcome)
    predictions = alternation.predict(result, design)
    times = design.example_times()
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["subject_id", "time", "prediction"])
    for i, sid in enumerate(design.subject_ids):
        for j in range(design.n):
            writer.writerow([sid, int(times[i, j]), repr(float(predictions[i, j]))])
    _atomic_write(args.output, buffer.getvalue())


# ---------------------------------------------------------------- evaluate


def _read_predictions(path: str):
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise DataError(f"predictions file not found: {path}") from None
    with fh:
        reader = csv.DictReader(fh)
        required = {"subject_id", "time", "prediction"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DataError("predictions CSV needs columns subject_id,time,prediction")
        rows = []
        for row in reader:
            try:
                rows.append(
                    (row["subject_id"], int(row["time"]), float(row["prediction"]))
                )
            except (TypeError, ValueError):
                raise DataError("malformed predictions row") from None
    if not rows:
        raise DataError("predictions CSV is empty")
    return rows


def _cmd_evaluate(args) -> None:
    rows = _read_predictions(args.predictions)
    ds = _load_dataset(args.input)
    actual_by_key = {}
    for s in ds.subjects:
        for t in range(ds.T):
            actual_by_key[(s.id, s.time_start + t)] = float(s.outcomes[t])
    predictions = []
    actuals = []
    for sid, time, value in rows:
        key = (sid, time)
        if key not in actual_by_key:
            raise DataError(f"no observed outcome for ({sid},{time})")
        predictions.append(value)
        actuals.append(actual_by_key[key])
    if args.metric == "nmse":
        value = evaluation.nmse(predictions, actuals)
    else:
        value = evaluation.auc(predictions, actuals)
    payload = {
        "schema": "longlasso.metrics.v1",
        "metric": args.metric,
        "value": value,
        "n_examples": len(predictions),
        "invocation": _invocation(args),
    }
    _atomic_write(args.output, _dump_json(payload))


# ---------------------------------------------------------------------- cv


def _cmd_cv(args) -> None:
    ds = _load_dataset(args.input)
    if args.holdout:
        ds, _ = split_temporal(ds, args.holdout, args.tau)
    lam1_grid, lam2_grid = _parse_grid(args.grid)
    spec = evaluation.CvSpec(
        lam1_grid=lam1_grid,
        lam2_grid=lam2_grid,
        folds=args.folds,
        metric=args.metric,
        seed=args.seed,
    )
    cv = evaluation.grid_cv(
        ds,
        args.tau,
        family=args.family,
        structure=args.structure,
        spec=spec,
        include_lagged_outcome=args.include_lagged_outcome,
    )
    if args.report_out:
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(["lambda1", "lambda2", "fold", args.metric])
        for lam1, lam2, fold, score in cv.report_rows():
            writer.writerow(
                [repr(lam1), repr(lam2), fold, "" if score is None else repr(score)]
            )
        _atomic_write(args.report_out, buffer.getvalue())
    design = build_lagged(ds, args.tau, args.include_lagged_outcome)
    result = alternation.fit(
        design,
        family=args.family,
        structure=args.structure,
        lam1=cv.best_lam1,
        lam2=cv.best_lam2,
        config=_fit_config(args),
        seed=args.seed,
    )
    payload = alternation.to_json_dict(result)
    payload["cv"] = {
        "metric": args.metric,
        "folds": args.folds,
        "lambda1_grid": list(cv.lam1_grid),
        "lambda2_grid": list(cv.lam2_grid),
        "best_lambda1": cv.best_lam1,
        "best_lambda2": cv.best_lam2,
    }
    payload["invocation"] = _invocation(args)
    _atomic_write(args.output, _dump_json(payload))


# ------------------------------------------------------------------ parser


def _add_solver_flags(p) -> None:
    p.add_argument("--max-outer", type=int, default=25)
    p.add_argument("--inner-max-iterations", type=int, default=2000)
    p.add_argument("--inner-tolerance", type=float, default=1e-6)
    p.add_argument("--step-mode", choices=("backtracking", "fixed"), default="backtracking")


def build_parser() -> _Parser:
    parser = _Parser(prog="longlasso", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic benchmark CSV")
    p.add_argument("--output", required=True, help="CSV path for the dataset")
    p.add_argument("--truth-out", default=None, help="sidecar JSON (default <output>.truth.json)")
    p.add_argument("--family", choices=("gaussian", "bernoulli"), default="gaussian")
    p.add_argument("--d", type=int, default=200)
    p.add_argument("--times", "-T", dest="times", type=int, default=30)
    p.add_argument("--subjects", "-m", dest="subjects", type=int, default=400)
    p.add_argument("--tau", type=int, default=4)
    p.add_argument("--structure", choices=STRUCTURES, default="ar1")
    p.add_argument("--alpha", type=float, default=0.64)
    p.add_argument("--residual-sd", type=float, default=1.0)
    p.add_argument("--feature-sd", type=float, default=4.0)
    p.add_argument("--coef-sd", type=float, default=7.0)
    p.add_argument("--zero-feature-rows", default="0:150", help="'a:b' range or 'i,j' list, 0-based")
    p.add_argument("--zero-lag-columns", default="1,4", help="0-based lag columns forced to zero")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--coef-seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file overriding flags")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", help="fit a model from a long-format CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="model JSON path")
    p.add_argument("--family", choices=FAMILIES, default="gaussian")
    p.add_argument("--structure", choices=STRUCTURES, default="independent")
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--lambda1", type=float, default=0.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    p.add_argument("--holdout", type=int, default=0, help="drop trailing time points before fitting")
    p.add_argument("--include-lagged-outcome", action="store_true")
    p.add_argument("--trace-out", default=None, help="per-iteration objective CSV")
    p.add_argument("--coefficients-out", default=None, help="plot-ready |W|,|U|,|V| CSV")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="JSON file overriding flags")
    _add_solver_flags(p)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("predict", help="predict with a fitted model JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="predictions CSV path")
    p.add_argument("--holdout", type=int, default=0, help="predict only the trailing window")
    p.add_argument("--config", default=None, help="JSON file overriding flags")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against observed outcomes")
    p.add_argument("--predictions", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--metric", choices=evaluation.METRICS, default="nmse")
    p.add_argument("--output", required=True, help="metrics JSON path")
    p.add_argument("--config", default=None, help="JSON file overriding flags")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("cv", help="cross-validate the penalty grid, then fit the best cell")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="best-cell model JSON path")
    p.add_argument("--report-out", default=None, help="per-cell CV report CSV")
    p.add_argument("--family", choices=FAMILIES, default="gaussian")
    p.add_argument("--structure", choices=STRUCTURES, default="independent")
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--grid", default="auto", help="'auto' or '<l1 list>;<l2 list>'")
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--metric", choices=evaluation.METRICS, default="nmse")
    p.add_argument("--holdout", type=int, default=0, help="drop trailing time points before CV")
    p.add_argument("--include-lagged-outcome", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON file overriding flags")
    _add_solver_flags(p)
    p.set_defaults(handler=_cmd_cv)

    return parser


def run(argv=None) -> int:
    """Entry point returning the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    try:
        subparser = _subparser_for(parser, args.command)
        dests = {action.dest for action in subparser._actions}
        _apply_config_file(args, dests)
        args.handler(args)
    except UsageError as exc:
        print(f"error[usage]: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return 2
    return 0


def _subparser_for(parser: _Parser, command: str):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise RuntimeError("subcommand registry missing")


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
