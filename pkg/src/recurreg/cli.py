"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 an
estimating equation did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from ._ranks import default_workers
from .data import (
    CHECK_MODES,
    DataError,
    RecurrentDataset,
    ValidationError,
    parse_dataset,
    stratify,
    summarize,
    write_dataset,
)
from .lwyy import LwyyError, fit_lwyy
from .nonparametric import EstimationError, McfCurve, bootstrap_mcf_ci, mean_cumulative
from .plotting import PlotError, PlotStyle, combine_curves, event_plot_data, render_svg
from .regression import ModelError, parse_model, predict_cumulative
from .regression import fit_joint
from .report import dumps, validate_document
from .simulate import SimulationError, default_config, paper_display_preset, simulate_gsc, with_overrides
from .solver import SolverConfig, SolverError
from .stepfun import StepFunction

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3
FIXTURE_ENV = "RECUR_FIXTURE_DIR"


class UsageError(Exception):
    pass


class NotConverged(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# helpers


def _emit(path, text: str, out):
    if path is None:
        return
    if path == "-":
        out.write(text)
    else:
        Path(path).write_text(text)


def _fixture_path(name: str) -> Path:
    if name != "simdat":
        raise UsageError(f"unknown fixture {name!r}; available: simdat")
    roots = [os.environ.get(FIXTURE_ENV), str(Path(__file__).parent / "fixtures")]
    for root in roots:
        if root and (Path(root) / "simdat.csv").is_file():
            return Path(root) / "simdat.csv"
    raise DataError(
        "fixture not vendored: place the simDat CSV export at "
        f"recurreg/fixtures/simdat.csv or in ${FIXTURE_ENV}"
    )


def _schema(args) -> dict:
    out = {}
    for role in ("id", "start", "stop", "event", "status"):
        v = getattr(args, f"{role}_col", None)
        if v:
            out[role] = v
    return out


def _parse_filter(expr: str):
    if "=" not in expr:
        raise UsageError(f"filter must look like 'covariate=value', got {expr!r}")
    name, value = (s.strip() for s in expr.split("=", 1))
    try:
        return name, float(value)
    except ValueError:
        raise UsageError(f"filter value must be numeric, got {value!r}") from None


def _load(args, allow_empty: bool = False) -> RecurrentDataset:
    ds, _ = parse_dataset(_read_text(args), _schema(args), args.check, args.tau)
    if getattr(args, "filter", None):
        name, value = _parse_filter(args.filter)
        try:
            x = ds.covariate(name)
        except KeyError as exc:
            raise UsageError(str(exc)) from None
        ds = ds.take(np.flatnonzero(x == value))
    if ds.n == 0 and not allow_empty:
        raise DataError("dataset is empty")
    return ds


def _style(args) -> PlotStyle:
    return PlotStyle(
        xlab=getattr(args, "xlab", None), ylab=getattr(args, "ylab", None), main=getattr(args, "main", None)
    )


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return args.workers
    return default_workers() if getattr(args, "parallel", False) else 1


def _vector(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _init(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--init expects name=v1,v2,..., got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        if k not in ("alpha", "beta", "eta", "theta"):
            raise UsageError(f"--init name must be alpha, beta, eta or theta, got {k!r}")
        out[k] = np.array(_vector(v))
    return out


def read_curves_csv(text: str) -> list[McfCurve]:
    """Inverse of :meth:`McfCurve.to_csv`; one curve per distinct label."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows or "time" not in rows[0] or "estimate" not in rows[0]:
        raise DataError("curve CSV needs time and estimate columns")
    labels = list(dict.fromkeys(r.get("label", "") or "" for r in rows))
    out = []
    for lab in labels:
        sel = [r for r in rows if (r.get("label", "") or "") == lab]
        try:
            t = np.array([float(r["time"]) for r in sel])
            est = np.array([float(r["estimate"]) for r in sel])
            has_band = all(r.get("lower") not in (None, "") for r in sel)
            lo = np.array([float(r["lower"]) for r in sel]) if has_band else None
            hi = np.array([float(r["upper"]) for r in sel]) if has_band else None
        except ValueError as exc:
            raise DataError(f"bad number in curve CSV: {exc}") from None
        curve = McfCurve(
            StepFunction(t, est, 0.0),
            None if lo is None else StepFunction(t, lo, 0.0),
            None if hi is None else StepFunction(t, hi, 0.0),
            label=lab,
        )
        out.append(curve)
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args, out):
    try:
        ds, report = parse_dataset(_read_text(args), _schema(args), args.check, args.tau)
    except ValidationError as exc:
        report = exc.report
        _emit(args.json, dumps(report.to_dict()), out)
        if args.json != "-":
            out.write(report.to_text())
        raise
    if ds.n == 0:
        raise DataError("dataset is empty")
    _emit(args.json, dumps(report.to_dict()), out)
    if args.json != "-":
        out.write(report.to_text())
        out.write(f"subjects: {ds.n}\n")
    if args.output:
        _emit(args.output, write_dataset(report.repaired or ds), out)


def _read_text(args) -> str:
    if args.fixture:
        return _fixture_path(args.fixture).read_text()
    if not args.input:
        raise UsageError("an input file or --fixture is required")
    try:
        return sys.stdin.read() if args.input == "-" else Path(args.input).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {args.input}: {exc.strerror}") from None


def cmd_summary(args, out):
    s = summarize(_load(args))
    _emit(args.json, dumps(s.to_dict()), out)
    if args.json != "-":
        out.write(s.to_text())


def cmd_plot_events(args, out):
    ds = _load(args)
    data = event_plot_data(ds, args.group, args.order, args.calendar)
    style = _style(args)
    if args.recurrent_types:
        style = PlotStyle(**{**style.__dict__, "recurrent_types": tuple(args.recurrent_types.split(","))})
    svg = render_svg(data, style)
    _emit(args.json, dumps(data.to_dict()), out)
    _emit(args.svg or ("-" if args.json != "-" else None), svg, out)


def _estimator(args) -> str:
    if args.npmle:
        return "npmle"
    return "mcf" if args.adjust_riskset else "sample_mean"


def _mcf_curve(ds, args, label):
    est = _estimator(args)
    if args.boot:
        return bootstrap_mcf_ci(ds, est, args.boot, args.level, args.seed, _workers(args), label)
    return McfCurve(mean_cumulative(ds, est), label=label)


def cmd_mcf(args, out):
    ds = _load(args)
    if args.group:
        try:
            parts = stratify(ds, args.group)
        except KeyError as exc:
            raise UsageError(str(exc)) from None
        from .data import level_label

        curves = [_mcf_curve(sub, args, level_label(v)) for v, sub in parts.items()]
        cs = combine_curves(curves, args.legend_title or args.group)
    else:
        cs = combine_curves([_mcf_curve(ds, args, args.label or _estimator(args))], args.legend_title or "")
    doc = cs.to_dict()
    _emit(args.json, dumps(doc), out)
    csv_text = "".join(c.to_csv(header=(k == 0)) for k, c in enumerate(cs.curves))
    _emit(args.csv or ("-" if args.json != "-" and not args.svg else None), csv_text, out)
    _emit(args.svg, render_svg(cs, _style(args)), out)


def _spec(args):
    cfg = SolverConfig(tol=args.tol, max_iters=args.max_iters, method=args.solver)
    return parse_model(
        args.model,
        eq_type=args.eq_type,
        solver=cfg,
        init=_init(args.init),
        epsilon=args.epsilon,
        boot=args.boot,
        parallel=bool(args.parallel or args.workers),
        workers=_workers(args),
        warm_start=args.warm_start,
    )


def cmd_fit(args, out):
    ds = _load(args)
    if args.model.strip() == "cox.LWYY":
        fit = fit_lwyy(ds)
        _emit(args.json, dumps(fit.to_dict()), out)
        _emit(args.text or ("-" if args.json != "-" else None), fit.summary() + "\n", out)
        return
    spec = _spec(args)
    if args.test and spec.rate_form != "gsc":
        raise UsageError("--test needs a gsc rate model")
    if args.test and spec.boot < 2:
        raise UsageError("--test needs --boot >= 2")
    fit = fit_joint(ds, spec, args.seed)
    _emit(args.json, dumps(fit.to_dict(args.test)), out)
    _emit(args.text or ("-" if args.json != "-" else None), fit.summary(args.test), out)
    if not fit.converged:
        raise NotConverged("at least one estimating equation did not converge; see diagnostics")


def cmd_simulate(args, out):
    base = paper_display_preset if args.preset == "paper-display" else default_config
    cfg = base(args.n, args.seed)
    over = {k: (_vector(getattr(args, k)) if getattr(args, k) else None) for k in ("alpha", "beta", "eta", "theta")}
    over.update(tau=args.tau, convention=args.convention)
    try:
        cfg = with_overrides(cfg, **over)
        ds, truth = simulate_gsc(cfg, _workers(args))
    except SimulationError as exc:
        raise UsageError(str(exc)) from None
    _emit(args.output, write_dataset(ds), out)
    if args.truth:
        _emit(args.truth, truth.to_csv(ids=[s.id for s in ds.subjects]), out)
    doc = {"config": cfg.to_dict(), "summary": summarize(ds).to_dict(), "output": args.output}
    _emit(args.json, dumps(doc), out)
    if args.summary:
        (sys.stderr if args.output == "-" else out).write(summarize(ds).to_text())


def _newdata(path, names) -> np.ndarray:
    try:
        rows = list(csv.DictReader(io.StringIO(Path(path).read_text())))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if not rows:
        raise DataError("newdata has no rows")
    missing = [n for n in names if n not in rows[0]]
    if missing:
        raise DataError(f"newdata lacks covariate columns {missing}")
    try:
        return np.array([[float(r[n]) for n in names] for r in rows]).reshape(len(rows), len(names))
    except ValueError as exc:
        raise DataError(f"bad number in newdata: {exc}") from None


def cmd_predict(args, out):
    ds = _load(args)
    spec = _spec(args)
    fit = fit_joint(ds, spec, args.seed)
    if not fit.converged:
        raise NotConverged("model fit did not converge; predictions withheld")
    X = _newdata(args.newdata, ds.covariate_names) if args.newdata else np.zeros((1, ds.p))
    preds, curves = [], []
    for k, x in enumerate(X):
        rate, haz = predict_cumulative(fit, x, args.frailty)
        z = fit.rate.mu_z if args.frailty is None else args.frailty
        preds.append({
            "x": x.tolist(),
            "frailty": z,
            "rate": rate.to_dict(),
            "hazard": None if haz is None else haz.to_dict(),
        })
        curves.append(McfCurve(rate, label=f"row{k + 1}"))
        if haz is not None:
            curves.append(McfCurve(haz, label=f"row{k + 1}:hazard"))
    _emit(args.json, dumps({"model": spec.model_string, "covariates": list(ds.covariate_names), "predictions": preds}), out)
    csv_text = "".join(c.to_csv(header=(k == 0)) for k, c in enumerate(curves))
    _emit(args.csv or ("-" if args.json != "-" and not args.svg else None), csv_text, out)
    if args.svg:
        rate_curves = [c for c in curves if not c.label.endswith(":hazard")]
        _emit(args.svg, render_svg(combine_curves(rate_curves, "newdata"), _style(args)), out)


def cmd_combine(args, out):
    curves = []
    for path in args.curves:
        try:
            curves += read_curves_csv(Path(path).read_text())
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from None
    labels = args.labels.split(",") if args.labels else None
    cs = combine_curves(curves, args.legend_title or "", labels)
    _emit(args.json, dumps(cs.to_dict()), out)
    _emit(args.svg or ("-" if args.json != "-" else None), render_svg(cs, _style(args)), out)


# ---------------------------------------------------------------------------
# parser


def _data_opts(p):
    p.add_argument("input", nargs="?", help="delimited data file ('-' for stdin)")
    p.add_argument("--fixture", choices=["simdat"], help="load a vendored fixture instead of a file")
    p.add_argument("--check", choices=CHECK_MODES, default="hard", help="validation mode")
    p.add_argument("--tau", type=float, help="study end time")
    p.add_argument("--filter", help="keep subjects with covariate=value")
    for role, default in (("id", "id"), ("start", "t.start"), ("stop", "t.stop"), ("event", "event"), ("status", "status")):
        p.add_argument(f"--{role}-col", dest=f"{role}_col", help=f"column for {role} (default {default})")


def _style_opts(p):
    p.add_argument("--main", help="plot title")
    p.add_argument("--xlab")
    p.add_argument("--ylab")


def _model_opts(p):
    p.add_argument("--model", default="cox", help="cox, ar, am, gsc, rate|hazard pairs such as cox|ar, or cox.LWYY")
    p.add_argument("--eq-type", choices=["logrank", "gehan"], default="logrank")
    p.add_argument("--boot", type=int, default=0, help="bootstrap replicates (0 for none)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", action="store_true", help="bootstrap with half the CPUs (or RECUR_WORKERS)")
    p.add_argument("--workers", type=int, help="explicit worker count")
    p.add_argument("--init", action="append", metavar="NAME=V1,V2", help="initial values, e.g. alpha=0,0")
    p.add_argument("--epsilon", type=float, default=0.001)
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--solver", choices=["spectral", "spectral_multistart", "norm_minimize"], default="spectral")
    p.add_argument("--warm-start", action="store_true", help="seed hazard shape/size from the Cox-type hazard fit")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="recurreg", description="Recurrent event analysis with joint frailty scale-change models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--error-json", action="store_true", help="report errors as JSON on stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("validate", help="check data against the recurrent event rules")
    _data_opts(p)
    p.add_argument("--json", help="write the report as JSON ('-' for stdout)")
    p.add_argument("--output", help="write the (repaired) dataset")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("summary", help="descriptive statistics")
    _data_opts(p)
    p.add_argument("--json")
    p.set_defaults(func=cmd_summary)

    p = sub.add_parser("plot-events", help="event plot as SVG")
    _data_opts(p)
    _style_opts(p)
    p.add_argument("--group", help="panel by this covariate")
    p.add_argument("--order", choices=["increasing", "decreasing", "none"], default="increasing")
    p.add_argument("--calendar", action="store_true", help="calendar time axis")
    p.add_argument("--recurrent-types", help="comma-separated legend labels per event type")
    p.add_argument("--svg")
    p.add_argument("--json", help="plot data as JSON")
    p.set_defaults(func=cmd_plot_events)

    p = sub.add_parser("mcf", help="mean cumulative function")
    _data_opts(p)
    _style_opts(p)
    p.add_argument("--adjust-riskset", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--npmle", action="store_true", help="frailty-adjusted product-limit estimator")
    p.add_argument("--group", help="one curve per level of this covariate")
    p.add_argument("--boot", type=int, default=0)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--label")
    p.add_argument("--legend-title")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_mcf)

    p = sub.add_parser("fit", help="fit a regression model")
    _data_opts(p)
    _model_opts(p)
    p.add_argument("--test", action="store_true", help="submodel tests (gsc rate model, needs --boot)")
    p.add_argument("--json")
    p.add_argument("--text")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate from the joint frailty scale-change model")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--preset", choices=["default", "paper-display"], default="default")
    p.add_argument("--seed", type=int, default=0)
    for k in ("alpha", "beta", "eta", "theta"):
        p.add_argument(f"--{k}", help="comma-separated values")
    p.add_argument("--tau", type=float)
    p.add_argument("--convention", choices=["rate", "cumulative"])
    p.add_argument("--workers", type=int)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--output", default="-", help="dataset CSV ('-' for stdout)")
    p.add_argument("--truth", help="sidecar CSV with id, Z, C, D")
    p.add_argument("--json", help="config and summary as JSON")
    p.add_argument("--summary", action="store_true", help="print a data summary")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("predict", help="predicted cumulative rate and hazard")
    _data_opts(p)
    _model_opts(p)
    _style_opts(p)
    p.add_argument("--newdata", help="CSV with one column per covariate")
    p.add_argument("--frailty", type=float, help="frailty value (default: estimated mean)")
    p.add_argument("--csv")
    p.add_argument("--json")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("combine-curves", help="overlay curve CSV files")
    _style_opts(p)
    p.add_argument("curves", nargs="+", help="curve CSV files")
    p.add_argument("--legend-title")
    p.add_argument("--labels", help="comma-separated legend labels")
    p.add_argument("--svg")
    p.add_argument("--json")
    p.set_defaults(func=cmd_combine)
    return parser


def _fail(code: int, kind: str, message: str, as_json: bool, err, extra=None) -> int:
    if as_json:
        doc = {"error": message, "kind": kind, "exit_code": code}
        if extra:
            doc.update(extra)
        validate_document("error", doc)
        err.write(dumps(doc))
    else:
        err.write(f"recurreg: {kind}: {message}\n")
    return code


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    # accepted anywhere on the command line
    as_json = "--error-json" in argv
    argv = [a for a in argv if a != "--error-json"]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required; see --help")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            args.func(args, out)
        for w in caught:
            if issubclass(w.category, (RuntimeWarning, UserWarning)):
                err.write(f"recurreg: warning: {w.message}\n")
        return EXIT_OK
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc), as_json, err)
    except ModelError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc), as_json, err)
    except ValidationError as exc:
        return _fail(EXIT_DATA, "validation", str(exc), as_json, err, {"report": exc.report.to_dict()})
    except LwyyError as exc:
        return _fail(EXIT_NONCONVERGED, "convergence", str(exc), as_json, err)
    except (DataError, EstimationError, PlotError) as exc:
        return _fail(EXIT_DATA, "data", str(exc), as_json, err)
    except (NotConverged, SolverError) as exc:
        return _fail(EXIT_NONCONVERGED, "convergence", str(exc), as_json, err)


def main():  # pragma: no cover
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # downstream reader closed early (e.g. piped into head)
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = EXIT_OK
    sys.exit(code)
