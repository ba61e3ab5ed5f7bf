"""Command-line front end.

Every subcommand reads file inputs, writes its outputs under ``--out``,
and drops a manifest (``<out>.manifest.json``) echoing the fully
resolved configuration, sufficient to re-run the command. Outputs are
byte-identical for identical inputs, flags, and seed. Curve-producing
subcommands also render a figure next to the delimited output unless
``--no-plot`` is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, effects, empirical, simulation, trend as trend_mod
from .bootstrap import ESTIMAND_KINDS, Estimand, bootstrap as run_bootstrap, run_pipeline
from .data_model import Dataset, load_csv, load_csv_pair, save_csv, summarize
from .errors import ContdidError, ValidationError
from .kernels import KernelSpec

CURVE_COMMANDS = {"trend", "bounds", "fit-q", "ame", "crossing"}


def _parse_intervals(text: str):
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(",")
        if len(pieces) != 2:
            raise ValidationError(f"bad interval {part!r}; expected 'a,b' pairs joined by ';'")
        out.append((float(pieces[0]), float(pieces[1])))
    if not out:
        raise ValidationError("empty interval specification")
    return out


def _add_common(parser: argparse.ArgumentParser, data: bool = True):
    if data:
        parser.add_argument("--data", help="single CSV with period,y,x columns")
        parser.add_argument("--data-t", help="CSV for the comparison period (paired with --data-T)")
        parser.add_argument("--data-T", dest="data_ref", help="CSV for the reference period")
    parser.add_argument("--kernel", default="biweight",
                        choices=["biweight", "epanechnikov", "triangular"])
    parser.add_argument("--bandwidth", default="auto",
                        help="positive float or 'auto' (default: auto)")
    parser.add_argument("--trim-lo", type=float, default=0.05, dest="trim_lo")
    parser.add_argument("--trim-hi", type=float, default=0.95, dest="trim_hi")
    parser.add_argument("--grid", type=int, default=None, help="grid size (meaning per subcommand)")
    parser.add_argument("--t", type=int, default=1, help="comparison period label (default 1)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output file path")
    parser.add_argument("--format", default="json", choices=["json", "csv"])
    parser.add_argument("--plot", default=True, action=argparse.BooleanOptionalAction,
                        help="render a figure next to curve outputs")


def _load_dataset(args) -> Dataset:
    if args.data and (args.data_t or args.data_ref):
        raise ValidationError("give either --data or the --data-t/--data-T pair, not both")
    if args.data:
        return load_csv(args.data)
    if args.data_t and args.data_ref:
        return load_csv_pair(args.data_t, args.data_ref)
    raise ValidationError("missing input: --data <csv> or --data-t <csv> --data-T <csv>")


def _kernel_spec(args) -> KernelSpec:
    bw = args.bandwidth
    if isinstance(bw, str) and bw != "auto":
        try:
            bw = float(bw)
        except ValueError:
            raise ValidationError(f"--bandwidth must be a float or 'auto', got {bw!r}") from None
    return KernelSpec(family=args.kernel, bandwidth=bw)


def _write_manifest(args, outputs: list[str]) -> None:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "command": args.subcommand,
        "config": resolved,
        "outputs": [str(o) for o in outputs],
        "version": __version__,
    }
    path = Path(str(args.out) + ".manifest.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n",
                    encoding="utf-8")


def _write_text(path, text: str):
    Path(path).write_text(text + ("" if text.endswith("\n") else "\n"), encoding="utf-8")


def _figure_path(out) -> str:
    return str(Path(out).with_suffix(".png"))


def _estimate_all_trends(dataset, args, spec):
    trends = {}
    for t in range(1, dataset.n_periods):
        if args.interval:
            trends[t] = trend_mod.estimate_trend_interval(
                dataset, t, _parse_intervals(args.interval), grid_size=args.grid or 512
            )
        else:
            cr = empirical.estimate_crossing(dataset.period(t), dataset.reference,
                                             args.trim_lo, args.trim_hi)
            trends[t] = trend_mod.estimate_trend_point(dataset, t, cr, spec,
                                                       grid_size=args.grid or 512)
    return trends


def _single_trend(dataset, args, spec):
    if getattr(args, "interval", None):
        return trend_mod.estimate_trend_interval(dataset, args.t, _parse_intervals(args.interval),
                                                 grid_size=getattr(args, "grid", None) or 512)
    cr = empirical.estimate_crossing(dataset.period(args.t), dataset.reference,
                                     args.trim_lo, args.trim_hi)
    return trend_mod.estimate_trend_point(dataset, args.t, cr, spec,
                                          grid_size=getattr(args, "grid", None) or 512)


def _point_estimate_with_ci(dataset, args, spec, kind, **kw):
    estimand = Estimand(kind=kind, t=args.t, trim_lower=args.trim_lo, trim_upper=args.trim_hi,
                           control_set=tuple(_parse_intervals(args.interval)) if args.interval else None,
                           **kw)
    if args.bootstrap:
        res = run_bootstrap(dataset, estimand, spec, n_boot=args.bootstrap,
                           level=args.level, seed=args.seed)
        return res.point, res.ci
    return run_pipeline(dataset, estimand, spec), None


def cmd_summarize(args) -> list[str]:
    dataset = _load_dataset(args)
    rows = summarize(dataset)
    if args.format == "csv":
        from .data_model import SUMMARY_KEYS

        lines = [",".join(SUMMARY_KEYS)]
        lines += [",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k])
                           for k in SUMMARY_KEYS) for r in rows]
        _write_text(args.out, "\n".join(lines))
    else:
        _write_text(args.out, json.dumps(rows, indent=2))
    return [args.out]


def cmd_crossing(args) -> list[str]:
    dataset = _load_dataset(args)
    s1, s2 = dataset.period(args.t), dataset.reference
    cr = empirical.estimate_crossing(s1, s2, args.trim_lo, args.trim_hi)
    _write_text(args.out, cr.to_json())
    outputs = [args.out]
    if args.plot:
        from . import plots

        fig = _figure_path(args.out)
        plots.crossing_figure(s1, s2, cr, fig)
        outputs.append(fig)
    return outputs


def cmd_trend(args) -> list[str]:
    dataset = _load_dataset(args)
    spec = _kernel_spec(args)
    tr = _single_trend(dataset, args, spec)
    tr.to_csv(args.out)
    meta_path = str(args.out) + ".meta.json"
    _write_text(meta_path, tr.metadata_json())
    outputs = [args.out, meta_path]
    if args.plot:
        from . import plots

        fig = _figure_path(args.out)
        plots.trend_figure(tr, fig)
        outputs.append(fig)
    return outputs


def cmd_att(args) -> list[str]:
    dataset = _load_dataset(args)
    spec = _kernel_spec(args)
    if args.x is None:
        raise ValidationError("att needs --x")
    value, ci = _point_estimate_with_ci(dataset, args, spec, "att", x=args.x)
    trend = _single_trend(dataset, args, spec)
    est = effects.att(dataset, args.t, args.x, trend, spec)
    out = EffectWithCi(est, value, ci)
    _write_text(args.out, out.to_json())
    return [args.out]


def cmd_qtt(args) -> list[str]:
    dataset = _load_dataset(args)
    spec = _kernel_spec(args)
    if args.x is None or args.p is None:
        raise ValidationError("qtt needs --x and --p")
    value, ci = _point_estimate_with_ci(dataset, args, spec, "qtt", x=args.x, p=args.p)
    trend = _single_trend(dataset, args, spec)
    est = effects.qtt(dataset, args.t, args.p, args.x, trend, spec)
    _write_text(args.out, EffectWithCi(est, value, ci).to_json())
    return [args.out]


class EffectWithCi:
    def __init__(self, est, value, ci):
        self.est = est
        self.value = value
        self.ci = ci

    def to_json(self) -> str:
        d = self.est.to_dict()
        d["value"] = self.value
        if self.ci is not None:
            d["ci_lo"], d["ci_hi"] = self.ci
        return json.dumps(d)


def cmd_ame(args) -> list[str]:
    dataset = _load_dataset(args)
    spec = _kernel_spec(args)
    outputs = [args.out]
    if args.grid and args.x is None and args.c is None:
        trend = _single_trend(dataset, args, spec)
        ref = dataset.reference
        lo = float(np.quantile(ref.treatments, args.trim_lo))
        hi = float(np.quantile(ref.treatments, args.trim_hi))
        xs = np.linspace(lo, hi, args.grid)
        ests = []
        for x in xs:
            try:
                ests.append(effects.ame_app(dataset, args.t, float(x), trend, spec))
            except ContdidError:
                continue
        if not ests:
            raise ValidationError("no grid point admits a nondegenerate marginal-effect ratio")
        effects.effect_curve_to_csv(ests, args.out)
        if args.plot:
            from . import plots

            fig = _figure_path(args.out)
            plots.effect_curve_figure(ests, fig, ylabel="average marginal effect")
            outputs.append(fig)
        return outputs
    if (args.x is None) == (args.c is None):
        raise ValidationError("ame needs exactly one of --x (pointwise) or --c (averaged)")
    if args.x is not None:
        value, ci = _point_estimate_with_ci(dataset, args, spec, "ame_app", x=args.x)
        trend = _single_trend(dataset, args, spec)
        est = effects.ame_app(dataset, args.t, args.x, trend, spec)
    else:
        value, ci = _point_estimate_with_ci(dataset, args, spec, "ame_avg", c=args.c)
        trend = _single_trend(dataset, args, spec)
        est = effects.ame_avg(dataset, args.t, args.c, trend, spec)
    _write_text(args.out, EffectWithCi(est, value, ci).to_json())
    return [args.out]


def cmd_bounds(args) -> list[str]:
    dataset = _load_dataset(args)
    spec = _kernel_spec(args)
    trends = _estimate_all_trends(dataset, args, spec)
    if args.x is not None and args.xprime is not None:
        res = effects.att_bounds(dataset, args.x, args.xprime, trends, spec)
        _write_text(args.out, json.dumps(res.to_dict()))
        return [args.out]
    n_grid = args.grid or 50
    ref = dataset.reference
    lo = float(np.quantile(ref.treatments, args.trim_lo))
    hi = float(np.quantile(ref.treatments, args.trim_hi))
    xs = np.linspace(lo, hi, n_grid)
    rows = [effects.ame_bounds(dataset, float(x), trends, spec) for x in xs]
    lines = ["x,lower,upper"]
    lines += [f"{float(r.eval_x)!r},{float(r.lower)!r},{float(r.upper)!r}" for r in rows]
    _write_text(args.out, "\n".join(lines))
    outputs = [args.out]
    if args.plot:
        from . import plots

        fig = _figure_path(args.out)
        plots.bounds_figure(xs, [r.lower for r in rows], [r.upper for r in rows], fig)
        outputs.append(fig)
    return outputs


def cmd_rc(args) -> list[str]:
    dataset = _load_dataset(args)
    spec = _kernel_spec(args)
    if args.test:
        if args.x is None:
            raise ValidationError("rc --test needs --x")
        trends = _estimate_all_trends(dataset, args, spec)
        res = effects.rc_linearity_test(dataset, args.x, trends, spec,
                                        n_boot=args.bootstrap or 199, seed=args.seed)
        _write_text(args.out, res.to_json())
        return [args.out]
    if (args.x is None) == (args.c is None):
        raise ValidationError("rc needs exactly one of --x (pointwise) or --c (overall)")
    if args.x is not None:
        value, ci = _point_estimate_with_ci(dataset, args, spec, "rc_ame", x=args.x)
        trend = _single_trend(dataset, args, spec)
        est = effects.rc_ame(dataset, args.t, args.x, trend, spec)
    else:
        value, ci = _point_estimate_with_ci(dataset, args, spec, "rc_ame_overall", c=args.c)
        trend = _single_trend(dataset, args, spec)
        est = effects.rc_ame_overall(dataset, args.t, trend, spec, args.c)
    _write_text(args.out, EffectWithCi(est, value, ci).to_json())
    return [args.out]


def cmd_fit_q(args) -> list[str]:
    dataset = _load_dataset(args)
    knots = tuple(float(k) for k in args.knots.split(",")) if args.knots else empirical.DEFAULT_Q_KNOTS
    s1, s2 = dataset.period(args.t), dataset.reference
    fit = empirical.fit_piecewise_q(s1, s2, knots=knots, grid_step=args.grid_step)
    _write_text(args.out, fit.to_json())
    outputs = [args.out]
    if args.plot:
        from . import plots

        fig = _figure_path(args.out)
        plots.piecewise_q_figure(fit, s1, s2, fig)
        outputs.append(fig)
    return outputs


def cmd_dominance(args) -> list[str]:
    dataset = _load_dataset(args)
    if not args.interval:
        raise ValidationError("dominance needs --interval \"a,b\"")
    intervals = _parse_intervals(args.interval)
    if len(intervals) != 1:
        raise ValidationError("dominance takes a single interval")
    res = empirical.dominance_test(dataset.period(args.t), dataset.reference, intervals[0],
                                   n_boot=args.bootstrap or 199, seed=args.seed)
    _write_text(args.out, res.to_json())
    return [args.out]


def cmd_simulate(args) -> list[str]:
    dgp = simulation.load_dgp_config(args.dgp)
    dataset = simulation.simulate(dgp, args.n, args.seed)
    save_csv(dataset, args.out)
    return [args.out]


def cmd_bootstrap(args) -> list[str]:
    dataset = _load_dataset(args)
    spec = _kernel_spec(args)
    estimand = Estimand(
        kind=args.estimand,
        t=args.t,
        x=args.x,
        p=args.p,
        c=args.c,
        trim_lower=args.trim_lo,
        trim_upper=args.trim_hi,
        control_set=tuple(_parse_intervals(args.interval)) if args.interval else None,
        freeze_crossing=args.freeze_crossing,
    )
    res = run_bootstrap(dataset, estimand, spec, n_boot=args.bootstrap or 199,
                       level=args.level, seed=args.seed)
    _write_text(args.out, res.to_json())
    return [args.out]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contdid",
        description="Nonparametric difference-in-differences for continuous treatments",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, func, **kw):
        p = sub.add_parser(name, **kw)
        p.set_defaults(func=func)
        return p

    p = add("summarize", cmd_summarize, help="per-period summary statistics")
    _add_common(p)

    p = add("crossing", cmd_crossing, help="estimate the treatment-CDF crossing point")
    _add_common(p)

    p = add("trend", cmd_trend, help="estimate the time-trend map g_t")
    _add_common(p)
    p.add_argument("--interval", help="control set, e.g. \"10,12;26.8,50\" (else: point trend)")

    for name, func, extra in (
        ("att", cmd_att, ("--x", "--interval")),
        ("qtt", cmd_qtt, ("--x", "--p", "--interval")),
        ("ame", cmd_ame, ("--x", "--c", "--interval")),
    ):
        p = add(name, func, help=f"estimate {name.upper()}")
        _add_common(p)
        if "--x" in extra:
            p.add_argument("--x", type=float)
        if "--p" in extra:
            p.add_argument("--p", type=float)
        if "--c" in extra:
            p.add_argument("--c", type=float)
        if "--interval" in extra:
            p.add_argument("--interval")
        p.add_argument("--bootstrap", type=int, default=None, metavar="B")
        p.add_argument("--level", type=float, default=0.90)

    p = add("bounds", cmd_bounds, help="curvature bounds on marginal effects (grid) or ATT (--x --xprime)")
    _add_common(p)
    p.add_argument("--x", type=float)
    p.add_argument("--xprime", type=float)
    p.add_argument("--interval")

    p = add("rc", cmd_rc, help="random-coefficient extrapolation and linearity test")
    _add_common(p)
    p.add_argument("--x", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--test", action="store_true", help="run the linearity test (needs T >= 3)")
    p.add_argument("--interval")
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")
    p.add_argument("--level", type=float, default=0.90)

    p = add("fit-q", cmd_fit_q, help="piecewise-linear fit of the inverse rank map")
    _add_common(p)
    p.add_argument("--knots", help="four ascending knots, e.g. \"12.0,15.2,23.4,26.8\"")
    p.add_argument("--grid-step", type=float, default=None, dest="grid_step")

    p = add("dominance", cmd_dominance, help="one-sided CDF dominance test on an interval")
    _add_common(p)
    p.add_argument("--interval", required=True)
    p.add_argument("--bootstrap", type=int, default=None, metavar="B")

    p = add("simulate", cmd_simulate, help="simulate a dataset from a DGP config")
    _add_common(p, data=False)
    p.add_argument("--dgp", required=True, help="DGP config file (.json or .toml)")
    p.add_argument("--n", type=int, required=True, help="per-period sample size")

    p = add("bootstrap", cmd_bootstrap, help="full-pipeline percentile bootstrap of one estimand")
    _add_common(p)
    p.add_argument("--estimand", required=True, choices=list(ESTIMAND_KINDS))
    p.add_argument("--x", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--interval")
    p.add_argument("--bootstrap", type=int, default=199, metavar="B")
    p.add_argument("--level", type=float, default=0.90)
    p.add_argument("--freeze-crossing", action="store_true", dest="freeze_crossing")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        outputs = args.func(args)
        _write_manifest(args, outputs)
    except ContdidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
