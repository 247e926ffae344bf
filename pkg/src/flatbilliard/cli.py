"""Batch front-end: ``flatbilliard <subcommand> [flags]``.

Every subcommand writes its artifacts into the output directory (a CSV data
file and a JSON summary, both carrying the resolved config and version) and
prints the summary or the data to stdout according to ``--format``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import _kernel as K
from . import acceptance as acc
from . import billiard as bm
from . import corridor as C
from .config import ExperimentConfig, load_config
from .errors import BilliardError, ConfigError, GeometryError, InvalidParams, OutOfRange
from .geometry import FlatFamilyParams, build_table, validate_table
from .hyperbolicity import BREAKDOWN_HEADER, split_ratio_check
from .statistics import (
    CELL_HEADER,
    correlations,
    default_scan_r,
    expansion_sum,
    fit_cells,
    locate_cells,
    predicted_exponents,
    return_tail,
    return_time_rows,
    summary,
)
from . import version_string

EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_ACCEPTANCE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--beta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--half-width", type=float)
    p.add_argument("--closure-slack", type=float)
    p.add_argument("--variant", choices=["full", "half"])
    p.add_argument("--seed", type=int)
    p.add_argument("--samples", type=lambda s: int(float(s)))
    p.add_argument("--orbit-length", type=lambda s: int(float(s)))
    p.add_argument("--n-max", type=int)
    p.add_argument("--r0", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--format", choices=["csv", "json"], default="json")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flatbilliard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    _common(sub.add_parser("table", help="build the table and its validation report"))

    p = sub.add_parser("orbit", help="dump a trajectory")
    _common(p)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--r", type=float, help="start r (default: a mu-sample from the seed)")
    p.add_argument("--phi", type=float)

    p = sub.add_parser("corridor", help="corridor trace near the separatrix and lemma report")
    _common(p)
    p.add_argument("--x0", type=float, help="start x (default: epsilon)")
    p.add_argument("--offset", type=float, default=1e-14, help="w - w* at the start")

    for name, hlp in (("cells", "cell records and height fit"), ("expansion", "expansion breakdowns and split ratio")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--n-lo", type=int, default=10)
        p.add_argument("--n-hi", type=int, default=100)

    p = sub.add_parser("return-tail", help="return-time histogram and survival fit")
    _common(p)
    p.add_argument("--dump-samples", action="store_true", help="also write per-sample return times")

    p = sub.add_parser("correlations", help="correlation series along one long orbit")
    _common(p)
    p.add_argument("--f", default="free_path")
    p.add_argument("--g", default="free_path")
    p.add_argument("--lags", type=int, default=30)

    p = sub.add_parser("verify", help="run the acceptance criteria")
    _common(p)
    p.add_argument("--criteria", type=lambda s: [int(v) for v in s.split(",")], help="comma list, default all")
    return parser


_CONFIG_KEYS = set(ExperimentConfig.__dataclass_fields__)


def resolve_config(args) -> ExperimentConfig:
    overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_KEYS}
    return load_config(args.config, overrides)


# ------------------------------------------------------------------ output


class Artifacts:
    def __init__(self, cfg: ExperimentConfig, command: str, fmt: str):
        self.cfg, self.command, self.fmt = cfg, command, fmt
        self.dir = Path(cfg.output_dir)
        self.header = {"command": command, "version": version_string(), "config": cfg.to_dict()}
        self.stdout_csv = None

    def _ensure(self):
        self.dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header, rows) -> Path:
        self._ensure()
        buf = io.StringIO()
        buf.write(f"# {json.dumps(self.header, sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
        path = self.dir / f"{name}.csv"
        path.write_text(buf.getvalue())
        if self.stdout_csv is None:
            self.stdout_csv = buf.getvalue()
        return path

    def json(self, name: str, payload: dict) -> Path:
        self._ensure()
        doc = dict(self.header)
        doc.update(payload)
        text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
        path = self.dir / f"{name}.json"
        path.write_text(text)
        self.last_json = text
        return path

    def emit(self):
        if self.fmt == "csv" and self.stdout_csv is not None:
            sys.stdout.write(self.stdout_csv)
        else:
            sys.stdout.write(self.last_json)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if hasattr(v, "value") and not isinstance(v, (int, str)):
        return v.value
    return v


def _table(cfg: ExperimentConfig):
    return build_table(FlatFamilyParams(cfg.beta, cfg.half_width, cfg.closure_slack, cfg.variant))


def _window(cfg, table):
    w = bm.WindowSpec(cfg.epsilon)
    w.check(table)
    return w


# -------------------------------------------------------------- commands


def cmd_table(cfg, args, out: Artifacts):
    t = _table(cfg)
    rep = validate_table(t)
    rows = [
        (i, c.kind.value, c.arclength_start, c.arclength_end, c.sign)
        for i, c in enumerate(t.components)
    ]
    out.csv("table", ("component", "kind", "r_start", "r_end", "sign"), rows)
    out.json("table", {"table": t.to_dict(), "validation": rep.to_dict()})
    return 0


def cmd_orbit(cfg, args, out):
    t = _table(cfg)
    w = _window(cfg, t)
    if args.r is not None:
        X0 = bm.PhasePoint(args.r, args.phi or 0.0)
    else:
        X0 = bm.sample_mu(t, np.random.default_rng([cfg.seed, 0]))
    orb = bm.orbit(t, X0, args.steps, w)
    rows = [
        (m, rec.phase.r, rec.phase.phi, rec.point.position[0], rec.point.position[1], rec.tau,
         rec.point.curvature, int(rec.in_window))
        for m, rec in enumerate(orb)
    ]
    out.csv("orbit", ("m", "r", "phi", "x", "y", "tau", "K", "in_window"), rows)
    out.json("orbit", {"start": {"r": X0.r, "phi": X0.phi}, "collisions": len(orb), "truncated": orb.truncated})
    return 0


def cmd_corridor(cfg, args, out):
    x0 = args.x0 if args.x0 is not None else cfg.epsilon
    ws = C.locate_stable_manifold(cfg.beta, x0, m_max=max(cfg.n_max, 1_000_000))
    tr = C.corridor_trace(cfg.beta, x0, ws + args.offset, cfg.epsilon, max(cfg.n_max, 1_000_000))
    out.csv("corridor_trace", ("m", "x", "w", "z", "Z", "wsq_minus_2xbeta"), tr.to_rows())
    payload = {"x0": x0, "w_star": ws, "offset": args.offset, "exit_type": tr.exit_type.value, "n": tr.n}
    if tr.exit_type is C.ExitType.PASS_THROUGH and tr.n >= 2:
        payload["lemma"] = C.lemma_diagnostics(tr, cfg.beta).to_dict()
        slope, count = acc.wnprime_exponent(cfg.beta, x0)
        payload["lemma"]["exponents"].update({"w_nprime_slope": slope, "traces": count, "predicted": cfg.beta / (2 - cfg.beta)})
    out.json("corridor_report", payload)
    return 0


def _scan(cfg, t, w):
    return cfg.r0 if cfg.r0 is not None else default_scan_r(t, w)


def cmd_cells(cfg, args, out):
    t = _table(cfg)
    w = _window(cfg, t)
    r0 = _scan(cfg, t, w)
    cells = locate_cells(t, w, r0, args.n_hi, n_min=args.n_lo)
    out.csv("cells", CELL_HEADER, ([getattr(c, k) if k != "cell_type" else c.cell_type.value for k in CELL_HEADER] for c in cells))
    fits = {}
    for ct in ("prime", "dprime"):
        try:
            f = fit_cells(cells, (args.n_lo, args.n_hi), next(c.cell_type for c in cells if c.cell_type.value == ct))
            fits[ct] = {"heights": f.heights.to_dict(), "lambda_min": f.expansion.to_dict(), "lambda_h_spread": f.product_spread}
        except (StopIteration, BilliardError) as e:
            fits[ct] = {"error": str(e)}
    es = expansion_sum(cells, args.n_lo)
    out.json("cells", summary(cfg.to_dict(), cfg.seed, {"cells": len(cells), "r0": r0}, None, cfg.beta,
                              {"fits": fits, "expansion_sum": {"n_delta": args.n_lo, "direct": es.direct,
                                                               "tail_bound": es.tail_bound, "total": es.total}}))
    return 0


def cmd_expansion(cfg, args, out):
    t = _table(cfg)
    ctx = acc.Context(cfg.beta, cfg.epsilon, cfg.seed, cfg.workers, half_width=cfg.half_width, closure_slack=cfg.closure_slack)
    fam = acc.split_breakdowns(ctx, cfg.beta, (args.n_lo, args.n_hi))
    reports = {}
    for ct, bds in fam.items():
        out.csv(f"expansion_{ct.value}", BREAKDOWN_HEADER, (b.row() for b in bds))
        reports[ct.value] = split_ratio_check(bds).to_dict()
    out.json("expansion", summary(cfg.to_dict(), cfg.seed, {k.value: len(v) for k, v in fam.items()}, None, cfg.beta,
                                  {"split_ratio": reports}))
    return 0


def cmd_return_tail(cfg, args, out):
    t = _table(cfg)
    w = _window(cfg, t)
    rt = return_tail(t, w, cfg.samples, cfg.n_max, cfg.seed, cfg.workers)
    out.csv("return_tail", ("n", "count", "survival"), rt.rows())
    if args.dump_samples:
        out.csv("return_times", ("sample", "N", "censored"), return_time_rows(t, w, cfg.samples, cfg.n_max, cfg.seed))
    counts = {"samples": rt.samples, "valid": rt.valid, "censored": rt.censored, "discarded": rt.discarded}
    extra = {"fit_error": rt.fit_error} if rt.fit_error else None
    out.json("return_tail", summary(cfg.to_dict(), cfg.seed, counts, rt.fit, cfg.beta, extra))
    return 0


def cmd_correlations(cfg, args, out):
    t = _table(cfg)
    w = _window(cfg, t)
    cs = correlations(t, cfg.orbit_length, args.f, args.g, args.lags, cfg.seed, w)
    out.csv("correlations", ("lag", "value", "stderr"), cs.rows())
    out.json("correlations", summary(cfg.to_dict(), cfg.seed, {"collisions": cs.sample_count, "restarts": cs.restarts},
                                     None, cfg.beta, {"observables": [cs.observable_f, cs.observable_g],
                                                      "mean_f": cs.mean_f, "mean_g": cs.mean_g}))
    return 0


def cmd_verify(cfg, args, out):
    ctx = acc.Context(cfg.beta, cfg.epsilon, cfg.seed, cfg.workers, tail_samples=cfg.samples,
                      correlation_length=cfg.orbit_length, half_width=cfg.half_width, closure_slack=cfg.closure_slack)
    results = []
    for k in args.criteria or sorted(acc.CRITERIA):
        if k not in acc.CRITERIA:
            raise ConfigError(f"unknown criterion {k}")
        r = acc.run_criterion(k, ctx)
        print(r.line(), file=sys.stderr)
        results.append(r)
    out.csv("verify", ("criterion", "name", "status"), ((r.number, r.name, "PASS" if r.passed else "FAIL") for r in results))
    measured = {"a": None, "b": None}
    if ctx._tail is not None and ctx._tail.fit is not None:
        measured["a"] = -ctx._tail.fit.exponent - 1
    for r in results:
        if r.number == 6 and "b_measured" in r.measured:
            measured["b"] = r.measured["b_measured"]
    out.json("verify", {"criteria": [r.to_dict() for r in results], "predicted": predicted_exponents(cfg.beta),
                        "measured": measured, "passed": all(r.passed for r in results)})
    return 0 if all(r.passed for r in results) else EXIT_ACCEPTANCE


COMMANDS = {
    "table": cmd_table,
    "orbit": cmd_orbit,
    "corridor": cmd_corridor,
    "cells": cmd_cells,
    "expansion": cmd_expansion,
    "return-tail": cmd_return_tail,
    "correlations": cmd_correlations,
    "verify": cmd_verify,
}


def _failing_module(e: BaseException) -> str:
    """Innermost package module (other than cli) in the traceback."""
    name = "flatbilliard"
    tb = e.__traceback__
    while tb is not None:
        path = Path(tb.tb_frame.f_code.co_filename)
        if path.parent.name == "flatbilliard" and path.stem not in ("cli", "errors"):
            name = path.stem
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Artifacts(cfg, args.command, args.format)
    try:
        code = COMMANDS[args.command](cfg, args, out)
    except (ConfigError, GeometryError, InvalidParams, OutOfRange) as e:
        print(f"config error ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BilliardError as e:
        print(f"numerical failure in {_failing_module(e)} ({type(e).__name__}): {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    out.emit()
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
