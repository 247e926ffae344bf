"""Acceptance criteria, shared by the ``verify`` subcommand and the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from . import billiard as bm
from . import corridor as C
from .errors import BilliardError
from .geometry import FlatFamilyParams, build_table
from .hyperbolicity import B0_SWEEP, excursion_of_state, expansion_of_excursion, split_ratio_check
from .statistics import (
    CellType,
    correlations,
    default_scan_r,
    expansion_sum,
    fit_cells,
    fit_power_law,
    locate_cells,
    cell_expansion,
    mixing_check,
    predicted_exponents,
    return_tail,
    window_entry_survival,
)

# sample sizes and ranges
MAP_SAMPLES = 10_000
INVARIANCE_SAMPLES = 1_000_000
TAIL_SAMPLES = 100_000_000
CORRELATION_LENGTH = 10_000_000
CELL_RANGE = (10, 100)
SPLIT_RANGE = (20, 500)
WNPRIME_RANGE = (50, 2000)
CROSSCHECK_RANGE = (10, 50)
EQUIVALENCE_STEPS = 50
EQUIVALENCE_X0 = 0.3


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    error: str | None = None

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        bits = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items() if not isinstance(v, (list, dict)))
        extra = f" [{self.error}]" if self.error else ""
        return f"{status} criterion {self.number} ({self.name}): {bits}{extra}"

    def to_dict(self):
        return {"number": self.number, "name": self.name, "passed": self.passed, "measured": self.measured, "error": self.error}


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


class Context:
    """Shared, lazily computed inputs so that later criteria reuse earlier runs."""

    def __init__(self, beta=6.0, epsilon=bm.DEFAULT_EPSILON, seed=2024, workers=1, tail_samples=TAIL_SAMPLES,
                 correlation_length=CORRELATION_LENGTH, half_width=0.75, closure_slack=5.0):
        self.beta = float(beta)
        self.seed = int(seed)
        self.workers = int(workers)
        self.tail_samples = int(tail_samples)
        self.correlation_length = int(correlation_length)
        self.half_width = half_width
        self.closure_slack = closure_slack
        self.window = bm.WindowSpec(epsilon)
        self._tables = {}
        self._cells = {}
        self._tail = None

    def table(self, beta=None):
        beta = self.beta if beta is None else float(beta)
        if beta not in self._tables:
            self._tables[beta] = build_table(FlatFamilyParams(beta, self.half_width, self.closure_slack))
        return self._tables[beta]

    def cells(self, beta, n_lo, n_hi):
        key = (float(beta), n_lo, n_hi)
        if key not in self._cells:
            t = self.table(beta)
            self._cells[key] = locate_cells(t, self.window, default_scan_r(t, self.window), n_hi, n_min=n_lo)
        return self._cells[key]

    def tail(self):
        if self._tail is None:
            self._tail = return_tail(self.table(), self.window, self.tail_samples, seed=self.seed, workers=self.workers)
        return self._tail


def _guarded(number, name, fn, ctx):
    try:
        return fn(ctx)
    except BilliardError as e:
        return CriterionResult(number, name, False, {}, f"{type(e).__name__}: {e}")


# ------------------------------------------------------------- criteria


def criterion_1(ctx: Context) -> CriterionResult:
    t = ctx.table()
    rng = np.random.default_rng([ctx.seed, 1])
    cs, us, ps = bm.sample_mu_states(t, rng, MAP_SAMPLES)
    c2, u2, p2, tau, st = K.step_batch(t.geo, cs, us, ps, bm.GRAZE_GUARD)
    c3, u3, p3, _, st3 = K.step_batch(t.geo, c2, u2, -p2, bm.GRAZE_GUARD)
    ok = (st == K.OK) & (st3 == K.OK)
    r0 = np.array([t.r_of(int(c), float(u)) for c, u in zip(cs[ok], us[ok])])
    r3 = np.array([t.r_of(int(c), float(u)) for c, u in zip(c3[ok], u3[ok])])
    dr = np.abs(r3 - r0)
    dr = np.minimum(dr, t.total_length - dr)
    inv_err = float(max(dr.max(), np.abs(-p3[ok] - ps[ok]).max()))
    refl = max(bm.reflection_residual(t, bm.PhasePoint(r, p)) for r, p in zip(r0, ps[ok]))
    top0 = bm.PhasePoint(t.r_of(K.TOP, 0.0), 0.0)
    Y, tau1 = bm.step(t, top0)
    Z, tau2 = bm.step(t, Y)
    p2_err = max(abs(tau1 - 2.0), abs(tau2 - 2.0))
    fixed_err = max(abs(Z.r - top0.r), abs(Z.phi))
    passed = inv_err < 1e-9 and refl < 1e-10 and p2_err < 1e-12 and fixed_err < 1e-12
    return CriterionResult(1, "map correctness", passed, {
        "samples": int(ok.sum()), "grazes": int((~ok).sum()), "inverse_error": inv_err,
        "reflection_residual": float(refl), "period2_tau_error": p2_err, "period2_return_error": fixed_err,
    })


def criterion_2(ctx: Context) -> CriterionResult:
    t = ctx.table()
    eps = ctx.window.epsilon
    rng = np.random.default_rng([ctx.seed, 2])
    cs, us, ps = bm.sample_mu_states(t, rng, INVARIANCE_SAMPLES)
    c2, u2, p2, _, st = K.step_batch(t.geo, cs, us, ps, bm.GRAZE_GUARD)
    ok = st == K.OK
    win = lambda c, u: ((c == K.TOP) | ((c == K.LOWER) & (t.variant.value == "full"))) & (np.abs(u) < eps)
    out, passed = {"samples": int(ok.sum())}, True
    for name, f0, f1 in (
        ("cos_phi", np.cos(ps[ok]), np.cos(p2[ok])),
        ("window_indicator", win(cs[ok], us[ok]).astype(float), win(c2[ok], u2[ok]).astype(float)),
    ):
        d = f1 - f0
        se = float(d.std(ddof=1) / math.sqrt(len(d)))
        z = float(abs(d.mean()) / se) if se > 0 else 0.0
        out[f"{name}_mu"] = float(f0.mean())
        out[f"{name}_pushforward"] = float(f1.mean())
        out[f"{name}_z"] = z
        passed &= z <= 3.0
    return CriterionResult(2, "measure invariance", bool(passed), out)


def corridor_lemma_checks(beta: float, x0: float, x_exit: float, m_max: int = 2_000_000) -> dict:
    ws = C.locate_stable_manifold(beta, x0, m_max=m_max)
    offsets = np.concatenate([np.logspace(-3, -13, 21), [1e-14]])
    traces = [C.corridor_trace(beta, x0, ws + d, x_exit, m_max) for d in offsets]
    traces = [tr for tr in traces if tr.exit_type is C.ExitType.PASS_THROUGH and tr.n >= 100]
    reports = [C.lemma_diagnostics(tr, beta) for tr in traces]
    viol = sum(r.monotone_violations for r in reports)
    drs = [r.difference_ratio for r in reports if r.difference_ratio is not None]
    dr_lo = min(d[0] for d in drs)
    dr_hi = max(d[1] for d in drs)
    L = (beta - 2) * math.sqrt(2)
    tail = reports[-1].z_increment_tail
    return {"traces": len(reports), "violations": viol, "diff_ratio_min": dr_lo, "diff_ratio_max": dr_hi,
            "z_tail": tail, "L": L, "z_tail_over_L": tail / L}


def corridor_equivalence(table, x0: float = EQUIVALENCE_X0, steps: int = EQUIVALENCE_STEPS) -> float:
    """Largest |x| or |w| discrepancy between corridor and geometric orbits."""
    beta = table.beta
    ws = C.locate_stable_manifold(beta, x0)
    w0 = ws + 1e-9
    tr = C.corridor_trace(beta, x0, w0, table.params.half_width, steps)
    c, u, p = C.phase_of_corridor(table, x0, w0, on_top=False)
    cs, us, ps, _, valid = K.orbit_arrays(table.geo, c, u, p, steps + 1, bm.GRAZE_GUARD)
    n = min(valid, len(tr.x))
    if n < steps + 1:
        return math.inf
    wg = np.array([C.corridor_of_phase(table, int(cs[i]), us[i], ps[i])[1] for i in range(n)])
    return float(max(np.abs(us[:n] - tr.x[:n]).max(), np.abs(wg - tr.w[:n]).max()))


def criterion_3(ctx: Context, betas=(3.0, 4.0, 6.0)) -> CriterionResult:
    out, passed = {}, True
    x0 = ctx.window.epsilon
    for b in betas:
        r = corridor_lemma_checks(b, x0, x0)
        eq = corridor_equivalence(ctx.table(b))
        tag = f"b{b:g}"
        out[f"{tag}_violations"] = r["violations"]
        out[f"{tag}_diff_ratio"] = f"[{r['diff_ratio_min']:.4g},{r['diff_ratio_max']:.4g}]"
        out[f"{tag}_z_tail_over_L"] = r["z_tail_over_L"]
        out[f"{tag}_equivalence"] = eq
        passed &= (
            r["violations"] == 0
            and 1.0 <= r["diff_ratio_min"]
            and r["diff_ratio_max"] <= 5.0
            and 0.5 <= r["z_tail_over_L"] <= 1.05
            and eq < 1e-9
        )
    return CriterionResult(3, "corridor lemmas", bool(passed), out)


def _sweep_expansion_slopes(ctx, cells, n_range, ctype):
    t = ctx.table()
    slopes = []
    for B0 in B0_SWEEP:
        sub = [c for c in cells if c.cell_type == ctype and n_range[0] <= c.n <= n_range[1]]
        lam = []
        for c in sub:
            lam.append(_lambda_min(ctx, t, c, B0))
        slopes.append(fit_power_law([c.n for c in sub], lam, n_range).exponent)
    return slopes


def _lambda_min(ctx, t, c, B0):
    comp, u = t.state_of(c.r0)
    logs = []
    for phi in c.sample_phi:
        exc = excursion_of_state(t, comp, u, float(phi), ctx.window, c.n + 1)
        logs.append(expansion_of_excursion(exc, B0).log_lambda_total)
    return math.exp(min(logs))


def criterion_4(ctx: Context) -> CriterionResult:
    b = predicted_exponents(ctx.beta)["b"]
    cells = ctx.cells(ctx.beta, *CELL_RANGE)
    out, passed = {"b_predicted": b}, True
    for ctype in (CellType.PRIME, CellType.DPRIME):
        f = fit_cells(cells, CELL_RANGE, ctype)
        sweep = _sweep_expansion_slopes(ctx, cells, CELL_RANGE, ctype)
        spread = float(max(sweep) - min(sweep))
        k = ctype.value
        out[f"{k}_height_slope"] = f.heights.exponent
        out[f"{k}_lambda_slope"] = f.expansion.exponent
        out[f"{k}_lambda_h_spread"] = f.product_spread
        out[f"{k}_B0_slope_change"] = spread
        passed &= (
            abs(f.heights.exponent + b) <= 0.4
            and abs(f.expansion.exponent - b) <= 0.4
            and f.product_spread < 10.0
            and spread < 0.1
        )
    return CriterionResult(4, "scaling exponents", bool(passed), out)


def criterion_5(ctx: Context) -> CriterionResult:
    a = predicted_exponents(ctx.beta)["a"]
    rt = ctx.tail()
    out = {"samples": rt.samples, "censored": rt.censored, "discarded": rt.discarded, "target": -(a + 1)}
    if rt.fit is None:
        return CriterionResult(5, "return tail", False, out, rt.fit_error)
    f = rt.fit
    out.update({"exponent": f.exponent, "stderr": f.stderr, "fit_lo": f.fit_range[0], "fit_hi": f.fit_range[1],
                "r2": f.r_squared, "tail_events": int(rt.beyond()[int(f.fit_range[0])])})
    ns = np.arange(CROSSCHECK_RANGE[0], CROSSCHECK_RANGE[1] + 1)
    s_cells = window_entry_survival(ctx.table(), ctx.window, ns)
    s_mc = rt.survival()[ns]
    ratio = s_mc / s_cells
    out["crosscheck_ratio_min"] = float(ratio.min())
    out["crosscheck_ratio_max"] = float(ratio.max())
    passed = (
        abs(f.exponent + a + 1) <= 0.3
        and out["tail_events"] >= 100
        and 0.5 <= ratio.min()
        and ratio.max() <= 2.0
    )
    return CriterionResult(5, "return tail", bool(passed), out)


def height_exponent_on(ctx, n_lo, n_hi):
    """-slope of the geometric-mean cell height over [n_lo, n_hi], with stderr."""
    cells = ctx.cells(ctx.beta, n_lo, n_hi)
    by_n = {}
    for c in cells:
        by_n.setdefault(c.n, {})[c.cell_type] = c.height
    ns = sorted(k for k, v in by_n.items() if len(v) == 2)
    h = [math.sqrt(by_n[k][CellType.PRIME] * by_n[k][CellType.DPRIME]) for k in ns]
    f = fit_power_law(ns, h, (n_lo, n_hi))
    return -f.exponent, f.stderr


def wnprime_exponent(beta, x0, n_range=WNPRIME_RANGE):
    fam = C.separatrix_family(beta, x0, x0, np.logspace(-2, -14, 61))
    slope, _, count = C.w_nprime_exponent(fam, n_range)
    return slope, count


def criterion_6(ctx: Context) -> CriterionResult:
    rt = ctx.tail()
    out = {}
    if rt.fit is None:
        return CriterionResult(6, "exponent chain", False, out, rt.fit_error)
    lo, hi = (int(v) for v in rt.fit.fit_range)
    b_meas, b_se = height_exponent_on(ctx, lo, hi)
    a1 = -rt.fit.exponent
    se = math.sqrt(b_se**2 + rt.fit.stderr**2)
    diff = b_meas - a1
    slope, count = wnprime_exponent(ctx.beta, ctx.window.epsilon)
    target = ctx.beta / (2 - ctx.beta)
    out.update({"b_measured": b_meas, "a_plus_1_measured": a1, "difference": diff, "combined_stderr": se,
                "n_lo": lo, "n_hi": hi, "wnprime_slope": slope, "wnprime_target": target, "wnprime_traces": count})
    passed = abs(diff - 1.0) <= se and abs(slope - target) <= 0.1 * abs(target)
    return CriterionResult(6, "exponent chain", bool(passed), out)


def criterion_7(ctx: Context, betas=(4.0, 6.0)) -> CriterionResult:
    out, passed = {}, True
    for b in betas:
        es = expansion_sum(ctx.cells(b, *CELL_RANGE), CELL_RANGE[0])
        out[f"b{b:g}_sum"] = es.total
        out[f"b{b:g}_tail_bound"] = es.tail_bound
        passed &= es.holds
    return CriterionResult(7, "expansion sum", bool(passed), out)


def split_breakdowns(ctx, beta, n_range=SPLIT_RANGE):
    t = ctx.table(beta)
    cells = locate_cells(t, ctx.window, default_scan_r(t, ctx.window), n_range[1], n_min=n_range[0], with_expansion=False)
    comp, u = t.state_of(cells[0].r0)
    fam = {CellType.PRIME: [], CellType.DPRIME: []}
    for c in cells:
        exc = excursion_of_state(t, comp, u, 0.5 * (c.phi_lower + c.phi_upper), ctx.window, c.n + 1)
        if exc is not None and exc.n == c.n:
            fam[c.cell_type].append(expansion_of_excursion(exc))
    return fam


def criterion_8(ctx: Context) -> CriterionResult:
    out, passed = {}, True
    for ctype, bds in split_breakdowns(ctx, ctx.beta).items():
        rep = split_ratio_check(bds)
        out[f"{ctype.value}_min_ratio"] = rep.min_ratio
        out[f"{ctype.value}_loglog_slope"] = rep.loglog_slope
        passed &= rep.passed
    return CriterionResult(8, "split ratio", bool(passed), out)


def criterion_9(ctx: Context) -> CriterionResult:
    a = predicted_exponents(ctx.beta)["a"]
    source = "predicted"
    if ctx._tail is not None and ctx._tail.fit is not None:
        a = -ctx._tail.fit.exponent - 1
        source = "criterion 5"
    cs = correlations(ctx.table(), ctx.correlation_length, "free_path", "free_path", 30, seed=ctx.seed, window=ctx.window)
    rep = mixing_check(cs, a)
    out = {"C0": rep.c0, "C30": rep.c_at, "noise30": rep.noise, "a_used": a, "a_source": source,
           "envelope_const": rep.envelope_const, "restarts": cs.restarts}
    return CriterionResult(9, "mixing", bool(rep.decayed and rep.envelope_ok), out)


CRITERIA = {
    1: ("map correctness", criterion_1),
    2: ("measure invariance", criterion_2),
    3: ("corridor lemmas", criterion_3),
    4: ("scaling exponents", criterion_4),
    5: ("return tail", criterion_5),
    6: ("exponent chain", criterion_6),
    7: ("expansion sum", criterion_7),
    8: ("split ratio", criterion_8),
    9: ("mixing", criterion_9),
}


def run_criterion(number: int, ctx: Context) -> CriterionResult:
    name, fn = CRITERIA[number]
    return _guarded(number, name, fn, ctx)


def run_all(ctx: Context, numbers=None) -> list[CriterionResult]:
    return [run_criterion(k, ctx) for k in (numbers or sorted(CRITERIA))]
