"""Measurements: singularity cells, return-time tails, correlations, fits."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from . import _kernel as K
from . import corridor as C
from .billiard import GRAZE_GUARD, WindowSpec, m_segments
from .errors import BadRange, InsufficientTail, InvalidParams, NonPositiveValues, NumericalError, ResolutionLimit
from .geometry import BetaTable, FlatFamilyParams, build_table
from .hyperbolicity import DEFAULT_B0, excursion_of_state, expansion_of_excursion

BORDER_TOL = 1e-13
CELL_SAMPLES = (0.1, 0.3, 0.5, 0.7, 0.9)
CHUNK = 1_000_000
MIN_TAIL_EVENTS = 100
TAIL_OCTAVES = 3  # a fit window [2^k, 2^(k+3)] spans about a decade
MIN_R2 = 0.98
OBSERVABLES = {"free_path": 0, "cos_phi": 1, "window_indicator": 2, "x_coordinate": 3}


def predicted_exponents(beta: float) -> dict:
    a = (beta + 2) / (beta - 2)
    return {"a": a, "b": a + 2}


# ------------------------------------------------------------------ fitting


class FitModel(str, Enum):
    PURE_POWER = "pure_power"
    POWER_WITH_LOG = "power_with_log"


@dataclass
class DecayFit:
    """y ~ c n^exponent, or y ~ c (ln n)^(1-exponent) n^exponent for power_with_log."""

    exponent: float
    intercept: float
    fit_range: tuple[float, float]
    r_squared: float
    stderr: float
    model: FitModel = FitModel.PURE_POWER
    points: int = 0

    @property
    def a(self) -> float:
        return -self.exponent

    def predict(self, n):
        n = np.asarray(n, dtype=float)
        y = self.intercept + self.exponent * np.log(n)
        if self.model is FitModel.POWER_WITH_LOG:
            y = y + (1 - self.exponent) * np.log(np.log(n))
        return np.exp(y)

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "range": list(self.fit_range),
            "r2": self.r_squared,
            "model": self.model.value,
            "intercept": self.intercept,
            "points": self.points,
        }


def _wls(X: np.ndarray, y: np.ndarray, w: np.ndarray):
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    res = y - X @ coef
    dof = max(len(y) - X.shape[1], 1)
    s2 = float(np.sum(w * res**2) / dof)
    cov = s2 * np.linalg.inv((X * w[:, None]).T @ X)
    ybar = np.average(y, weights=w)
    sst = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - float(np.sum(w * res**2)) / sst if sst > 0 else 1.0
    return coef, cov, min(max(r2, 0.0), 1.0)


def fit_power_law(
    n, y, fit_range: tuple[float, float] | None = None, model="pure_power", stderr=None
) -> DecayFit:
    """Weighted least squares in log-log coordinates.

    ``stderr`` are standard errors of y; they become weights (y/stderr)^2 on log y.
    """
    model = FitModel(model)
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    if fit_range is None:
        fit_range = (float(n.min()), float(n.max()))
    lo, hi = fit_range
    if not lo < hi:
        raise BadRange(f"empty fit range {fit_range}")
    m = (n >= lo) & (n <= hi)
    if m.sum() < 8:
        raise BadRange(f"need at least 8 points in {fit_range}, got {int(m.sum())}")
    if np.any(y[m] <= 0) or np.any(n[m] <= 0):
        raise NonPositiveValues("power-law fits need positive n and y")
    if model is FitModel.POWER_WITH_LOG and n[m].min() <= 1:
        raise BadRange("power_with_log needs n > 1")
    ln, ly = np.log(n[m]), np.log(y[m])
    w = np.ones_like(ln) if stderr is None else (y[m] / np.asarray(stderr, dtype=float)[m]) ** 2
    if model is FitModel.PURE_POWER:
        X = np.column_stack([np.ones_like(ln), ln])
        coef, cov, r2 = _wls(X, ly, w)
        return DecayFit(float(coef[1]), float(coef[0]), (lo, hi), r2, float(math.sqrt(cov[1, 1])), model, int(m.sum()))
    lln = np.log(ln)

    # profile the intercept out for each trial exponent; the model is
    # log y = log c + (1 - e) log log n + e log n
    def rss(e):
        r = ly - (1 - e) * lln - e * ln
        c = np.average(r, weights=w)
        return float(np.sum(w * (r - c) ** 2))

    e0 = float(np.polyfit(ln, ly, 1)[0])
    sol = optimize.minimize_scalar(rss, bracket=(e0 - 1.0, e0 + 1.0), tol=1e-12)
    e = float(sol.x)
    c = float(np.average(ly - (1 - e) * lln - e * ln, weights=w))
    # curvature of the profile gives the standard error
    dof = max(len(ln) - 2, 1)
    z = ln - lln
    zc = z - np.average(z, weights=w)
    se = math.sqrt(sol.fun / dof / float(np.sum(w * zc**2)))
    sst = float(np.sum(w * (ly - np.average(ly, weights=w)) ** 2))
    r2 = 1.0 - sol.fun / sst if sst > 0 else 1.0
    return DecayFit(e, c, (lo, hi), min(max(r2, 0.0), 1.0), se, model, int(m.sum()))


# ------------------------------------------------------------- parallelism


def map_chunks(fn: Callable, tasks: Sequence, workers: int = 1) -> list:
    """fn over tasks, results in task order whatever the worker count."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(chunk)])


def chunk_sizes(samples: int, chunk: int = CHUNK) -> list[int]:
    full, rest = divmod(int(samples), chunk)
    return [chunk] * full + ([rest] if rest else [])


# ------------------------------------------------------------ return tails


def _tail_chunk(task):
    params, eps, n_max, guard, seed, c, size = task
    table = build_table(params)
    lo, cum = m_segments(table, WindowSpec(eps))
    hist = np.zeros(n_max + 2, np.int64)
    uni = chunk_rng(seed, c).random((size, 2))
    K.return_time_batch(table.geo, table.grid_x, table.grid_s, lo, cum, uni, eps, n_max, guard, hist)
    return hist


@dataclass
class ReturnTail:
    hist: np.ndarray  # hist[n] = #{N = n}; hist[0] grazing/lost; hist[-1] censored
    samples: int
    seed: int
    n_max: int
    fit: DecayFit | None = None
    fit_error: str | None = None

    @property
    def censored(self) -> int:
        return int(self.hist[-1])

    @property
    def discarded(self) -> int:
        return int(self.hist[0])

    @property
    def valid(self) -> int:
        return int(self.hist[1:].sum())

    def beyond(self) -> np.ndarray:
        """beyond[n] = #{N > n} for n = 0..n_max (censored orbits included)."""
        h = self.hist[1:]
        return np.concatenate([[h.sum()], h.sum() - np.cumsum(h)[:-1]])

    def survival(self) -> np.ndarray:
        return self.beyond() / self.valid

    def rows(self):
        b = self.beyond()
        for n in range(1, self.n_max + 1):
            if self.hist[n] or b[n]:
                yield n, int(self.hist[n]), b[n] / self.valid


def fit_tail(rt: ReturnTail, octaves: int = TAIL_OCTAVES, min_events: int = MIN_TAIL_EVENTS, bootstrap: int = 200) -> DecayFit:
    """Survival exponent on the farthest dyadic window [2^k, 2^(k+octaves)] that
    has >= min_events orbits beyond 2^k and r^2 >= MIN_R2.

    Points are weighted by their event counts; the reported stderr comes from a
    Poisson bootstrap of the histogram, since cumulative points are correlated.
    """
    beyond = rt.beyond()
    ks = [k for k in range(0, 64) if 2 ** (k + octaves) <= rt.n_max and beyond[2**k] >= min_events]
    if not ks:
        raise InsufficientTail(f"fewer than {min_events} events beyond any window start")

    def one(beyond_counts, lo, hi):
        n = np.arange(lo, hi + 1)
        c = beyond_counts[n].astype(float)
        m = c > 0
        return fit_power_law(n[m], c[m] / rt.valid, (lo, hi), stderr=(c[m] / rt.valid) / np.sqrt(c[m]))

    for k in reversed(ks):
        lo, hi = 2**k, 2 ** (k + octaves)
        try:
            f = one(beyond, lo, hi)
        except (BadRange, NonPositiveValues):
            continue
        if f.r_squared < MIN_R2:
            continue
        rng = np.random.default_rng([rt.seed, 7919])
        h = rt.hist[1:]
        exps = []
        for _ in range(bootstrap):
            hb = rng.poisson(h)
            bb = np.concatenate([[hb.sum()], hb.sum() - np.cumsum(hb)[:-1]])
            try:
                exps.append(one(bb, lo, hi).exponent)
            except (BadRange, NonPositiveValues):
                pass
        if len(exps) > 10:
            f.stderr = float(np.std(exps, ddof=1))
        return f
    raise InsufficientTail("no dyadic window reaches the r^2 threshold")


def return_tail(
    table: BetaTable,
    window: WindowSpec,
    samples: int,
    n_max: int = 100_000,
    seed: int = 0,
    workers: int = 1,
    guard: float = GRAZE_GUARD,
    chunk: int = CHUNK,
    fit: bool = True,
) -> ReturnTail:
    """Monte Carlo histogram of return times N(X) for X ~ mu restricted to M."""
    window.check(table)
    if samples < 1:
        raise InvalidParams("samples must be positive")
    tasks = [
        (table.params, window.epsilon, int(n_max), guard, int(seed), c, s)
        for c, s in enumerate(chunk_sizes(samples, chunk))
    ]
    hists = map_chunks(_tail_chunk, tasks, workers)
    hist = np.sum(hists, axis=0)
    rt = ReturnTail(hist, int(samples), int(seed), int(n_max))
    if fit:
        try:
            rt.fit = fit_tail(rt)
        except InsufficientTail as e:
            rt.fit_error = str(e)
    return rt


def return_time_rows(table, window, samples, n_max=100_000, seed=0, guard=GRAZE_GUARD, chunk=CHUNK):
    """(sample, N, censored) per sample, from the same streams as return_tail.

    Grazing or lost samples have N = -1 and are excluded from the histogram.
    """
    lo, cum = m_segments(table, window)
    i = 0
    for c, size in enumerate(chunk_sizes(samples, chunk)):
        uni = chunk_rng(seed, c).random((size, 2))
        ns = K.return_time_each(table.geo, table.grid_x, table.grid_s, lo, cum, uni, window.epsilon, n_max, guard)
        for n in ns:
            yield i, int(n), int(n > n_max)
            i += 1


def measure_of_m(table: BetaTable, window: WindowSpec) -> float:
    """mu(M) with d(mu) = cos(phi) dr dphi."""
    return 2.0 * (table.total_length - sum(b - a for a, b in table.window_intervals(window.epsilon)))


# ------------------------------------------------------------------ cells


class CellType(str, Enum):
    PRIME = "prime"  # turn-back
    DPRIME = "dprime"  # pass-through


@dataclass
class CellRecord:
    n: int
    cell_type: CellType
    phi_lower: float
    phi_upper: float
    lambda_min: float
    r0: float = 0.0
    sample_phi: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    log_lambda: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    @property
    def height(self) -> float:
        return self.phi_upper - self.phi_lower

    def to_dict(self):
        return {
            "n": self.n,
            "cell_type": self.cell_type.value,
            "phi_lower": self.phi_lower,
            "phi_upper": self.phi_upper,
            "height": self.height,
            "lambda_min": self.lambda_min,
        }


CELL_HEADER = ("n", "cell_type", "phi_lower", "phi_upper", "height", "lambda_min")


class _Scan:
    def __init__(self, table, window, comp, u, guard):
        self.t, self.eps, self.comp, self.u, self.guard = table, window.epsilon, comp, u, guard

    def N(self, phi, cap):
        return K.excursion_length_side(self.t.geo, self.comp, self.u, phi, self.eps, cap, self.guard)


def separatrix_phi(table: BetaTable, window: WindowSpec, r0: float, n_max: int = 1_000_000, guard=GRAZE_GUARD):
    """phi on the scan line r = r0 whose orbit converges to the flat-point orbit.

    Returns (phi_inf, side_above): side_above is the exit side for phi > phi_inf.
    """
    comp, u = table.state_of(r0)
    if not K.is_flat(table.geo, comp) or abs(u) < window.epsilon:
        raise InvalidParams("scan line must sit on a flat curve outside the window")
    x0 = abs(u)
    ws = C.locate_stable_manifold(table.beta, x0, m_max=n_max)
    theta = math.atan(K.flat_slope(x0, table.beta))
    # fold the four symmetric corners onto (bottom, x > 0)
    sgn = (-1.0 if comp == K.LOWER else 1.0) * (1.0 if u > 0 else -1.0)
    phi = sgn * (ws + theta)
    scan = _Scan(table, window, comp, u, guard)
    # polish geometrically on the exit side
    d = 1e-12
    lo, hi = phi - d, phi + d
    s_lo, s_hi = scan.N(lo, n_max)[1], scan.N(hi, n_max)[1]
    while s_lo == s_hi or s_lo == 0 or s_hi == 0:
        d *= 4
        if d > 1e-3:
            raise NumericalError("could not bracket the separatrix on the scan line")
        lo, hi = phi - d, phi + d
        s_lo, s_hi = scan.N(lo, n_max)[1], scan.N(hi, n_max)[1]
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        s = scan.N(mid, n_max)[1]
        if s == 0:
            break
        if s == s_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), s_hi


def _border(scan: _Scan, near: float, far: float, n: int, tol: float) -> float:
    """Boundary between N > n (at `near`) and N <= n (at `far`)."""
    a, c = near, far
    while abs(c - a) > tol:
        m = 0.5 * (a + c)
        if m == a or m == c:
            break
        N, _ = scan.N(m, n)
        if N > n or N < 0:
            a = m
        else:
            c = m
    return 0.5 * (a + c)


def locate_cells(
    table: BetaTable,
    window: WindowSpec,
    r0: float,
    n_max: int,
    n_min: int = 1,
    B0: float = DEFAULT_B0,
    tol: float = BORDER_TOL,
    guard: float = GRAZE_GUARD,
    with_expansion: bool = True,
) -> list[CellRecord]:
    """Cells {N = n}, n_min <= n <= n_max, on the scan line r = r0, both types."""
    window.check(table)
    if n_min < 2:
        raise InvalidParams("n_min must be at least 2")
    comp, u = table.state_of(r0)
    phi_inf, side_above = separatrix_phi(table, window, r0, guard=guard)
    scan = _Scan(table, window, comp, u, guard)
    out = []
    for direction in (1.0, -1.0):
        side = side_above if direction > 0 else -side_above
        ctype = CellType.PRIME if side == 1 else CellType.DPRIME
        near = phi_inf + direction * 1e-15
        edge = direction * (math.pi / 2 - 1e-6)
        # a point beyond the outer border of the n_min - 1 strip
        d = 1e-6
        far = phi_inf + direction * d
        while abs(far) < abs(edge) or far * direction < 0:
            N, _ = scan.N(far, n_min - 1)
            if 0 < N <= n_min - 1:
                break
            d *= 2
            far = phi_inf + direction * d
        if direction * (far - edge) > 0:
            far = edge
        prev = _border(scan, near, far, n_min - 1, tol)
        for n in range(n_min, n_max + 1):
            cur = _border(scan, near, prev, n, tol)
            h = abs(prev - cur)
            if h <= tol:
                prev = cur
                continue
            if h < 10 * np.finfo(float).eps * max(abs(phi_inf), 1.0):
                raise ResolutionLimit(f"cell n={n} narrower than the floating-point resolution")
            lo, hi = min(prev, cur), max(prev, cur)
            rec = CellRecord(n, ctype, lo, hi, math.nan, r0)
            if with_expansion:
                cell_expansion(table, window, rec, B0, guard)
            out.append(rec)
            prev = cur
    out.sort(key=lambda c: (c.n, c.cell_type.value))
    return out


def cell_expansion(table, window, rec: CellRecord, B0=DEFAULT_B0, guard=GRAZE_GUARD) -> float:
    """Fill lambda_min from the CELL_SAMPLES interior points of the cell."""
    comp, u = table.state_of(rec.r0)
    phis, logs = [], []
    for f in CELL_SAMPLES:
        phi = rec.phi_lower + f * rec.height
        exc = excursion_of_state(table, comp, u, phi, window, rec.n + 1, guard)
        if exc is None or exc.n != rec.n:
            continue
        phis.append(phi)
        logs.append(expansion_of_excursion(exc, B0).log_lambda_total)
    rec.sample_phi = np.array(phis)
    rec.log_lambda = np.array(logs)
    rec.lambda_min = float(np.exp(min(logs))) if logs else math.nan
    return rec.lambda_min


def default_scan_r(table: BetaTable, window: WindowSpec, offset: float = 1e-4) -> float:
    """Scan line on the flat curve just outside the window, near (eps, -g(eps))."""
    comp = K.LOWER if table.variant.value == "full" else K.TOP
    x = window.epsilon * (1.0 + offset)
    return table.r_of(comp, x if comp == K.LOWER else -x)


@dataclass
class CellFits:
    heights: DecayFit
    expansion: DecayFit
    product_spread: float  # max / min of Lambda_n * h_n


def fit_cells(cells: Sequence[CellRecord], n_range: tuple[int, int], cell_type: CellType | None = None) -> CellFits:
    """Height and expansion exponents, and the spread of Lambda_n h_n, over n_range."""
    cs = [c for c in cells if (cell_type is None or c.cell_type == cell_type) and n_range[0] <= c.n <= n_range[1]]
    cs = [c for c in cs if np.isfinite(c.lambda_min)]
    n = np.array([c.n for c in cs], dtype=float)
    h = np.array([c.height for c in cs])
    lam = np.array([c.lambda_min for c in cs])
    fh = fit_power_law(n, h, n_range)
    fl = fit_power_law(n, lam, n_range)
    prod = lam * h
    return CellFits(fh, fl, float(prod.max() / prod.min()))


# --------------------------------------------- cell masses via window entries


def window_entry_survival(
    table: BetaTable, window: WindowSpec, ns: Sequence[int], n_x: int = 256, m_max: int = 100_000
) -> np.ndarray:
    """mu(N > n) / mu(M) from the collisions that first enter the window.

    F-hat preserves mu, so the orbits with N > n are measured on their first
    collision inside the window.  At an entry point x1 on a flat curve the
    angles that stay n collisions form an interval around the separatrix and
    the previous collision lies in M above a closed-form angle threshold.
    The four symmetric corners contribute equally.
    """
    if table.variant.value != "full":
        raise InvalidParams("window-entry survival is implemented for the full table")
    beta, eps = table.beta, window.epsilon
    ns = np.asarray(ns, dtype=int)
    top = int(ns.max())
    nodes, weights = np.polynomial.legendre.leggauss(n_x)
    xs = 0.5 * eps * (nodes + 1.0)
    wts = 0.5 * eps * weights
    mass = np.zeros(len(ns))
    for x1, wt in zip(xs, wts):
        slope = K.flat_slope(x1, beta)
        theta = math.atan(slope)
        w_back = math.atan((eps - x1) / (2.0 + x1**beta + eps**beta)) - 2.0 * math.atan(slope)
        try:
            ws = C.locate_stable_manifold(beta, x1, m_max=m_max, tol=1e-14)
        except NumericalError:
            continue
        if ws <= w_back:
            # separatrix entries all come from inside the window
            continue
        lo_prev, hi_prev = 0.0, ws + 0.5 * (math.pi / 2 - ws)
        for j, n in enumerate(ns):
            lo = _strip_edge(beta, x1, ws, lo_prev, n, eps)
            hi = _strip_edge(beta, x1, ws, hi_prev, n, eps)
            lo_prev, hi_prev = lo, hi
            lo_c = max(lo, w_back)
            if hi <= lo_c:
                continue
            ds = math.sqrt(1.0 + slope * slope)
            mass[j] += wt * ds * (math.sin(hi + theta) - math.sin(lo_c + theta))
    return 4.0 * mass / measure_of_m(table, window)


def _strip_edge(beta, x1, ws, far, n, eps, tol=1e-15):
    """Edge of {w : at least n in-window collisions} between ws and `far`."""
    a, c = ws, far
    while abs(c - a) > tol:
        m = 0.5 * (a + c)
        if m == a or m == c:
            break
        if C._count_in_window(beta, x1, m, eps, n) >= n:
            a = m
        else:
            c = m
    return 0.5 * (a + c)


# ------------------------------------------------------------ correlations


@dataclass
class CorrelationSeries:
    observable_f: str
    observable_g: str
    lags: np.ndarray
    values: np.ndarray
    standard_errors: np.ndarray
    sample_count: int
    restarts: int = 0
    mean_f: float = 0.0
    mean_g: float = 0.0

    def rows(self):
        for k, v, s in zip(self.lags, self.values, self.standard_errors):
            yield int(k), float(v), float(s)


def _cross_cov(f: np.ndarray, g: np.ndarray, max_lag: int) -> np.ndarray:
    """C_k = mean((f_{i+k} - fbar)(g_i - gbar)) for k = 0..max_lag via FFT."""
    n = len(f)
    fz = f - f.mean()
    gz = g - g.mean()
    size = 1 << int(math.ceil(math.log2(2 * n)))
    F = np.fft.rfft(fz, size)
    G = np.fft.rfft(gz, size)
    cc = np.fft.irfft(F * np.conj(G), size)[: max_lag + 1]
    return cc / (n - np.arange(max_lag + 1))


def correlations(
    table: BetaTable,
    orbit_length: int,
    f: str = "free_path",
    g: str = "free_path",
    lags: Sequence[int] | int = 30,
    seed: int = 0,
    window: WindowSpec = WindowSpec(),
    burn_in: int = 10_000,
    batches: int = 50,
    guard: float = GRAZE_GUARD,
) -> CorrelationSeries:
    """C_n(f, g) along one long orbit started from a mu-sample."""
    if f not in OBSERVABLES or g not in OBSERVABLES:
        raise InvalidParams(f"observables must be among {sorted(OBSERVABLES)}")
    lags = np.arange(int(lags) + 1) if np.isscalar(lags) else np.asarray(lags, dtype=int)
    max_lag = int(lags.max())
    if orbit_length < batches * max(10 * max_lag, 100):
        raise InvalidParams("orbit too short for the requested lags and batches")
    rng = chunk_rng(seed, 0)
    uni = rng.random((1001, 2))
    cs, us = K.states_of_r_batch(table.geo, table.grid_x, table.grid_s, uni[:, 0] * table.total_length)
    ps = np.arcsin(2.0 * uni[:, 1] - 1.0)
    restart = np.column_stack([cs[1:].astype(float), us[1:], ps[1:]])
    a, b, restarts = K.observable_series(
        table.geo, int(cs[0]), us[0], ps[0], int(orbit_length + burn_in), window.epsilon,
        OBSERVABLES[f], OBSERVABLES[g], guard, restart,
    )
    a, b = a[burn_in:], b[burn_in:]
    full = _cross_cov(a, b, max_lag)[lags]
    size = len(a) // batches
    per = np.array([_cross_cov(a[i * size : (i + 1) * size], b[i * size : (i + 1) * size], max_lag)[lags] for i in range(batches)])
    se = per.std(axis=0, ddof=1) / math.sqrt(batches)
    return CorrelationSeries(f, g, lags, full, se, len(a), int(restarts), float(a.mean()), float(b.mean()))


@dataclass
class MixingReport:
    c0: float
    c_at: float
    lag: int
    noise: float
    decayed: bool
    envelope_const: float
    envelope_ok: bool


def mixing_check(
    series: CorrelationSeries, a: float, lag: int = 30, n_lo: int = 2, n_fit: int = 10,
    fraction: float = 0.1, z: float = 3.0,
) -> MixingReport:
    """Decay and envelope consistency of a correlation series.

    Decay: |C_lag| <= fraction * C_0 + z * noise.  Envelope: the constant of
    const (ln n)^(a+1) / n^a is fitted as the smallest bound on [n_lo, n_fit]
    and must then bound |C_n| on (n_fit, lag] up to z standard errors.
    """
    vals, se, lags = series.values, series.standard_errors, series.lags
    c0 = float(vals[lags == 0][0])
    i = int(np.nonzero(lags == lag)[0][0])
    noise = float(se[i])
    decayed = abs(vals[i]) <= fraction * c0 + z * noise
    shape = lambda n: np.log(n) ** (a + 1) / n**a
    fit = (lags >= n_lo) & (lags <= n_fit)
    const = float(np.max(np.abs(vals[fit]) / shape(lags[fit].astype(float))))
    rest = (lags > n_fit) & (lags <= lag)
    bound = const * shape(lags[rest].astype(float)) + z * se[rest]
    env_ok = bool(np.all(np.abs(vals[rest]) <= bound))
    return MixingReport(c0, float(vals[i]), lag, noise, bool(decayed), const, env_ok)


# ---------------------------------------------------------- expansion sums


@dataclass
class ExpansionSum:
    n_delta: int
    direct: float
    tail_bound: float
    tail_fit: DecayFit | None

    @property
    def total(self) -> float:
        return self.direct + self.tail_bound

    @property
    def holds(self) -> bool:
        return self.total < 1.0


def expansion_sum(cells: Sequence[CellRecord], n_delta: int) -> ExpansionSum:
    """sum over cells with n >= n_delta of 1/lambda_min, plus a power-law tail bound
    for the cells beyond the largest located n."""
    use = [c for c in cells if c.n >= n_delta and np.isfinite(c.lambda_min)]
    if not use:
        raise InvalidParams("no located cells with n >= n_delta")
    direct = float(sum(1.0 / c.lambda_min for c in use))
    n_top = max(c.n for c in cells)
    per_n: dict[int, float] = {}
    for c in cells:
        if np.isfinite(c.lambda_min):
            per_n[c.n] = per_n.get(c.n, 0.0) + 1.0 / c.lambda_min
    nn = np.array(sorted(per_n))
    yy = np.array([per_n[k] for k in nn])
    tail, fit = 0.0, None
    half = nn[nn >= max(n_top // 2, n_delta)]
    if len(half) >= 8:
        fit = fit_power_law(nn, yy, (float(half.min()), float(n_top)))
        e = fit.exponent
        if e < -1:
            # terms decrease, so sum_{n > n_top} <= integral from n_top
            tail = float(math.exp(fit.intercept) * n_top ** (e + 1) / (-(e + 1)))
        else:
            tail = math.inf
    return ExpansionSum(int(n_delta), direct, tail, fit)


def summary(params: dict, seed, counts: dict, fit: DecayFit | None, beta: float, extra: dict | None = None) -> dict:
    out = {
        "params": params,
        "seed": seed,
        "counts": counts,
        "fit": None if fit is None else fit.to_dict(),
        "predicted": predicted_exponents(beta),
    }
    if extra:
        out.update(extra)
    return out
