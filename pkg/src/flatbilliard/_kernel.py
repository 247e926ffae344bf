"""Compiled core: boundary evaluation, ray casting and orbit loops.

A table is passed to every kernel as three arrays: ``geo`` (packed scalar
parameters, layout below), ``gx``/``gs`` (arc-length grid of the flat curve
on [0, X]).  A collision state is the triple ``(comp, u, phi)`` where ``u``
is the x-coordinate on flat curves and the floor, and the polar angle around
the arc center on closing arcs.
"""

import math

import numpy as np
from numba import njit

GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(10)

# geo layout
BETA = 0
HALF_WIDTH = 1
SLACK = 2
RADIUS = 3
ALPHA = 4
FLOOR = 5
VARIANT = 6
FLAT_LEN = 7  # arc length of a flat curve from x=0 to x=X
LEN0 = 8  # 8..11 component lengths
OFF0 = 12  # 12..15 component r-offsets
TOTAL = 16
GEO_SIZE = 17

# component slots; slot 0 is the bottom flat curve (full) or the floor (half)
LOWER = 0
RIGHT_ARC = 1
TOP = 2
LEFT_ARC = 3

OK = 0
GRAZING = 1
LOST = 2

HALF_PI = 0.5 * math.pi
FLAT_POINT_TOL = 1e-12


@njit(cache=True)
def abspow(x, p):
    ax = abs(x)
    if ax == 0.0:
        return 0.0
    return math.exp(p * math.log(ax))


@njit(cache=True)
def flat_slope(x, beta):
    """d/dx of |x|^beta."""
    s = beta * abspow(x, beta - 1.0)
    return s if x >= 0.0 else -s


@njit(cache=True)
def flat_curvature(x, beta):
    ax = abs(x)
    if ax < 1e-300:
        return 0.0
    sl = beta * abspow(ax, beta - 1.0)
    return beta * (beta - 1.0) * abspow(ax, beta - 2.0) / (1.0 + sl * sl) ** 1.5


@njit(cache=True)
def _speed(t, beta):
    sl = beta * abspow(t, beta - 1.0)
    return math.sqrt(1.0 + sl * sl)


@njit(cache=True)
def _gl_panel(a, b, beta):
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    acc = 0.0
    for j in range(GL_NODES.shape[0]):
        acc += GL_WEIGHTS[j] * _speed(mid + half * GL_NODES[j], beta)
    return half * acc


@njit(cache=True)
def build_arclength_grid(beta, half_width, n):
    gx = np.linspace(0.0, half_width, n + 1)
    gs = np.zeros(n + 1)
    for k in range(n):
        gs[k + 1] = gs[k] + _gl_panel(gx[k], gx[k + 1], beta)
    return gx, gs


@njit(cache=True)
def flat_arclength(geo, gx, gs, x):
    """Signed arc length along y=|x|^beta+1 from x=0 to x."""
    beta = geo[BETA]
    ax = abs(x)
    n = gx.shape[0] - 1
    h = gx[1] - gx[0]
    k = int(ax / h)
    if k >= n:
        k = n - 1
    s = gs[k] + _gl_panel(gx[k], ax, beta)
    return s if x >= 0.0 else -s


@njit(cache=True)
def flat_x_of_arclength(geo, gx, gs, s):
    beta = geo[BETA]
    a = abs(s)
    n = gx.shape[0] - 1
    k = np.searchsorted(gs, a) - 1
    if k < 0:
        k = 0
    if k > n - 1:
        k = n - 1
    lo = gx[k]
    hi = gx[k + 1]
    x = lo + (a - gs[k]) / (gs[k + 1] - gs[k]) * (hi - lo)
    for _ in range(30):
        d = (flat_arclength(geo, gx, gs, x) - a) / _speed(x, beta)
        xn = x - d
        # bracket safeguard
        if xn < lo:
            xn = 0.5 * (x + lo)
        elif xn > hi:
            xn = 0.5 * (x + hi)
        if abs(xn - x) <= 1e-17 + 1e-16 * abs(x):
            x = xn
            break
        x = xn
    return x if s >= 0.0 else -x


@njit(cache=True)
def is_flat(geo, comp):
    if comp == TOP:
        return True
    return comp == LOWER and geo[VARIANT] == 0.0


@njit(cache=True)
def arc_center_x(geo, comp):
    c = geo[HALF_WIDTH] + geo[SLACK]
    return c if comp == RIGHT_ARC else -c


@njit(cache=True)
def frame(geo, comp, u):
    """Position, unit tangent (direction of increasing r), inward normal, curvature."""
    beta = geo[BETA]
    if comp == TOP or (comp == LOWER and geo[VARIANT] == 0.0):
        if abs(u) < FLAT_POINT_TOL:
            # limiting frame at the flat point
            gp = 0.0
            inv = 1.0
            k = 0.0
        else:
            gp = flat_slope(u, beta)
            inv = 1.0 / math.sqrt(1.0 + gp * gp)
            k = flat_curvature(u, beta)
        if comp == TOP:
            py = 1.0 + abspow(u, beta)
            tx, ty = -inv, -gp * inv
        else:
            py = -(1.0 + abspow(u, beta))
            tx, ty = inv, -gp * inv
        return u, py, tx, ty, -ty, tx, k
    if comp == LOWER:
        return u, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0
    cx = arc_center_x(geo, comp)
    r = geo[RADIUS]
    c = math.cos(u)
    s = math.sin(u)
    return cx + r * c, r * s, s, -c, c, s, 1.0 / r


@njit(cache=True)
def _arc_theta_start(geo, comp):
    a = geo[ALPHA]
    if comp == RIGHT_ARC:
        return math.pi if geo[VARIANT] == 1.0 else math.pi + a
    return a


@njit(cache=True)
def local_arclength(geo, gx, gs, comp, u):
    if comp == TOP:
        return geo[FLAT_LEN] - flat_arclength(geo, gx, gs, u)
    if comp == LOWER:
        if geo[VARIANT] == 0.0:
            return geo[FLAT_LEN] + flat_arclength(geo, gx, gs, u)
        return u + geo[FLOOR]
    return geo[RADIUS] * (_arc_theta_start(geo, comp) - u)


@njit(cache=True)
def r_of_state(geo, gx, gs, comp, u):
    r = geo[OFF0 + comp] + local_arclength(geo, gx, gs, comp, u)
    if r >= geo[TOTAL]:
        r -= geo[TOTAL]
    if r < 0.0:
        r += geo[TOTAL]
    return r


@njit(cache=True)
def state_of_r(geo, gx, gs, r):
    comp = 3
    for c in range(3):
        if r < geo[OFF0 + c + 1]:
            comp = c
            break
    loc = r - geo[OFF0 + comp]
    if loc < 0.0:
        loc = 0.0
    if loc > geo[LEN0 + comp]:
        loc = geo[LEN0 + comp]
    if comp == TOP:
        return comp, flat_x_of_arclength(geo, gx, gs, geo[FLAT_LEN] - loc)
    if comp == LOWER:
        if geo[VARIANT] == 0.0:
            return comp, flat_x_of_arclength(geo, gx, gs, loc - geo[FLAT_LEN])
        return comp, loc - geo[FLOOR]
    return comp, _arc_theta_start(geo, comp) - loc / geo[RADIUS]


# ----------------------------------------------------------------- ray casting


@njit(cache=True)
def _flat_h(sigma, beta, x0, y0, vx, vy, t):
    return sigma * (y0 + t * vy) - 1.0 - abspow(x0 + t * vx, beta)


@njit(cache=True)
def _flat_dh(sigma, beta, x0, vx, vy, t):
    return sigma * vy - flat_slope(x0 + t * vx, beta) * vx


@njit(cache=True)
def flat_hit(geo, sigma, x0, y0, vx, vy):
    """First entry of the ray into the region beyond the curve y = sigma*g(x).

    h(t) = sigma*y(t) - g(x(t)) is concave along the ray, so the entry root is
    bracketed between the domain start and the maximizer of h, where Newton
    iterates approach it monotonically from the left.
    """
    beta = geo[BETA]
    xw = geo[HALF_WIDTH]
    if abs(vx) < 1e-300:
        if abs(x0) > xw or sigma * vy <= 0.0:
            return np.inf
        t = (1.0 + abspow(x0, beta) - sigma * y0) / (sigma * vy)
        return t if t > 0.0 else np.inf
    t1 = (-xw - x0) / vx
    t2 = (xw - x0) / vx
    ta = min(t1, t2)
    tb = max(t1, t2)
    if ta < 0.0:
        ta = 0.0
    if tb <= ta:
        return np.inf
    c = sigma * vy / (beta * vx)
    xs = abspow(c, 1.0 / (beta - 1.0))
    if c < 0.0:
        xs = -xs
    tm = (xs - x0) / vx
    if tm < ta:
        tm = ta
    if tm > tb:
        tm = tb
    hm = _flat_h(sigma, beta, x0, y0, vx, vy, tm)
    if hm < 0.0:
        return np.inf
    ha = _flat_h(sigma, beta, x0, y0, vx, vy, ta)
    if ha >= 0.0:
        return np.inf
    a = ta
    b = tm
    for _ in range(200):
        dh = _flat_dh(sigma, beta, x0, vx, vy, a)
        if dh > 0.0:
            tn = a - ha / dh
            if not (tn > a and tn < b):
                tn = 0.5 * (a + b)
        else:
            tn = 0.5 * (a + b)
        hn = _flat_h(sigma, beta, x0, y0, vx, vy, tn)
        if hn < 0.0:
            step = tn - a
            a = tn
            ha = hn
            if step <= 1e-16 * (1.0 + abs(a)):
                break
        else:
            b = tn
            if hn == 0.0:
                return tn
        if b - a <= 2e-16 * (1.0 + abs(b)):
            break
    # pick the end with the smaller residual
    hb = _flat_h(sigma, beta, x0, y0, vx, vy, b)
    return a if abs(ha) <= abs(hb) else b


@njit(cache=True)
def arc_hit(geo, comp, x0, y0, vx, vy):
    cx = arc_center_x(geo, comp)
    r = geo[RADIUS]
    dx = x0 - cx
    b = vx * dx + vy * y0
    if b >= 0.0:
        return np.inf
    c = dx * dx + y0 * y0 - r * r
    disc = b * b - c
    if disc <= 0.0:
        return np.inf
    q = -b + math.sqrt(disc)
    t = c / q
    if t <= 1e-13:
        return np.inf
    hx = x0 + t * vx
    hy = y0 + t * vy
    xw = geo[HALF_WIDTH]
    tol = 1e-12
    if comp == RIGHT_ARC:
        if hx > xw + tol:
            return np.inf
    else:
        if hx < -xw - tol:
            return np.inf
    if geo[VARIANT] == 1.0 and hy < -tol:
        return np.inf
    return t


@njit(cache=True)
def floor_hit(geo, x0, y0, vx, vy):
    if vy >= 0.0:
        return np.inf
    t = -y0 / vy
    if t <= 1e-13:
        return np.inf
    hx = x0 + t * vx
    if abs(hx) > geo[FLOOR] + 1e-12:
        return np.inf
    return t


@njit(cache=True)
def _param_at(geo, comp, hx, hy):
    if comp == TOP or comp == LOWER:
        return hx
    cx = arc_center_x(geo, comp)
    th = math.atan2(hy, hx - cx)
    if comp == RIGHT_ARC and th < 0.0:
        th += 2.0 * math.pi
    return th


@njit(cache=True)
def step(geo, comp, u, phi, guard):
    """One application of the collision map.

    Returns (comp, u, phi, tau, status).
    """
    if abs(phi) > HALF_PI - guard:
        return comp, u, phi, 0.0, GRAZING
    px, py, tx, ty, nx, ny, _ = frame(geo, comp, u)
    cp = math.cos(phi)
    sp = math.sin(phi)
    vx = cp * nx + sp * tx
    vy = cp * ny + sp * ty
    best = np.inf
    bc = -1
    for c in range(4):
        if c == comp:
            continue
        if c == TOP:
            t = flat_hit(geo, 1.0, px, py, vx, vy)
        elif c == LOWER:
            if geo[VARIANT] == 0.0:
                t = flat_hit(geo, -1.0, px, py, vx, vy)
            else:
                t = floor_hit(geo, px, py, vx, vy)
        else:
            t = arc_hit(geo, c, px, py, vx, vy)
        if t < best:
            best = t
            bc = c
    if bc < 0:
        return comp, u, phi, 0.0, LOST
    u2 = _param_at(geo, bc, px + best * vx, py + best * vy)
    qx, qy, tx2, ty2, nx2, ny2, _ = frame(geo, bc, u2)
    dot = vx * nx2 + vy * ny2
    wx = vx - 2.0 * dot * nx2
    wy = vy - 2.0 * dot * ny2
    phi2 = math.atan2(wx * tx2 + wy * ty2, wx * nx2 + wy * ny2)
    tau = math.hypot(qx - px, qy - py)
    if abs(phi2) > HALF_PI - guard:
        return bc, u2, phi2, tau, GRAZING
    return bc, u2, phi2, tau, OK


@njit(cache=True)
def in_window(geo, comp, u, eps):
    return is_flat(geo, comp) and abs(u) < eps


@njit(cache=True)
def return_time(geo, comp, u, phi, eps, n_max, guard):
    """Steps until the orbit is back outside the window; (n, status).

    status OK with n <= n_max, or n = n_max + 1 for a censored orbit.
    """
    for n in range(1, n_max + 1):
        comp, u, phi, _, st = step(geo, comp, u, phi, guard)
        if st != OK:
            return n, st
        if not in_window(geo, comp, u, eps):
            return n, OK
    return n_max + 1, OK


@njit(cache=True)
def orbit_arrays(geo, comp, u, phi, n, guard):
    """Run n steps, recording the state before each step and its free path.

    Returns arrays (comp, u, phi, tau) of length n and the number of valid
    entries (shorter when a grazing collision truncated the orbit).
    """
    cs = np.empty(n, np.int64)
    us = np.empty(n)
    ps = np.empty(n)
    ts = np.empty(n)
    for m in range(n):
        cs[m] = comp
        us[m] = u
        ps[m] = phi
        comp, u, phi, tau, st = step(geo, comp, u, phi, guard)
        ts[m] = tau
        if st != OK:
            return cs, us, ps, ts, m
    return cs, us, ps, ts, n


@njit(cache=True)
def excursion_arrays(geo, comp, u, phi, eps, n_max, guard):
    """States X_0..X_{N-1} of an excursion from M back to M, plus X_N.

    Returns (comp, u, phi, tau) arrays of length N+1 (tau[N] is 0), N, status.
    """
    cs = np.empty(n_max + 1, np.int64)
    us = np.empty(n_max + 1)
    ps = np.empty(n_max + 1)
    ts = np.zeros(n_max + 1)
    cs[0] = comp
    us[0] = u
    ps[0] = phi
    for n in range(1, n_max + 1):
        comp, u, phi, tau, st = step(geo, comp, u, phi, guard)
        ts[n - 1] = tau
        cs[n] = comp
        us[n] = u
        ps[n] = phi
        if st != OK:
            return cs[: n + 1], us[: n + 1], ps[: n + 1], ts[: n + 1], n, st
        if not in_window(geo, comp, u, eps):
            return cs[: n + 1], us[: n + 1], ps[: n + 1], ts[: n + 1], n, OK
    return cs, us, ps, ts, n_max + 1, OK


# ------------------------------------------------------------ batch kernels


@njit(cache=True)
def sample_states_in_m(geo, gx, gs, seg_lo, seg_cum, uni):
    """Map uniforms (k, 2) to mu-distributed states restricted to M.

    ``seg_lo``/``seg_cum`` describe the allowed r-intervals: interval j starts
    at r = seg_lo[j] and covers cumulative allowed length seg_cum[j]..seg_cum[j+1].
    """
    k = uni.shape[0]
    cs = np.empty(k, np.int64)
    us = np.empty(k)
    ps = np.empty(k)
    total = seg_cum[-1]
    for i in range(k):
        ell = uni[i, 0] * total
        j = np.searchsorted(seg_cum, ell, side="right") - 1
        if j > seg_lo.shape[0] - 1:
            j = seg_lo.shape[0] - 1
        r = seg_lo[j] + (ell - seg_cum[j])
        c, uu = state_of_r(geo, gx, gs, r)
        cs[i] = c
        us[i] = uu
        ps[i] = math.asin(2.0 * uni[i, 1] - 1.0)
    return cs, us, ps


@njit(cache=True)
def return_time_batch(geo, gx, gs, seg_lo, seg_cum, uni, eps, n_max, guard, hist):
    """Accumulate return times of mu|M samples into ``hist``.

    hist[n] counts N = n for 1 <= n <= n_max; hist[n_max + 1] censored;
    hist[0] grazing/lost samples.
    """
    cs, us, ps = sample_states_in_m(geo, gx, gs, seg_lo, seg_cum, uni)
    for i in range(cs.shape[0]):
        n, st = return_time(geo, cs[i], us[i], ps[i], eps, n_max, guard)
        if st != OK:
            hist[0] += 1
        else:
            hist[n] += 1


@njit(cache=True)
def return_time_each(geo, gx, gs, seg_lo, seg_cum, uni, eps, n_max, guard):
    cs, us, ps = sample_states_in_m(geo, gx, gs, seg_lo, seg_cum, uni)
    out = np.empty(cs.shape[0], np.int64)
    for i in range(cs.shape[0]):
        n, st = return_time(geo, cs[i], us[i], ps[i], eps, n_max, guard)
        out[i] = n if st == OK else -1
    return out


@njit(cache=True)
def step_batch(geo, cs, us, ps, guard):
    k = cs.shape[0]
    c2 = np.empty(k, np.int64)
    u2 = np.empty(k)
    p2 = np.empty(k)
    t2 = np.empty(k)
    st = np.empty(k, np.int64)
    for i in range(k):
        c2[i], u2[i], p2[i], t2[i], st[i] = step(geo, cs[i], us[i], ps[i], guard)
    return c2, u2, p2, t2, st


@njit(cache=True)
def states_of_r_batch(geo, gx, gs, rs):
    k = rs.shape[0]
    cs = np.empty(k, np.int64)
    us = np.empty(k)
    for i in range(k):
        cs[i], us[i] = state_of_r(geo, gx, gs, rs[i])
    return cs, us


@njit(cache=True)
def observe(geo, comp, u, phi, tau, eps, which):
    if which == 0:
        return tau
    if which == 1:
        return math.cos(phi)
    if which == 2:
        return 1.0 if in_window(geo, comp, u, eps) else 0.0
    px, _, _, _, _, _, _ = frame(geo, comp, u)
    return px


@njit(cache=True)
def observable_series(geo, comp, u, phi, n, eps, which_a, which_b, guard, restart_uni):
    """Long orbit recording two observables per collision.

    On a grazing step the orbit restarts from the next state in
    ``restart_uni`` (already mu-distributed states, shape (k, 3)).
    Returns (a, b, restarts).
    """
    a = np.empty(n)
    b = np.empty(n)
    restarts = 0
    for m in range(n):
        c2, u2, p2, tau, st = step(geo, comp, u, phi, guard)
        while st != OK:
            if restarts >= restart_uni.shape[0]:
                return a[:m], b[:m], restarts
            comp = int(restart_uni[restarts, 0])
            u = restart_uni[restarts, 1]
            phi = restart_uni[restarts, 2]
            restarts += 1
            c2, u2, p2, tau, st = step(geo, comp, u, phi, guard)
        a[m] = observe(geo, comp, u, phi, tau, eps, which_a)
        b[m] = observe(geo, comp, u, phi, tau, eps, which_b)
        comp, u, phi = c2, u2, p2
    return a, b, restarts


@njit(cache=True)
def excursion_length_side(geo, comp, u, phi, eps, n_max, guard):
    """(N, side) for a start in M: side +1 if X_N has the sign of x(X_0), -1 if
    the opposite sign, 0 if censored (N = n_max + 1).  N = -1 on grazing/loss."""
    x0 = frame(geo, comp, u)[0]
    for n in range(1, n_max + 1):
        comp, u, phi, tau, st = step(geo, comp, u, phi, guard)
        if st != OK:
            return -1, 0
        if not in_window(geo, comp, u, eps):
            x = frame(geo, comp, u)[0]
            return n, (1 if x * x0 > 0.0 else -1)
    return n_max + 1, 0
