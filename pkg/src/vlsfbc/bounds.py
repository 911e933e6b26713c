"""Nonasymptotic achievability and converse bounds for common-message
variable-length stop-feedback codes.

Achievability: random codebooks with per-user threshold stopping.  With
threshold gamma and a send-nothing probability q, the expected decision time
is (1 - q) * E[max_k tau_k] and the error satisfies

    eps <= max_k { q + (1 - q) (M - 1) P[tau_k >= taubar_k] }        (tight)
    eps <= q + (1 - q) (M - 1) exp(-gamma)                           (simple)

where tau_k is the passage time of the true-codeword information density and
taubar_k that of an independent codeword.  The tight form requires the
independent-codeword walk to be independent of the true one, which holds
exactly when its conditional increment law does not depend on the
conditioning output (verified numerically, never assumed).

Converse: for identical symmetric users with uniform reference output
measure, any code with error eps and M messages satisfies, for every
auxiliary eta in (0, 1),

    E[len] >= lce_g(eps + eta),   g(e) = sum_t (1 - min(1, v_t + e)^K)

with v_t the running-maximum crossing curve of the mismatched information
density at threshold log M + log eta, and lce_g the lower convex envelope.
g is concave between its kinks e_t = 1 - v_t, so the envelope is exactly the
lower hull of g sampled at the kinks (the uniform grid points requested via
``eps_grid_spec`` are added but can never cut below that hull).  All
truncations weaken the bound (they can only lower the computed envelope).
"""

import math
import warnings
from bisect import bisect_left
from dataclasses import dataclass

import numpy as np

from . import cache as _cache
from . import walks as wk
from .channel import BroadcastChannel

TIGHT_GAMMA_MAX = 600.0  # beyond this the paired-walk DP nears underflow; use simple
_SUMMAND_TOL = 1e-14
_VT_TARGET = 1e-15


@dataclass(frozen=True)
class AchievabilityPoint:
    ell: float
    eps: float
    logM: float  # nats
    gamma: float
    q: float
    mode: str
    expected_max: float = np.nan
    err_bound: float = np.nan


@dataclass(frozen=True)
class ConversePoint:
    ell_lower_bound: float
    logM: float  # nats
    eps: float
    eta: float
    envelope_vertices: tuple = ()


# ---------------------------------------------------------------------------
# achievability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WalkSuite:
    """Stopping-law bundle for one threshold gamma."""

    gamma: float
    expected_max: float
    err_bound: float
    order_probs: tuple  # per-user upper bounds on P[tau_k >= taubar_k], or None
    mode: str


def _users_identical(ch):
    first = ch.users[0].rows
    return all(np.array_equal(u.rows, first) for u in ch.users[1:])


def build_walk_suite(an, gamma, mode="simple", tail_tol=1e-12, h=1e-4,
                     cache_dir=None):
    """Passage-time laws and derived quantities at threshold gamma."""
    ch = an.channel
    shared = _users_identical(ch)
    users = ch.users[:1] if shared else ch.users
    tau_laws = []
    order = []
    for u in users:
        law = wk.increment_law(an.pstar, u, "achievability")
        tl = wk.cached_stopping_law(law, gamma, tail_tol=tail_tol, h=h,
                                    bias="lower", cache_dir=cache_dir)
        tau_laws.append(tl)
        if mode == "tight":
            ind = wk.increment_law(an.pstar, u, "independent_codeword")
            if ind.independence_gap is None or ind.independence_gap > 1e-12:
                raise ValueError(
                    "tight mode needs the independent-codeword increment law to "
                    "be invariant across conditioning outputs "
                    f"(gap={ind.independence_gap!r}); use mode='simple'"
                )
            if gamma > TIGHT_GAMMA_MAX:
                order.append(math.exp(-gamma) if gamma < 745 else 0.0)
            else:
                bl = wk.cached_stopping_law(ind, gamma, tail_tol=tail_tol, h=h,
                                            bias="upper", cache_dir=cache_dir)
                p = wk.crossing_order_prob(tl, bl)
                # exp(-gamma) also bounds P[tau >= taubar] via P[taubar < inf]
                order.append(min(p, math.exp(-gamma)))
    if shared:
        tau_laws = tau_laws * ch.K
        order = order * ch.K if order else order
    value, err = wk.expected_max_stopping(tau_laws)
    return WalkSuite(gamma=float(gamma), expected_max=value, err_bound=err,
                     order_probs=tuple(order) if mode == "tight" else None,
                     mode=mode)


def achievability_eps(gamma, q, M=None, laws_context=None, logM=None):
    """Upper bound on the error probability at threshold gamma.

    Pass ``laws_context`` (a WalkSuite with order_probs) for the tight
    pairing bound; without it the simple union bound with exp(-gamma) is
    used.  ``M`` may be huge; pass ``logM`` (nats) instead to stay in the
    log domain.
    """
    if not 0 <= q <= 1:
        raise ValueError("q must lie in [0, 1]")
    if logM is None:
        if M is None or M < 1:
            raise ValueError("provide M >= 1 or logM")
        logM = math.log(M)
    if logM < 0:
        raise ValueError("logM must be >= 0")
    if logM == 0:
        return q if q < 1 else 1.0  # single message: only the q-coin can err
    logM1 = logM + math.log1p(-math.exp(-logM)) if logM < 36 else logM
    if laws_context is not None and laws_context.order_probs is not None:
        worst = max(laws_context.order_probs)
    else:
        worst = math.exp(-gamma) if gamma < 745 else 0.0
    if worst <= 0:
        return min(1.0, q)
    val = q + (1 - q) * math.exp(min(logM1 + math.log(worst), 700))
    return min(1.0, val)


def _log_best_M(eps, q, worst_prob):
    """log of the largest integer M with q + (1-q)(M-1) worst <= eps.

    Returns -inf when even M = 1 fails (q >= eps is still fine: M = 1 gives
    error bound q; we require q < eps so some message can be sent)."""
    if q >= eps:
        return -math.inf
    if worst_prob <= 0:
        return math.inf
    logB = math.log(eps - q) - math.log1p(-q) - math.log(worst_prob)
    if logB < 0:
        return 0.0  # only M = 1 certifiable
    if logB < 36.7:  # under 2^53, take the exact integer floor
        B = math.floor(math.exp(logB))
        return math.log(B + 1)
    return np.logaddexp(logB, 0.0)


def achievability_curve(an, eps, ell_grid, mode="simple", gamma_grid_spec=None,
                        tail_tol=1e-12, h=1e-4, cache_dir=None):
    """Best certifiable log M for each target expected length in ell_grid.

    For each candidate threshold gamma: q = max(0, 1 - ell / E[max tau])
    meets the length budget, and M is the largest integer keeping the error
    bound at or below eps.  The threshold is optimized per ell over a log
    grid plus golden-section refinement (passage laws are memoized across
    targets).
    """
    if mode not in ("simple", "tight"):
        raise ValueError("mode must be 'simple' or 'tight'")
    ells = np.asarray(ell_grid, dtype=np.float64)
    if np.any(ells <= 0):
        raise ValueError("expected lengths must be positive")
    C = an.capacity_C
    if gamma_grid_spec is None:
        n_pts, lo, hi = 96, 0.3 * C * ells.min(), 2.0 * C * ells.max()
    else:
        n_pts, lo, hi = gamma_grid_spec
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), int(n_pts)))

    suites = {}

    def suite(g):
        g = float(g)
        if g not in suites:
            suites[g] = build_walk_suite(an, g, mode=mode, tail_tol=tail_tol,
                                         h=h, cache_dir=cache_dir)
        return suites[g]

    def logM_at(g, ell):
        s = suite(g)
        E = s.expected_max + s.err_bound
        q = max(0.0, 1.0 - ell / E)
        if s.order_probs is not None:
            worst = max(s.order_probs)
        else:
            worst = math.exp(-g) if g < 745 else 0.0
        return _log_best_M(eps, q, worst), q, s

    out = []
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    for ell in ells:
        vals = [logM_at(g, ell)[0] for g in grid]
        i = int(np.argmax(vals))
        if not np.isfinite(vals[i]):
            out.append(AchievabilityPoint(ell=float(ell), eps=eps, logM=-math.inf,
                                          gamma=math.nan, q=math.nan, mode=mode))
            continue
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, len(grid) - 1)]
        # golden-section maximization of logM over gamma in [a, b]
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc = logM_at(c, ell)[0]
        fd = logM_at(d, ell)[0]
        while b - a > 1e-3 * max(1.0, a):
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = logM_at(c, ell)[0]
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = logM_at(d, ell)[0]
        cands = [(vals[i], grid[i]), (fc, c), (fd, d)]
        best_val, best_g = max(cands, key=lambda t: t[0])
        lM, q, s = logM_at(best_g, ell)
        out.append(AchievabilityPoint(
            ell=float(ell), eps=eps, logM=float(lM), gamma=float(best_g),
            q=float(q), mode=mode, expected_max=s.expected_max,
            err_bound=s.err_bound,
        ))
    return out


# ---------------------------------------------------------------------------
# converse
# ---------------------------------------------------------------------------


def converse_g(eps_prime, v, K, summand_tol=_SUMMAND_TOL):
    """g(eps') = sum_t (1 - min(1, v_t + eps')^K), truncated conservatively.

    The sum stops once a summand falls below summand_tol (v is
    nondecreasing, so all later summands are at least as small); dropping
    nonnegative terms only weakens the resulting length lower bound.
    """
    if not 0 <= eps_prime:
        raise ValueError("eps' must be nonnegative")
    if eps_prime >= 1:
        return 0.0
    v = np.asarray(v, dtype=np.float64)
    s = np.minimum(1.0, v + eps_prime) ** K
    summand = 1.0 - s
    idx = np.nonzero(summand < summand_tol)[0]
    end = idx[0] if len(idx) else len(summand)
    return float(summand[:end].sum())


def _lower_hull(xs, ys):
    """Vertices of the lower convex hull of a sorted point set."""
    pts = []
    for x, y in zip(xs, ys):
        pts.append((x, y))
        while len(pts) >= 3:
            (x1, y1), (x2, y2), (x3, y3) = pts[-3:]
            # middle point above or on the chord -> drop it
            if (y2 - y1) * (x3 - x1) >= (y3 - y1) * (x2 - x1):
                del pts[-2]
            else:
                break
    return pts


def _hull_eval(vertices, x):
    xs = [p[0] for p in vertices]
    i = bisect_left(xs, x)
    if i < len(xs) and xs[i] == x:
        return vertices[i][1]
    if i == 0:
        return vertices[0][1]
    if i == len(xs):
        return vertices[-1][1]
    (x1, y1), (x2, y2) = vertices[i - 1], vertices[i]
    t = (x - x1) / (x2 - x1)
    return y1 + t * (y2 - y1)


def _is_symmetric_dmc(rows):
    """Rows are permutations of one multiset, and so are columns."""
    r0 = np.sort(rows[0])
    if any(not np.allclose(np.sort(r), r0, rtol=0, atol=1e-12) for r in rows):
        return False
    c0 = np.sort(rows[:, 0])
    return all(np.allclose(np.sort(rows[:, j]), c0, rtol=0, atol=1e-12)
               for j in range(rows.shape[1]))


def _require_symmetric_identical(an):
    ch = an.channel
    if not _users_identical(ch):
        raise ValueError(
            "the converse evaluation requires all users to see the same "
            "channel; this one has non-identical users"
        )
    if not _is_symmetric_dmc(ch.users[0].rows):
        raise ValueError(
            "the converse evaluation requires a symmetric channel (rows and "
            "columns permutations of each other) so the crossing curve is "
            "input-independent"
        )


def _converse_law(an):
    ch = an.channel
    n = ch.input_size
    uniform = np.full(n, 1.0 / n)
    return wk.increment_law(uniform, ch.users[0], "converse_uniform_Q")


def _vt_curve(law, thr, cache_dir=None):
    """Running-max crossing curve at threshold thr, extended until the
    remaining non-crossing mass is below _VT_TARGET."""
    if cache_dir is not None:
        key = _cache.content_key(
            "vtcurve", law.atoms.tobytes(), law.probs.tobytes(),
            repr(float(thr)), repr(_VT_TARGET),
        )
        hit = _cache.cache_get(cache_dir, key)
        if hit is not None:
            return np.frombuffer(hit, dtype=np.float64).copy()
    drift = law.drift
    T = int(math.ceil(1.3 * thr / drift)) + 400
    while True:
        v = wk.running_max_crossing(law, thr, T)
        if 1.0 - v[-1] < _VT_TARGET or T >= 2**22:
            break
        T *= 2
    if cache_dir is not None:
        _cache.cache_put(cache_dir, key, v.tobytes())
    return v


def _kink_hull(v, K, eps_grid_spec=None):
    """Exact lower convex envelope of g on [0, 1] as hull vertices.

    g is concave between kinks at 1 - v_t, so the hull of the kink samples
    (plus the endpoints and any extra requested grid) is the exact envelope.
    """
    if eps_grid_spec is None:
        n_grid = 512
    else:
        n_grid = int(eps_grid_spec)
    kinks = np.unique(1.0 - v)
    kinks = kinks[(kinks > 0.0) & (kinks < 1.0)]
    es = np.unique(np.concatenate([np.linspace(0.0, 1.0, n_grid), kinks]))
    # vectorized g over the grid, chunked to bound memory
    gs = np.empty(len(es))
    chunk = max(1, int(4e6 / max(len(v), 1)))
    for i in range(0, len(es), chunk):
        e = es[i : i + chunk]
        gs[i : i + chunk] = (1.0 - np.minimum(1.0, v[:, None] + e[None, :]) ** K).sum(axis=0)
    return _lower_hull(es, gs)


def converse_ell(an, M=None, eps=None, eta=None, logM=None, eps_grid_spec=None,
                 cache_dir=None):
    """Lower bound on E[len] for error eps, M messages, auxiliary eta.

    Identical symmetric users only (refuses otherwise): the crossing curve
    v_t is then input-sequence independent and the multi-user bound is the
    envelope of g(e) = sum_t (1 - min(1, v_t + e)^K) at e = eps + eta.
    """
    _require_symmetric_identical(an)
    if eps is None or eta is None:
        raise ValueError("eps and eta are required")
    if not (0 < eta < 1) or not (0 <= eps < 1):
        raise ValueError("need 0 <= eps < 1 and 0 < eta < 1")
    if logM is None:
        if M is None or M < 1:
            raise ValueError("provide M >= 1 or logM")
        logM = math.log(M)
    thr = logM + math.log(eta)
    law = _converse_law(an)
    K = an.K
    if thr <= 0:
        # the threshold is crossed at time zero: v_t = 1 and the bound is void
        return ConversePoint(ell_lower_bound=0.0, logM=logM, eps=eps, eta=eta,
                             envelope_vertices=((0.0, 0.0), (1.0, 0.0)))
    v = _vt_curve(law, thr, cache_dir=cache_dir)
    hull = _kink_hull(v, K, eps_grid_spec)
    val = _hull_eval(hull, eps + eta) if eps + eta < 1 else 0.0
    return ConversePoint(ell_lower_bound=float(max(0.0, val)), logM=float(logM),
                         eps=eps, eta=eta, envelope_vertices=tuple(hull))


class _ConverseTables:
    """Shared DP/hull tables over a fine threshold lattice."""

    def __init__(self, an, eps, cache_dir=None, eps_grid_spec=None,
                 fine_step=1e-3):
        _require_symmetric_identical(an)
        self.an = an
        self.eps = eps
        self.K = an.K
        self.law = _converse_law(an)
        self.cache_dir = cache_dir
        self.eps_grid_spec = eps_grid_spec
        self.fine_step = fine_step
        self._v = {}
        self._hull = {}

    def thr(self, i):
        return i * self.fine_step

    def hull(self, i):
        if i not in self._hull:
            if i not in self._v:
                self._v[i] = _vt_curve(self.law, self.thr(i), self.cache_dir)
            self._hull[i] = _kink_hull(self._v[i], self.K, self.eps_grid_spec)
        return self._hull[i]

    def L(self, i, eta):
        e = self.eps + eta
        if e >= 1:
            return 0.0
        if self.thr(i) <= 0:
            return 0.0
        return _hull_eval(self.hull(i), e)


def converse_curve(an, eps, ell_grid, eta_grid_spec=None, eps_grid_spec=None,
                   cache_dir=None, refine_tol=1e-3):
    """Converse log M bound for each expected length in ell_grid.

    For each eta, B_eta(ell) = sup{log M : ell_lb(M, eta) <= ell}; every eta
    yields a valid converse, so the curve reports min_eta B_eta.  The
    reported value is the first log M shown infeasible at the bisection
    resolution (a valid, slightly weaker converse).  Threshold DPs are shared
    across eta, ell, and K via a fine lattice on thr = log M + log eta.
    """
    if eta_grid_spec is None:
        etas = np.exp(np.linspace(math.log(1e-6), math.log(0.3), 32))
    else:
        n_e, lo_e, hi_e = eta_grid_spec
        etas = np.exp(np.linspace(math.log(lo_e), math.log(hi_e), int(n_e)))
    etas = etas[etas + eps < 1]
    if len(etas) == 0:
        raise ValueError("every eta in the grid has eps + eta >= 1")
    ells = np.asarray(ell_grid, dtype=np.float64)
    C = an.capacity_C
    tabs = _ConverseTables(an, eps, cache_dir=cache_dir,
                           eps_grid_spec=eps_grid_spec)
    step = tabs.fine_step
    coarse_sep = max(1, int(round(0.5 / step)))
    i_lo = max(1, int(0.05 * C * ells.min() / step))
    i_hi = int((1.3 * C * ells.max() + 25.0) / step) + coarse_sep
    coarse = list(range(i_lo, i_hi + 1, coarse_sep))

    out = []
    for ell in ells:
        # coarse bracket per eta without new DPs beyond the shared lattice
        brackets = []
        for eta in etas:
            lo, hi = None, None
            a, b = 0, len(coarse) - 1
            if tabs.L(coarse[a], eta) > ell:
                # even the smallest threshold is infeasible
                brackets.append((eta, None, coarse[a]))
                continue
            while tabs.L(coarse[b], eta) <= ell:
                # extend the lattice upward (rare)
                nxt = coarse[-1] + coarse_sep
                coarse.append(nxt)
                b = len(coarse) - 1
            # binary search over coarse indices
            while b - a > 1:
                m = (a + b) // 2
                if tabs.L(coarse[m], eta) <= ell:
                    a = m
                else:
                    b = m
            brackets.append((eta, coarse[a], coarse[b]))
        # upper bounds at coarse resolution; prune etas that cannot win
        ub = min(tabs.thr(hi) - math.log(eta) for eta, lo, hi in brackets)
        best = math.inf
        best_eta = None
        best_hull_i = None
        for eta, lo, hi in sorted(
            brackets, key=lambda t: tabs.thr(t[2]) - math.log(t[0])
        ):
            if lo is None:
                cand = tabs.thr(hi) - math.log(eta)
                if cand < best:
                    best, best_eta, best_hull_i = cand, eta, hi
                continue
            if tabs.thr(lo) - math.log(eta) >= min(best, ub):
                continue  # cannot improve on the current minimum
            a, b = lo, hi
            while b - a > max(1, int(round(refine_tol / step))):
                m = (a + b) // 2
                if tabs.L(m, eta) <= ell:
                    a = m
                else:
                    b = m
            cand = tabs.thr(b) - math.log(eta)
            if cand < best:
                best, best_eta, best_hull_i = cand, eta, b
        out.append(ConversePoint(
            ell_lower_bound=float(tabs.L(best_hull_i, best_eta)),
            logM=float(best), eps=eps, eta=float(best_eta),
            envelope_vertices=tuple(tabs.hull(best_hull_i))
            if tabs.thr(best_hull_i) > 0 else (),
        ))
    return out


# ---------------------------------------------------------------------------
# small-t exact converse oracle
# ---------------------------------------------------------------------------


def converse_Lt_bruteforce(ch, M, eta, t, eps_vec=None, max_x_seqs=1_000_000):
    """Exact max over x^t of prod_k min{1, P[max_n i_k >= thr] + eps_k}.

    Enumerates all |X|^t input sequences (and all |Y|^t output sequences per
    user), so it is only usable for tiny t; serves as an independent oracle
    for the DP-based curves.  Returns (value, best_x_seq, per_user_probs).
    """
    if isinstance(ch, BroadcastChannel):
        users = ch.users
    else:
        users = (ch,)
    nx = users[0].input_size
    if nx**t > max_x_seqs:
        raise ValueError(f"|X|^t = {nx**t} exceeds {max_x_seqs}")
    K = len(users)
    eps_vec = np.zeros(K) if eps_vec is None else np.asarray(eps_vec, float)
    thr = math.log(M) + math.log(eta)
    if t == 0:
        # the empty prefix: the walk sits at 0, so crossing means thr <= 0
        p0 = 1.0 if thr <= 0 else 0.0
        val = float(np.prod([min(1.0, p0 + e) for e in eps_vec]))
        return val, (), (p0,) * K

    best = -1.0
    best_x = None
    best_probs = None
    # per-user output-sequence tensors
    ny_list = [u.output_size for u in users]
    y_seqs = [np.stack(np.meshgrid(*([np.arange(ny)] * t), indexing="ij"),
                       axis=-1).reshape(-1, t) for ny in ny_list]
    logW = []
    logQ = []
    for u in users:
        with np.errstate(divide="ignore"):
            logW.append(np.log(u.rows))
        logQ.append(math.log(u.output_size))
    for code in range(nx**t):
        xs = []
        c = code
        for _ in range(t):
            xs.append(c % nx)
            c //= nx
        xs = np.array(xs[::-1])
        probs = []
        for k, u in enumerate(users):
            ys = y_seqs[k]
            # increments (Nseq, t): log W(y_i | x_i) + log |Y|
            incs = logW[k][xs[None, :], ys] + logQ[k]
            run = np.cumsum(incs, axis=1)
            crossed = (run >= thr - 1e-12).any(axis=1)
            w = np.exp(logW[k][xs[None, :], ys].sum(axis=1))
            probs.append(float(w[crossed].sum()))
        val = float(np.prod([min(1.0, p + e) for p, e in zip(probs, eps_vec)]))
        if val > best:
            best = val
            best_x = tuple(int(x) for x in xs)
            best_probs = tuple(probs)
    return best, best_x, best_probs
