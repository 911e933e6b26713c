"""Finite-alphabet channel models and single-letter information measures.

A broadcast channel is a collection of stochastic matrices (one per user)
sharing a common input alphabet; the per-user outputs are conditionally
independent given the input.  Everything here is in nats; conversion to bits
is left to display code.

The central solver is :func:`solve_caid`, which maximizes ``min_k I_k(P)``
over input distributions and certifies the optimum via the dual bound
``max_x sum_k lam_k D(W_k(.|x) || P W_k)``.  The certificate makes the
returned value trustworthy to the requested tolerance regardless of which
iterative path produced it.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

ROW_SUM_TOL = 1e-12
JSON_ROW_SUM_TOL = 1e-9
DIST_SUM_TOL = 1e-12
DIRECTION_SUM_TOL = 1e-10


def _validate_rows(rows, tol=ROW_SUM_TOL):
    rows = np.ascontiguousarray(np.asarray(rows, dtype=np.float64))
    if rows.ndim != 2 or rows.shape[0] < 1 or rows.shape[1] < 1:
        raise ValueError("channel matrix must be 2-D and nonempty")
    if np.any(rows < 0):
        raise ValueError("channel matrix has negative entries")
    gap = np.max(np.abs(rows.sum(axis=1) - 1.0))
    if gap > tol:
        raise ValueError(f"channel rows must sum to 1 (max deviation {gap:.3e})")
    return rows


@dataclass(frozen=True)
class Dmc:
    """A discrete memoryless channel; ``rows[x, y] = W(y | x)``."""

    rows: np.ndarray
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rows", _validate_rows(self.rows))

    @property
    def input_size(self):
        return self.rows.shape[0]

    @property
    def output_size(self):
        return self.rows.shape[1]


@dataclass(frozen=True)
class BroadcastChannel:
    """K single-input-alphabet component channels with independent outputs.

    ``blocks`` optionally records a partition of the input alphabet into
    groups (used by the time-sharing constructions); it carries no weight in
    the generic information computations.
    """

    users: tuple
    name: str = ""
    blocks: tuple = None

    def __post_init__(self):
        users = tuple(self.users)
        if len(users) < 1:
            raise ValueError("broadcast channel needs at least one user")
        if not all(isinstance(u, Dmc) for u in users):
            raise TypeError("users must be Dmc instances")
        n_in = users[0].input_size
        if any(u.input_size != n_in for u in users):
            raise ValueError("all users must share the input alphabet size")
        object.__setattr__(self, "users", users)
        if self.blocks is not None:
            blocks = tuple(tuple(int(x) for x in b) for b in self.blocks)
            flat = sorted(x for b in blocks for x in b)
            if flat != list(range(n_in)):
                raise ValueError("blocks must partition the input alphabet")
            object.__setattr__(self, "blocks", blocks)

    @property
    def input_size(self):
        return self.users[0].input_size

    @property
    def K(self):
        return len(self.users)


def check_input_distribution(p, size=None, tol=DIST_SUM_TOL):
    """Validate and return an input distribution as a float64 vector."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("input distribution must be a vector")
    if size is not None and p.shape[0] != size:
        raise ValueError(f"input distribution has length {p.shape[0]}, expected {size}")
    if np.any(p < -tol):
        raise ValueError("input distribution has negative mass")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"input distribution sums to {p.sum()!r}, not 1")
    return np.clip(p, 0.0, None)


def check_direction(v, size=None, tol=DIRECTION_SUM_TOL):
    """Validate a zero-sum perturbation direction."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("direction must be a vector")
    if size is not None and v.shape[0] != size:
        raise ValueError(f"direction has length {v.shape[0]}, expected {size}")
    if abs(v.sum()) > tol:
        raise ValueError(f"direction must be zero-sum (sum={v.sum():.3e})")
    return v


def _divergence_rows(W, q):
    """D(W(.|x) || q) for every input x, with the 0 log 0 = 0 convention."""
    per_xy = rel_entr(W.rows, q[None, :])
    return per_xy.sum(axis=1)


def _mutual_information_unvalidated(p, W):
    # for solver internals only: Newton iterates may sit off the simplex by
    # more than the public entry point tolerates (the sum constraint is one
    # of the equations being solved)
    q = p @ W.rows
    d = _divergence_rows(W, q)
    supp = p > 0
    return float(np.dot(p[supp], d[supp]))


def mutual_information(P, W):
    """I(P, W) in nats."""
    p = check_input_distribution(P, W.input_size)
    q = p @ W.rows
    d = _divergence_rows(W, q)
    supp = p > 0
    if np.any(np.isinf(d[supp])):
        raise ValueError("output with zero marginal probability reached from the support")
    return float(np.dot(p[supp], d[supp]))


def _info_density_moments(P, W):
    """Means/variances of the information density i(X;Y) under P x W.

    Returns (I, cond_var, uncond_var, third_abs, per_x_mean).
    """
    p = check_input_distribution(P, W.input_size)
    q = p @ W.rows
    rows = W.rows
    pos = rows > 0
    if np.any(pos[p > 0] & (q <= 0)[None, :]):
        raise ValueError("output with zero marginal probability reached from the support")
    logq = np.where(q > 0, np.log(np.where(q > 0, q, 1.0)), 0.0)
    i_tab = np.where(pos, np.log(np.where(pos, rows, 1.0)) - logq[None, :], 0.0)
    w_i = np.where(pos, rows * i_tab, 0.0)
    w_i2 = np.where(pos, rows * i_tab * i_tab, 0.0)
    mean_x = w_i.sum(axis=1)
    ex2_x = w_i2.sum(axis=1)
    I = float(np.dot(p, mean_x))
    cond_var = float(np.dot(p, ex2_x - mean_x**2))
    uncond_var = float(np.dot(p, ex2_x) - I * I)
    cent = np.where(pos, np.abs(i_tab - I) ** 3 * rows, 0.0)
    third = float(np.dot(p, cent.sum(axis=1)))
    return I, cond_var, uncond_var, third, mean_x


def conditional_info_variance(P, W):
    """E_X[ Var(i(X;Y) | X) ] under P x W."""
    return _info_density_moments(P, W)[1]


def unconditional_info_variance(P, W):
    """Var(i(X;Y)) under P x W."""
    return _info_density_moments(P, W)[2]


def third_abs_moment(P, W):
    """E[ |i(X;Y) - I(P,W)|^3 ] under P x W."""
    return _info_density_moments(P, W)[3]


# ---------------------------------------------------------------------------
# max-min capacity solver
# ---------------------------------------------------------------------------


def _all_divergence_rows(ch, p):
    """Stack of D(W_k(.|x) || p W_k) over users; shape (K, |X|)."""
    out = np.empty((ch.K, ch.input_size))
    for k, u in enumerate(ch.users):
        q = p @ u.rows
        out[k] = _divergence_rows(u, q)
    return out


def _mutual_informations(ch, p):
    return np.array([mutual_information(p, u) for u in ch.users])


def _eg_ascent(ch, p0, iters, ub_hint):
    """Entropic mirror ascent on min_k I_k with a Polyak-style step."""
    p = p0.copy()
    best_p, best_val = p.copy(), -np.inf
    ub = ub_hint
    for _ in range(iters):
        div = _all_divergence_rows(ch, p)
        Ik = np.array([float(np.dot(p, div[k])) for k in range(ch.K)])
        val = Ik.min()
        if val > best_val:
            best_val, best_p = val, p.copy()
        ub = min(ub, float(np.max(div.mean(axis=0))) if ch.K > 1 else float(div[0].max()))
        active = Ik <= val + 1e-9
        g = div[active].mean(axis=0)
        gap = max(ub - val, 1e-15)
        step = gap / max(np.dot(g - g.mean(), g - g.mean()), 1e-15)
        step = min(step, 10.0)
        lp = np.log(np.clip(p, 1e-300, None)) + step * g
        lp -= lp.max()
        p = np.exp(lp)
        p /= p.sum()
    return best_p, best_val


def _kkt_polish(ch, p0, lam0, support, active, tol, max_iter=60):
    """Damped Newton on the equalized KKT system of max_P min_k I_k.

    Unknowns: p on the support, lam on the active user set, the common
    divergence level c, and the common mutual-information value V.
    Returns (p, lam, value) or None on failure.
    """
    S = np.flatnonzero(support)
    A = np.flatnonzero(active)
    nS, nA = len(S), len(A)
    users = [ch.users[k] for k in A]
    p = p0.copy()
    lam = lam0[A].copy()
    lam = np.clip(lam, 1e-12, None)
    lam /= lam.sum()
    c = None
    V = None

    def residual(p_full, lam, c, V):
        div = _all_divergence_rows(ch, p_full)[A][:, S]  # (nA, nS)
        Ik = np.array([_mutual_information_unvalidated(p_full, u)
                       for u in users])
        r1 = lam @ div - c                     # nS
        r2 = np.array([p_full[S].sum() - 1.0])  # 1
        r3 = Ik - V                            # nA
        r4 = np.array([lam.sum() - 1.0])       # 1
        return np.concatenate([r1, r2, r3, r4]), div, Ik

    # initialize c, V from current point
    div0 = _all_divergence_rows(ch, p)[A][:, S]
    I0 = np.array([_mutual_information_unvalidated(p, u) for u in users])
    c = float(lam @ div0 @ (p[S] / p[S].sum()))
    V = float(I0.mean())

    x = np.concatenate([p[S], lam, [c], [V]])
    for _ in range(max_iter):
        p_full = np.zeros(ch.input_size)
        p_full[S] = x[:nS]
        lam = x[nS : nS + nA]
        c, V = x[-2], x[-1]
        if np.any(x[:nS] <= 0):
            return None
        r, div, Ik = residual(p_full, lam, c, V)
        if np.max(np.abs(r)) < 1e-13:
            break
        # Jacobian
        J = np.zeros((nS + nA + 2, nS + nA + 2))
        # d r1 / d p: -sum_k lam_k W_k(y|x) W_k(y|x') / q_k(y)
        M = np.zeros((nS, nS))
        for idx, u in enumerate(users):
            q = p_full @ u.rows
            Wq = u.rows[S] / np.where(q > 0, q, 1.0)[None, :]
            M += lam[idx] * (Wq @ u.rows[S].T)
        J[:nS, :nS] = -M
        J[:nS, nS : nS + nA] = div.T
        J[:nS, -2] = -1.0
        J[nS, :nS] = 1.0
        for idx, u in enumerate(users):
            q = p_full @ u.rows
            dI = _divergence_rows(u, q)[S] - 1.0
            J[nS + 1 + idx, :nS] = dI
        J[nS + 1 :  nS + 1 + nA, -1] = -1.0
        J[-1, nS : nS + nA] = 1.0
        try:
            dx = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            return None
        # damped update keeping p positive
        t = 1.0
        pref = x[:nS]
        dp = dx[:nS]
        bad = dp < 0
        if np.any(bad):
            t = min(1.0, 0.9 * np.min(pref[bad] / -dp[bad]))
        r_norm = np.max(np.abs(r))
        for _ in range(30):
            x_new = x + t * dx
            p_try = np.zeros(ch.input_size)
            p_try[S] = x_new[:nS]
            lam_try = x_new[nS : nS + nA]
            if np.all(x_new[:nS] > 0):
                r_new, _, _ = residual(p_try, lam_try, x_new[-2], x_new[-1])
                if np.max(np.abs(r_new)) < r_norm * (1 - 0.25 * t) + 1e-15:
                    break
            t *= 0.5
        else:
            return None
        x = x_new
    p_full = np.zeros(ch.input_size)
    p_full[S] = x[:nS]
    lam_full = np.zeros(ch.K)
    lam_full[A] = x[nS : nS + nA]
    return p_full, lam_full, float(x[-1])


def _certify(ch, p, lam):
    """(lower, upper) bounds on max_P min_k I_k from a primal/dual pair."""
    div = _all_divergence_rows(ch, p)
    Ik = np.array([float(np.dot(p, div[k])) for k in range(ch.K)])
    lower = float(Ik.min())
    lam = np.clip(lam, 0.0, None)
    s = lam.sum()
    lam = lam / s if s > 0 else np.full(ch.K, 1.0 / ch.K)
    upper = float(np.max(lam @ div))
    return lower, upper, Ik


def solve_caid(ch, tol=1e-10, restarts=16, eg_iters=250, seed=0):
    """Maximize min_k I_k(P) over input distributions.

    Returns ``(C, pstar)`` with a certified duality gap below ``tol``.
    Emits a warning (not an error) when distinct optimizers are detected.
    """
    if isinstance(ch, Dmc):
        ch = BroadcastChannel(users=(ch,))
    n = ch.input_size
    rng = np.random.default_rng(seed)
    uniform = np.full(n, 1.0 / n)
    ub_hint = min(np.log(n), min(np.log(u.output_size) for u in ch.users))

    candidates = []
    for r in range(restarts):
        if r == 0:
            p0 = uniform.copy()
        else:
            p0 = uniform * np.exp(0.3 * rng.standard_normal(n))
            p0 /= p0.sum()
        p, val = _eg_ascent(ch, p0, eg_iters, ub_hint)
        candidates.append((val, p))
    candidates.sort(key=lambda t: -t[0])

    best = None
    polished = []
    for val, p in candidates[:4] + [candidates[-1]]:
        Ik = _mutual_informations(ch, p)
        vmin = Ik.min()
        active = Ik <= vmin + max(1e-6, 1000 * tol)
        support = p > max(1e-12, tol)
        lam0 = np.where(active, 1.0, 0.0)
        lam0 /= lam0.sum()
        res = _kkt_polish(ch, p, lam0, support, active, tol)
        if res is None:
            # retry with full support / all users active
            res = _kkt_polish(
                ch, np.clip(p, 1e-9, None) / np.clip(p, 1e-9, None).sum(),
                np.full(ch.K, 1.0 / ch.K),
                np.ones(n, dtype=bool), np.ones(ch.K, dtype=bool), tol,
            )
        if res is None:
            continue
        pp, lam, _ = res
        lower, upper, _ = _certify(ch, pp, lam)
        polished.append((lower, upper, pp))
        if best is None or lower > best[0]:
            best = (lower, upper, pp)
        if best is not None and best[1] - best[0] < tol:
            pass  # keep going through the shortlist cheaply; list is small

    if best is None or best[1] - best[0] >= tol:
        # fall back: long equalizing run from the best raw candidate
        p = candidates[0][1]
        lam = np.full(ch.K, 1.0 / ch.K)
        for it in range(20000):
            div = _all_divergence_rows(ch, p)
            Ik = np.array([float(np.dot(p, div[k])) for k in range(ch.K)])
            lower = Ik.min()
            upper = float(np.max(lam @ div))
            if upper - lower < tol:
                best = (lower, upper, p)
                break
            eta = 4.0 / np.sqrt(it + 4.0)
            lam = lam * np.exp(-eta * (Ik - Ik.mean()))
            lam /= lam.sum()
            g = lam @ div
            lp = np.log(np.clip(p, 1e-300, None)) + g - g.max()
            p = np.exp(lp)
            p /= p.sum()
        else:
            best_gap = best[1] - best[0] if best else np.inf
            raise RuntimeError(
                f"capacity solver failed to certify tolerance {tol:.1e} "
                f"(best gap {best_gap:.3e})"
            )

    lower, upper, pstar = best
    C = 0.5 * (lower + upper)

    # multiple-optimizer probe: polished candidates that are optimal but far apart
    opts = [pp for lo, up, pp in polished if lo >= lower - max(10 * tol, 1e-9)]
    for i in range(len(opts)):
        for j in range(i + 1, len(opts)):
            if 0.5 * np.abs(opts[i] - opts[j]).sum() > 1e-5:
                warnings.warn(
                    "capacity-achieving input distribution appears non-unique; "
                    "returning one optimizer",
                    RuntimeWarning,
                    stacklevel=2,
                )
                break
        else:
            continue
        break

    return C, pstar


# ---------------------------------------------------------------------------
# channel analysis record
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelAnalysis:
    """Everything downstream code needs to know about (channel, P*)."""

    channel: BroadcastChannel
    capacity_C: float
    pstar: np.ndarray
    Ck: np.ndarray               # individual user capacities
    Ik_at_pstar: np.ndarray
    Vk: np.ndarray               # conditional information variances at P*
    Uk: np.ndarray               # unconditional information variances at P*
    Tk: np.ndarray               # third absolute moments at P*
    rho_k: np.ndarray            # dispersion ratios under the chosen convention
    V_geomean: float
    divergence_table: np.ndarray  # (K, |X|): D(W_k(.|x) || P* W_k)
    output_caod: tuple            # per-user output distribution P* W_k
    assumption_flags: dict
    dispersion_convention: str = "unconditional"

    @property
    def K(self):
        return self.channel.K

    @property
    def input_size(self):
        return self.channel.input_size


def directional_derivative(an, k, v):
    """Derivative of I_k at P* along the zero-sum direction v."""
    v = check_direction(v, an.input_size)
    return float(np.dot(an.divergence_table[k], v))


def converse_capacity_condition(Ck, C, slack=1e-12):
    """The sorted-capacity requirement behind the converse constant.

    With individual capacities sorted in decreasing order, requires
    ``1/C_i + i/C_K > i/C`` for every i = 1..K-1.
    """
    Cs = np.sort(np.asarray(Ck, dtype=float))[::-1]
    K = len(Cs)
    C = float(C)
    for i in range(1, K):
        if 1.0 / Cs[i - 1] + i / Cs[K - 1] <= i / C + slack:
            return False
    return True


def analyze(ch, tol=1e-10, dispersion_convention="unconditional"):
    """Solve for P* and collect the statistics used by every bound.

    ``dispersion_convention`` selects which variance enters the dispersion
    ratios rho_k: "unconditional" (default; the convention that matches the
    reference numerical values) or "conditional".
    """
    if isinstance(ch, Dmc):
        ch = BroadcastChannel(users=(ch,))
    if dispersion_convention not in ("unconditional", "conditional"):
        raise ValueError("dispersion_convention must be 'unconditional' or 'conditional'")
    C, pstar = solve_caid(ch, tol=tol)
    K = ch.K
    Ik = np.empty(K)
    Vk = np.empty(K)
    Uk = np.empty(K)
    Tk = np.empty(K)
    caods = []
    for k, u in enumerate(ch.users):
        I, cv, uv, t3, _ = _info_density_moments(pstar, u)
        Ik[k], Vk[k], Uk[k], Tk[k] = I, cv, uv, t3
        caods.append(pstar @ u.rows)
    div = _all_divergence_rows(ch, pstar)
    Ck = np.array([solve_caid(BroadcastChannel(users=(u,)), tol=tol)[0] for u in ch.users])

    var = Uk if dispersion_convention == "unconditional" else Vk
    if np.any(var <= 0):
        V_geo = float(np.exp(np.mean(np.log(np.clip(var, 1e-300, None)))))
        rho = np.full(K, np.nan)
    else:
        V_geo = float(np.exp(np.mean(np.log(var))))
        rho = np.sqrt(var / V_geo)

    flags = {
        "pstar_achieves_C_for_all_users": bool(np.max(np.abs(Ik - C)) <= max(1e-8, 100 * tol)),
        "positive_variance": bool(np.all(var > 1e-12)),
        "pstar_strictly_positive": bool(np.all(pstar > 1e-9)),
        "converse_capacity_condition": converse_capacity_condition(Ck, C),
    }

    return ChannelAnalysis(
        channel=ch,
        capacity_C=C,
        pstar=pstar,
        Ck=Ck,
        Ik_at_pstar=Ik,
        Vk=Vk,
        Uk=Uk,
        Tk=Tk,
        rho_k=rho,
        V_geomean=V_geo,
        divergence_table=div,
        output_caod=tuple(caods),
        assumption_flags=flags,
        dispersion_convention=dispersion_convention,
    )


# ---------------------------------------------------------------------------
# constructors and serialization
# ---------------------------------------------------------------------------


def make_bsc(delta):
    """Binary symmetric channel with flip probability delta."""
    d = float(delta)
    if not 0.0 < d < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    return Dmc(rows=np.array([[1 - d, d], [d, 1 - d]]), name=f"bsc({d:g})")


def replicate(dmc, K, name=""):
    """Broadcast channel with K identical copies of one component channel."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return BroadcastChannel(users=tuple(dmc for _ in range(K)), name=name)


def make_common_output_pair(d11, d12, d21, d22):
    """Two users, four inputs in two blocks, shared binary output.

    Input block r in {1, 2} covers inputs {2r-2, 2r-1}; user k sees block r
    through a binary symmetric channel with flip probability ``d_kr``.  Output
    symbol 0 is the "match" of the lower input index of each block: the row
    for the lower input of block r is [1 - d_kr, d_kr].
    """
    ds = (float(d11), float(d12), float(d21), float(d22))
    if not all(0.0 < d < 0.5 for d in ds):
        raise ValueError("all flip probabilities must lie in (0, 0.5)")
    d11, d12, d21, d22 = ds

    def user(dA, dB):
        return Dmc(
            rows=np.array(
                [
                    [1 - dA, dA],
                    [dA, 1 - dA],
                    [1 - dB, dB],
                    [dB, 1 - dB],
                ]
            )
        )

    return BroadcastChannel(
        users=(user(d11, d12), user(d21, d22)),
        name=f"common_output_pair({d11:g},{d12:g},{d21:g},{d22:g})",
        blocks=((0, 1), (2, 3)),
    )


def channel_to_dict(ch):
    out = {
        "name": ch.name,
        "input_alphabet_size": ch.input_size,
        "users": [
            {"name": u.name, "matrix": [[float(v) for v in row] for row in u.rows]}
            for u in ch.users
        ],
    }
    if ch.blocks is not None:
        out["blocks"] = [list(b) for b in ch.blocks]
    return out


def channel_from_dict(d):
    n_in = int(d["input_alphabet_size"])
    users = []
    for entry in d["users"]:
        rows = np.asarray(entry["matrix"], dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] != n_in:
            raise ValueError("user matrix shape inconsistent with input_alphabet_size")
        sums = rows.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > JSON_ROW_SUM_TOL:
            raise ValueError("user matrix rows too far from stochastic to renormalize")
        rows = rows / sums[:, None]
        users.append(Dmc(rows=rows, name=entry.get("name", "")))
    blocks = d.get("blocks")
    return BroadcastChannel(
        users=tuple(users),
        name=d.get("name", ""),
        blocks=tuple(tuple(b) for b in blocks) if blocks else None,
    )


def load_channel(path):
    with open(path, "r", encoding="utf-8") as fh:
        return channel_from_dict(json.load(fh))


def save_channel(ch, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(channel_to_dict(ch), fh, indent=2)
        fh.write("\n")
