"""Second-order constants and normal approximations.

The expected-length expansion of optimal variable-length stop-feedback codes
has the form  log M ~ C l' - sqrt(V l') Xi + o(sqrt(l)),  l' = l / (1 - eps),
where V is the geometric mean of the per-user dispersions and the constant Xi
depends on the direction of the bound:

* achievability: Xi_a = min over zero-sum directions v of
      E[ max_k ( dI_k(v) + rho_k Z_k ) ],   Z_k iid standard normal,
  with dI_k the directional derivative of user k's mutual information at the
  compound-capacity-achieving input and rho_k = sqrt(V_k / V);

* converse: Xi_c = E[ max_k H_k ] where the max has CDF
      F(w) = max_v prod_k Phi( (w + dI_k(v)) / rho_k ),
  the maximizer hatv(w) being unique by strict log-concavity on the span of
  the centered divergence rows (the kernel of all dI_k is irrelevant and
  pinned to zero).

Everything happens in the reduced coordinates z with v = B z, where B is an
orthonormal basis of that span: gradients/Hessians are exact, and B z is
automatically zero-sum.  All integrals carry explicit Gaussian tail
certificates rather than silent truncation.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize
from scipy.special import log_ndtr
from scipy.stats import norm

from .channel import mutual_information

_SQRT2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# the Gaussian hazard-type helper psi = phi / Phi and friends
# ---------------------------------------------------------------------------


def psi(x):
    """phi(x) / Phi(x), computed stably in log space (vectorized)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-0.5 * x * x - math.log(_SQRT2PI) - log_ndtr(x))
    return out if out.ndim else float(out)


def psi_prime(x):
    """Derivative of psi; lies in (-1, 0)."""
    x = np.asarray(x, dtype=np.float64)
    p = psi(x)
    out = -p * (x + p)
    return out if np.ndim(x) else float(out)


def psi_inv(y, tol=1e-13, max_iter=200):
    """Inverse of the strictly decreasing psi on (0, inf).

    Safeguarded Newton on log psi(x) - log y (the log derivative is
    -(x + psi(x)), available in closed form)."""
    if not y > 0:
        raise ValueError("psi_inv requires y > 0")
    logy = math.log(y)
    # bracket: psi(x) ~ -x as x -> -inf, psi(x) ~ phi(x) as x -> +inf
    lo, hi = -max(2.0, 2.0 * y), 2.0
    while psi(lo) < y:
        lo *= 2.0
        if lo < -1e8:
            break
    while psi(hi) > y:
        hi *= 2.0
        if hi > 1e8:
            break
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        lp = -0.5 * x * x - math.log(_SQRT2PI) - float(log_ndtr(x))
        g = lp - logy
        if abs(g) < tol:
            break
        if g > 0:  # psi(x) > y -> x too small
            lo = x
        else:
            hi = x
        dg = -(x + psi(x))
        step = g / dg if dg != 0 else 0.0
        xn = x - step
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        x = xn
    return float(x)


# ---------------------------------------------------------------------------
# reduced coordinates
# ---------------------------------------------------------------------------


def _require_regular(an):
    flags = an.assumption_flags
    needed = ("pstar_achieves_C_for_all_users", "positive_variance",
              "pstar_strictly_positive")
    bad = [k for k in needed if not flags.get(k, False)]
    if bad:
        raise ValueError(
            "channel analysis violates the regularity assumptions: "
            + ", ".join(bad)
        )


def _reduced_basis(an, tol=1e-10):
    """Orthonormal basis B of span{centered divergence rows} and the
    coefficient rows c_k with dI_k(B z) = c_k . z."""
    D = an.divergence_table  # (K, n)
    Dc = D - D.mean(axis=1, keepdims=True)
    if np.max(np.abs(Dc)) < tol:
        n = D.shape[1]
        return np.zeros((n, 0)), np.zeros((D.shape[0], 0))
    u, s, vt = np.linalg.svd(Dc, full_matrices=False)
    keep = s > tol * s[0]
    B = vt[keep].T  # (n, m)
    cks = Dc @ B  # (K, m)
    return B, cks


# ---------------------------------------------------------------------------
# expected maximum of independent Gaussians
# ---------------------------------------------------------------------------


def emax_gaussians(means, sds, tail_z=10.0):
    """E[max_k X_k] for independent X_k ~ N(means[k], sds[k]^2).

    Quadrature over a finite window plus closed-form Gaussian bounds for both
    tails (each below 1e-12 at the default window)."""
    mu = np.asarray(means, dtype=np.float64)
    sd = np.asarray(sds, dtype=np.float64)
    if mu.shape != sd.shape or mu.ndim != 1 or len(mu) == 0:
        raise ValueError("means and sds must be matching nonempty vectors")
    if np.any(sd <= 0):
        raise ValueError("standard deviations must be positive")
    lo = float(np.min(mu - tail_z * sd))
    hi = float(np.max(mu + tail_z * sd))
    a = float(np.max(mu))

    def F(t):
        return np.prod(norm.cdf((t - mu) / sd))

    up, _ = quad(lambda t: 1.0 - F(t), a, hi, epsabs=1e-12, limit=200)
    dn, _ = quad(F, lo, a, epsabs=1e-12, limit=200)
    # tail certificates: int_hi^inf (1 - F) <= sum_k sd_k [phi(z) - z Q(z)],
    # int_-inf^lo F <= min_k sd_k [phi(z) - z Q(z)]  (monotone bounds)
    zs = (hi - mu) / sd
    right = float(np.sum(sd * (norm.pdf(zs) - zs * norm.sf(zs))))
    zl = (mu - lo) / sd
    left = float(np.min(sd * (norm.pdf(zl) - zl * norm.sf(zl))))
    return float(a + up - dn + 0.5 * (right - left)), right + left


# ---------------------------------------------------------------------------
# achievability constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XiAResult:
    value: float
    v_opt: np.ndarray  # zero-sum direction in input space
    z_opt: np.ndarray  # reduced coordinates
    quad_err: float
    converged: bool = True
    start_spread: float = 0.0  # scatter of the multistart final values


def xi_a(an, n_starts=8, seed=0):
    """Achievability constant: minimize E[max_k (dI_k(v) + rho_k Z_k)].

    The objective is convex in v (expectation of a max of affine functions of
    (v, Z)), so multi-start Nelder-Mead plus a final directed polish is
    reliable; the reduced dimension is at most K - 1.  All starts of a convex
    problem should land on the same value — ``start_spread`` records how well
    they did, and ``converged`` is False when they scatter."""
    _require_regular(an)
    B, cks = _reduced_basis(an)
    rho = an.rho_k
    m = B.shape[1]
    if m == 0:
        val, err = emax_gaussians(np.zeros_like(rho), rho)
        return XiAResult(value=val, v_opt=np.zeros(an.input_size),
                         z_opt=np.zeros(0), quad_err=err)

    def f(z):
        return emax_gaussians(cks @ z, rho)[0]

    rng = np.random.default_rng(seed)
    starts = [np.zeros(m)]
    for s in (1.0, -1.0, 3.0, -3.0):
        starts.append(np.full(m, s))
    while len(starts) < n_starts:
        starts.append(rng.normal(scale=2.0, size=m))
    finals = []
    best = None
    for z0 in starts[:n_starts]:
        res = minimize(f, z0, method="Nelder-Mead",
                       options=dict(xatol=1e-10, fatol=1e-12, maxiter=4000))
        finals.append(res.fun)
        if best is None or res.fun < best.fun:
            best = res
    res = minimize(f, best.x, method="Powell",
                   options=dict(xtol=1e-11, ftol=1e-13))
    ok = bool(best.success or res.success)
    z = res.x if res.fun <= best.fun else best.x
    val, err = emax_gaussians(cks @ z, rho)
    spread = float(max(finals) - min(finals))
    return XiAResult(value=float(val), v_opt=B @ z, z_opt=np.asarray(z),
                     quad_err=err, converged=ok and spread < 1e-6,
                     start_spread=spread)


# ---------------------------------------------------------------------------
# converse constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HatvResult:
    v: np.ndarray
    z: np.ndarray
    residual: float
    log_F: float  # log of the maximized product of Phi terms


def _hatv_reduced(w, cks, rho, z0=None, tol=1e-12, max_iter=120):
    """Damped Newton maximization of sum_k log Phi((w + c_k.z) / rho_k).

    ``tol`` is relative: the iteration stops once the gradient terms cancel
    to that fraction of their total magnitude.  An absolute tolerance would
    freeze the solve prematurely far in the upper tail, where psi (and hence
    the whole gradient) is exponentially small but the maximizer still moves
    linearly in w."""
    m = cks.shape[1]
    if m == 0:
        u = w / rho
        return np.zeros(0), 0.0, float(np.sum(log_ndtr(u)))
    z = np.zeros(m) if z0 is None else np.array(z0, dtype=np.float64)
    crho = cks / rho[:, None]
    acrho = np.abs(crho)

    def value(zv):
        u = (w + cks @ zv) / rho
        return float(np.sum(log_ndtr(u)))

    def grad_and_scale(zv):
        pv = psi((w + cks @ zv) / rho)
        g = crho.T @ pv
        s = float(np.max(acrho.T @ pv))
        return g, s

    fz = value(z)
    res = 0.0
    for _ in range(max_iter):
        grad, scale = grad_and_scale(z)
        if scale <= 0.0:  # every psi underflowed: the objective is flat here
            res = 0.0
            break
        res = float(np.max(np.abs(grad)))
        if res < tol * scale:
            break
        u = (w + cks @ z) / rho
        pp = psi_prime(u)
        H = (crho * pp[:, None]).T @ crho
        try:
            dz = np.linalg.solve(-H, grad)
        except np.linalg.LinAlgError:
            dz = grad  # gradient ascent fallback
        t = 1.0
        gd = float(grad @ dz)
        while t > 1e-13:
            zn = z + t * dz
            fn = value(zn)
            if fn >= fz + 0.25 * t * gd - 1e-300:
                z, fz = zn, fn
                break
            t *= 0.5
        else:
            break
    return z, res, value(z)


def hatv(an, w, z0=None, tol=1e-12):
    """Maximizer of prod_k Phi((w + dI_k(v)) / rho_k) over zero-sum v.

    ``tol`` is the relative gradient-cancellation target; the reported
    residual is the absolute gradient norm at the returned point."""
    _require_regular(an)
    B, cks = _reduced_basis(an)
    z, res, logF = _hatv_reduced(float(w), cks, an.rho_k, z0=z0, tol=tol)
    return HatvResult(v=B @ z, z=z, residual=res, log_F=logF)


@dataclass(frozen=True)
class XiCResult:
    value: float
    tail_bound: float
    grid_gap: float
    max_residual: float
    w_range: tuple
    grid_n: int
    profile: "ProfileFunction" = None


def _profile_sweep(an, ws):
    """hatv at every grid abscissa, warm-started outward from w = 0."""
    B, cks = _reduced_basis(an)
    rho = an.rho_k
    m = cks.shape[1]
    dirs = np.zeros((len(ws), an.input_size))
    resid = np.empty(len(ws))
    cdf = np.empty((len(ws), an.K))
    i0 = int(np.argmin(np.abs(ws)))
    for sweep in (range(i0, len(ws)), range(i0, -1, -1)):
        z = None
        for i in sweep:
            z, resid[i], _ = _hatv_reduced(ws[i], cks, rho, z0=z)
            if m:
                dirs[i] = B @ z
                u = (ws[i] + cks @ z) / rho
            else:
                u = ws[i] / rho
            cdf[i] = np.exp(log_ndtr(u))
    return ProfileFunction(w_grid=ws, directions=dirs, cdf_values=cdf,
                           stationarity_residuals=resid)


def xi_c(an, w_range=(-12.0, 12.0), grid_n=2048, refine_check=True):
    """Converse constant E[max_k H_k] with F_max(w) = max_v prod_k Phi(.).

    Simpson integration of 1 - F on [0, W] and of F on [-W, 0], Gaussian
    certificates for both tails:
      w >= W:  1 - F(w) <= sum_k Q(w / rho_k)        (take v = 0),
      w <= -W: F(w) <= Phi(w / max_k rho_k)          (min_k dI_k(hatv) <= 0).
    Refuses when halving the grid shifts the result by more than 5e-4.
    The sampled maximizer profile rides along in the result."""
    _require_regular(an)
    lo, hi = float(w_range[0]), float(w_range[1])
    if not (lo < 0 < hi):
        raise ValueError("w_range must straddle 0")
    n = int(grid_n)
    if n < 64 or n % 2:
        raise ValueError("grid_n must be even and at least 64")
    rho = an.rho_k

    ws = np.linspace(lo, hi, n + 1)
    i0 = int(np.argmin(np.abs(ws)))
    if abs(ws[i0]) > 1e-9:
        raise ValueError("the w grid must contain 0; adjust w_range/grid_n")
    if i0 % 2:
        raise ValueError("0 must sit on an even grid index so the Simpson "
                         "self-check can reuse the halved grid")
    ws[i0] = 0.0  # snap so the sign split is exact
    prof = _profile_sweep(an, ws)
    F = prof.cdf_values.prod(axis=1)

    def _split_integrals(wv, Fv):
        pos = wv >= 0
        neg = wv <= 0
        up = _simpson(1.0 - Fv[pos], wv[pos])
        dn = _simpson(Fv[neg], wv[neg])
        return up - dn

    main = _split_integrals(ws, F)
    gap = 0.0
    if refine_check:
        half = _split_integrals(ws[::2], F[::2])
        gap = abs(main - half)
        if gap > 5e-4:
            raise ValueError(
                f"xi_c grid too coarse: Simpson self-check gap {gap:.2e} "
                "exceeds 5e-4; increase grid_n or widen w_range"
            )
    # tails
    zr = hi / rho
    right = float(np.sum(rho * (norm.pdf(zr) - zr * norm.sf(zr))))
    rmax = float(np.max(rho))
    zl = (-lo) / rmax
    left = float(rmax * (norm.pdf(zl) - zl * norm.sf(zl)))
    value = main + 0.5 * (right - left)
    return XiCResult(value=float(value), tail_bound=right + left,
                     grid_gap=float(gap),
                     max_residual=float(np.max(prof.stationarity_residuals)),
                     w_range=(lo, hi), grid_n=n, profile=prof)


def _simpson(y, x):
    n = len(x) - 1
    if n % 2:
        # trapezoid on the last interval, Simpson on the rest
        return _simpson(y[:-1], x[:-1]) + 0.5 * (y[-1] + y[-2]) * (x[-1] - x[-2])
    h = (x[-1] - x[0]) / n
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum()))


# ---------------------------------------------------------------------------
# equality cases and aggregate constants
# ---------------------------------------------------------------------------


def check_corollary4(an, tol=1e-9):
    """Determine whether the two second-order constants provably coincide.

    Case 1 ("cond1_shared_caid"): the common input simultaneously maximizes
    every user's mutual information, i.e. each user's divergence row is
    constant in x (always true for K = 1).  Case 2 ("cond2_balanced"): all
    dispersions are equal and the divergence rows sum to a constant in x.
    Returns (case, details)."""
    D = an.divergence_table
    spread = np.ptp(D, axis=1)
    if np.all(spread < tol):
        return "cond1_shared_caid", {"max_row_spread": float(np.max(spread))}
    var = an.Uk if an.dispersion_convention == "unconditional" else an.Vk
    vspread = float(np.ptp(var))
    colsum = D.sum(axis=0)
    csp = float(np.ptp(colsum))
    if vspread < tol and csp < tol:
        return "cond2_balanced", {
            "dispersion_spread": vspread, "column_sum_spread": csp,
        }
    return "none", {
        "max_row_spread": float(np.max(spread)),
        "dispersion_spread": vspread,
        "column_sum_spread": csp,
    }


@dataclass(frozen=True)
class SecondOrderConstants:
    xi_a: float
    xi_c: float
    emax_gauss: float
    equality_case: str
    xi_a_bar: float = None
    xi_a_detail: XiAResult = None
    xi_c_detail: XiCResult = None


def second_order_constants(an, w_range=(-12.0, 12.0), grid_n=2048):
    """Compute Xi_a, Xi_c, the shared-caid reference value, and the equality
    classification in one shot."""
    ra = xi_a(an)
    rc = xi_c(an, w_range=w_range, grid_n=grid_n)
    eg, _ = emax_gaussians(np.zeros(an.K), an.rho_k)
    case, _ = check_corollary4(an)
    return SecondOrderConstants(
        xi_a=ra.value, xi_c=rc.value, emax_gauss=eg, equality_case=case,
        xi_a_detail=ra, xi_c_detail=rc,
    )


@dataclass(frozen=True)
class NormalApprox:
    logM: np.ndarray       # the approximation curve (converse constant)
    band_low: np.ndarray   # same expansion with the achievability constant
    band_high: np.ndarray  # alias of logM; Xi_a >= Xi_c makes this the top


def normal_approx(an, consts, eps, ell):
    """Second-order expansion C l' - sqrt(V l') Xi at l' = ell/(1 - eps).

    The headline curve uses Xi = Xi_c; the (band_low, band_high) pair brackets
    it with the achievability constant, which can only sit lower."""
    ell = np.asarray(ell, dtype=np.float64)
    L = ell / (1.0 - eps)
    C = an.capacity_C
    V = an.V_geomean
    a = C * L - np.sqrt(V * L) * consts.xi_a
    c = C * L - np.sqrt(V * L) * consts.xi_c
    return NormalApprox(logM=c, band_low=a, band_high=c)


# ---------------------------------------------------------------------------
# profile functions and the profiled achievability constant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProfileFunction:
    """A direction profile w -> v(w) sampled on a grid.

    ``directions[i]`` is the zero-sum direction at ``w_grid[i]``;
    ``cdf_values[i, k]`` the per-user CDF factor Phi((w + dI_k(v)) / rho_k)
    at that w, and ``stationarity_residuals[i]`` the gradient norm of the
    product maximization (zero for profiles not built from hatv)."""

    w_grid: np.ndarray
    directions: np.ndarray
    cdf_values: np.ndarray
    stationarity_residuals: np.ndarray


def constant_profile(an, v0=None, w_range=(-12.0, 12.0), grid_n=1024):
    """Profile fixed at a single direction (time-sharing style)."""
    n = an.input_size
    v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=np.float64)
    if abs(v0.sum()) > 1e-10:
        raise ValueError("profile direction must be zero-sum")
    ws = np.linspace(w_range[0], w_range[1], int(grid_n) + 1)
    dirs = np.tile(v0, (len(ws), 1))
    dI = an.divergence_table @ v0
    cdf = norm.cdf((ws[:, None] + dI[None, :]) / an.rho_k[None, :])
    return ProfileFunction(w_grid=ws, directions=dirs, cdf_values=cdf,
                           stationarity_residuals=np.zeros(len(ws)))


def hatv_profile(an, w_range=(-12.0, 12.0), grid_n=1024):
    """Profile tracing the converse maximizer hatv(w)."""
    _require_regular(an)
    ws = np.linspace(w_range[0], w_range[1], int(grid_n) + 1)
    return _profile_sweep(an, ws)


@dataclass(frozen=True)
class XiABarResult:
    value: float
    exponents: np.ndarray  # E_k(s) sampled on the profile grid, (n_w, K)
    boundary_gap: float
    profile: ProfileFunction


def xi_a_bar(an, profile):
    """Profiled achievability constant from a direction profile v(w).

    E_k(s) = C - I_k(P* + C v'(s)) + C dI_k(v'(s)) >= 0 penalizes profile
    motion; the per-user CDFs are
      F_k(w) = Phi((w + dI_k(v(w)) - int_{-inf}^w E_k/C) / rho_k)
    and the value is E[max] under the product coupling.  Raises if the
    shifted input P* + C v'(s) leaves the simplex (reporting the w where)."""
    _require_regular(an)
    ws = profile.w_grid
    dirs = profile.directions
    C = an.capacity_C
    rho = an.rho_k
    K = an.K
    vp = np.gradient(dirs, ws, axis=0)
    shifted = an.pstar[None, :] + C * vp
    bad = np.nonzero(shifted.min(axis=1) < -1e-10)[0]
    if len(bad):
        raise ValueError(
            f"profile derivative leaves the simplex at w = {ws[bad[0]]:.4f} "
            f"(min component {shifted[bad[0]].min():.3e})"
        )
    shifted = np.clip(shifted, 0.0, None)
    shifted /= shifted.sum(axis=1, keepdims=True)
    E = np.empty((len(ws), K))
    for i in range(len(ws)):
        dIk = an.divergence_table @ vp[i]
        for k, u in enumerate(an.channel.users):
            E[i, k] = C - mutual_information(shifted[i], u) + C * dIk[k]
    if np.min(E) < -1e-6:
        warnings.warn(
            f"profile exponent dipped to {np.min(E):.3e}; the concavity "
            "guarantee is violated numerically", RuntimeWarning,
        )
    E = np.clip(E, 0.0, None)
    # cumulative integral of E_k / C from the left edge
    dw = np.diff(ws)
    cum = np.zeros_like(E)
    cum[1:] = np.cumsum(0.5 * (E[1:] + E[:-1]) * dw[:, None], axis=0) / C
    dI_tab = dirs @ an.divergence_table.T  # (n_w, K)
    F = norm.cdf((ws[:, None] + dI_tab - cum) / rho[None, :])
    Fmax = F.prod(axis=1)
    boundary_gap = float(max(1.0 - Fmax[-1], Fmax[0]))
    if boundary_gap > 1e-6:
        warnings.warn(
            f"profile grid boundary residual {boundary_gap:.2e}; widen "
            "w_range for full accuracy", RuntimeWarning,
        )
    val = _signed_split_trapezoid(ws, Fmax)
    return XiABarResult(value=float(val), exponents=E,
                        boundary_gap=boundary_gap, profile=profile)


def _signed_split_trapezoid(ws, Fmax):
    """int_0^inf (1 - F) dw - int_-inf^0 F dw by trapezoid, inserting an
    interpolated node at w = 0 when the grid lacks one."""
    i0 = int(np.argmin(np.abs(ws)))
    if abs(ws[i0]) > 1e-9:
        f0 = float(np.interp(0.0, ws, Fmax))
        at = int(np.searchsorted(ws, 0.0))
        ws = np.insert(ws, at, 0.0)
        Fmax = np.insert(Fmax, at, f0)
    else:
        ws = ws.copy()
        ws[i0] = 0.0
    pos = ws >= 0
    neg = ws <= 0
    return float(np.trapezoid(1.0 - Fmax[pos], ws[pos])
                 - np.trapezoid(Fmax[neg], ws[neg]))


# ---------------------------------------------------------------------------
# the two-block/two-user structural check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lemma1Result:
    D: float
    cond_region_ok: bool
    cond_sign_ok: bool
    vprime_bounds_ok: bool
    sign_value: float
    region_margins: tuple
    samples: tuple  # (w, v(w), v'(w)) triples


def _block_capacities(an):
    ch = an.channel
    if ch.blocks is None or len(ch.blocks) != 2:
        raise ValueError("this check needs a channel with exactly two input blocks")
    if ch.K != 2:
        raise ValueError("this check is specific to two users")
    out = np.empty((2, 2))
    for k, u in enumerate(ch.users):
        for r, blk in enumerate(ch.blocks):
            rows = u.rows[list(blk)]
            r0 = np.sort(rows[0])
            if any(not np.allclose(np.sort(rr), r0, atol=1e-12) for rr in rows):
                raise ValueError("each block must be output-symmetric per user")
            pr = rows[0][rows[0] > 0]
            out[k, r] = math.log(u.output_size) + float(np.sum(pr * np.log(pr)))
    return out


def lemma1_check(an, w_points=None):
    """Structural check of the scalar profile for two blocks and two users.

    With Delta_k the block capacity gaps (Delta_1 > 0 > Delta_2 required),
    the candidate slope is D = -(D1 r2^2 + D2 r1^2)/(D1^2 r2^2 + D2^2 r1^2);
    the check verifies (a) the shifted input stays in the simplex at both
    endpoint slopes 0 and D, (b) the sign condition
    (D1/r1 + D2/r2)(r2 - r1) >= 0, and (c) that the implicit profile
    derivative v'(w) lies strictly between 0 and D across a w sweep."""
    _require_regular(an)
    Ckr = _block_capacities(an)
    d1 = Ckr[0, 0] - Ckr[0, 1]
    d2 = Ckr[1, 0] - Ckr[1, 1]
    if not (d1 > 0 > d2):
        raise ValueError(
            f"block capacity gaps must satisfy Delta_1 > 0 > Delta_2 "
            f"(got {d1:.6f}, {d2:.6f}); relabel blocks or users"
        )
    r1, r2 = an.rho_k
    C = an.capacity_C
    D = -(d1 * r2**2 + d2 * r1**2) / (d1**2 * r2**2 + d2**2 * r1**2)

    # (a) block-mass endpoint check: moving the block-1 mass by C * v keeps
    # the input distribution valid for v in {0, D} (v' lies between)
    blk1 = list(an.channel.blocks[0])
    a_mass = float(an.pstar[blk1].sum())
    lo_margin = a_mass + C * min(0.0, D)
    hi_margin = 1.0 - (a_mass + C * max(0.0, D))
    cond_region = (lo_margin >= -1e-12) and (hi_margin >= -1e-12)

    # (b) sign condition
    sign_value = (d1 / r1 + d2 / r2) * (r2 - r1)
    cond_sign = sign_value >= -1e-12

    # (c) v'(w) between 0 and D along a sweep
    from scipy.optimize import brentq

    if w_points is None:
        w_points = np.linspace(-8.0, 8.0, 33)
    samples = []
    ok = True
    s = d1 / r1 + d2 / r2
    for w in w_points:
        g = lambda v: float(psi((w + v * d1) / r1) * d1 / r1
                            + psi((w + v * d2) / r2) * d2 / r2)
        vlo, vhi = -50.0, 50.0
        while g(vlo) < 0:
            vlo *= 2
        while g(vhi) > 0:
            vhi *= 2
        vw = brentq(g, vlo, vhi, xtol=1e-13)
        u1 = (w + vw * d1) / r1
        u2 = (w + vw * d2) / r2
        num = (d1 / r1**2) * psi_prime(u1) + (d2 / r2**2) * psi_prime(u2)
        den = (d1**2 / r1**2) * psi_prime(u1) + (d2**2 / r2**2) * psi_prime(u2)
        vp = -num / den
        samples.append((float(w), float(vw), float(vp)))
        if abs(s) < 1e-12:
            ok = ok and abs(vp - D) < 1e-6
        elif s > 0:
            ok = ok and (D < vp < 0)
        else:
            ok = ok and (0 < vp < D)
    return Lemma1Result(
        D=float(D), cond_region_ok=bool(cond_region), cond_sign_ok=bool(cond_sign),
        vprime_bounds_ok=bool(ok), sign_value=float(sign_value),
        region_margins=(float(lo_margin), float(hi_margin)),
        samples=tuple(samples),
    )
