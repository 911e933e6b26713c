"""Random-walk increment laws and certified stopping-time distributions.

The bounds in this package reduce to first-passage statistics of iid random
walks built from information densities.  This module turns (input
distribution, channel) pairs into finite increment laws, and computes

* the CDF of the one-sided passage time ``tau = inf{n >= 0: S_n >= gamma}``,
* running-maximum crossing curves ``v_t = P[max_{n<=t} S_n >= thr]``,
* expected maxima of independent passage times, and
* the ordering probability ``P[tau >= taubar]`` for the paired walks used by
  the refined achievability bound,

each with rigorous (not heuristic) truncation accounting: every discarded
piece of probability mass is covered by an explicit bound that weakens, never
strengthens, the final claim.

Exactness: laws with one or two atoms, or whose atoms all sit on a common
real lattice, are handled by exact dynamic programs (no quantization).  Other
laws are quantized onto a lattice with a caller-chosen bias direction;
``bias="lower"`` floors atoms and raises the threshold so the computed CDF is
stochastically dominated by the true one, ``bias="upper"`` does the reverse.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import cache as _cache
from .channel import check_input_distribution
from ._kernels import backend as _kernels

PROVENANCES = ("achievability", "independent_codeword", "converse_uniform_Q")
ATOM_MERGE_TOL = 1e-13
GRID_SNAP = 1e-9  # round-if-close guard for thresholds and quantization


def _merge_atoms(values, probs, tol=ATOM_MERGE_TOL):
    order = np.argsort(values, kind="stable")
    values = np.asarray(values, dtype=np.float64)[order]
    probs = np.asarray(probs, dtype=np.float64)[order]
    out_v, out_p = [], []
    for v, p in zip(values, probs):
        if p <= 0:
            continue
        if out_v and abs(v - out_v[-1]) <= tol:
            # weighted merge keeps the mean exact
            w = out_p[-1] + p
            out_v[-1] = (out_v[-1] * out_p[-1] + v * p) / w
            out_p[-1] = w
        else:
            out_v.append(float(v))
            out_p.append(float(p))
    return np.array(out_v), np.array(out_p)


@dataclass(frozen=True)
class IncrementLaw:
    """Finite discrete law of a single walk increment (values in nats)."""

    atoms: np.ndarray
    probs: np.ndarray
    provenance: str
    independence_gap: float = None  # only for independent_codeword laws

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if atoms.shape != probs.shape or atoms.ndim != 1 or len(atoms) == 0:
            raise ValueError("atoms and probs must be matching nonempty vectors")
        if np.any(probs < 0):
            raise ValueError("negative probability")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probs sum to {probs.sum()!r}, not 1")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        atoms, probs = _merge_atoms(atoms, probs)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @property
    def drift(self):
        return float(np.dot(self.atoms, self.probs))

    @property
    def mgf_at_one(self):
        return float(np.dot(self.probs, np.exp(self.atoms)))

    @property
    def max_atom(self):
        return float(self.atoms[-1])

    @property
    def min_atom(self):
        return float(self.atoms[0])


def increment_law(P, W, provenance):
    """Increment law of the per-symbol information-density walk.

    provenance:
      - "achievability": (X, Y) ~ P x W, increment log(W(Y|X) / (PW)(Y)).
      - "independent_codeword": X ~ P and Y ~ PW independent, same functional.
      - "converse_uniform_Q": (X, Y) ~ P x W, increment log(W(Y|X) * |Y|)
        (information density mismatched to the uniform output measure).
    """
    p = check_input_distribution(P, W.input_size)
    rows = W.rows
    q = p @ rows
    ny = W.output_size
    if provenance not in PROVENANCES:
        raise ValueError(f"unknown provenance {provenance!r}")

    if provenance == "converse_uniform_Q":
        den = np.full(ny, 1.0 / ny)
    else:
        den = q

    pos = rows > 0
    pair_probs = p[:, None] * (rows if provenance != "independent_codeword" else q[None, :])
    live = pair_probs > 0
    if np.any(live & pos & (den <= 0)[None, :]):
        raise ValueError("increment log-ratio has a zero denominator with positive mass")
    if provenance == "independent_codeword":
        # pairs with W(y|x) = 0 have increment -inf; they never help crossing,
        # and the exact treatment is to drop them into an atom at -inf.  A
        # finite proxy far below every threshold keeps the DP finite.
        pass

    vals = []
    ws = []
    neg_inf_mass = 0.0
    for x in range(rows.shape[0]):
        if p[x] <= 0:
            continue
        for y in range(ny):
            w = pair_probs[x, y]
            if w <= 0:
                continue
            if rows[x, y] <= 0:
                neg_inf_mass += w
                continue
            vals.append(math.log(rows[x, y]) - math.log(den[y]))
            ws.append(w)
    if neg_inf_mass > 0:
        # a sinking atom: once taken, the walk can effectively never recover
        # within any horizon of interest.  Place it far below the dynamic
        # range; passage computations clip it into their certified bounds.
        floor = min(vals) if vals else -1.0
        vals.append(min(floor * 1e6, -1e9))
        ws.append(neg_inf_mass)

    gap = None
    if provenance == "independent_codeword":
        gap = _output_invariance_gap(p, rows, q)
    return IncrementLaw(
        atoms=np.array(vals), probs=np.array(ws), provenance=provenance,
        independence_gap=gap,
    )


def _output_invariance_gap(p, rows, q):
    """How far the conditional law of log(W(y|X)/q(y)) given y varies with y.

    When this is ~0 the independent-codeword walk is independent of the true
    transmission, which is the precondition for the paired-walk bound.
    """
    supp_x = np.flatnonzero(p > 0)
    ref = None
    gap = 0.0
    for y in range(rows.shape[1]):
        if q[y] <= 0:
            continue
        vals = []
        for x in supp_x:
            if rows[x, y] > 0:
                vals.append((math.log(rows[x, y]) - math.log(q[y]), p[x]))
            else:
                vals.append((-np.inf, p[x]))
        vals.sort()
        if ref is None:
            ref = vals
            continue
        if len(vals) != len(ref):
            return np.inf
        for (a, w), (a0, w0) in zip(vals, ref):
            if a0 == -np.inf or a == -np.inf:
                if a != a0:
                    return np.inf
            else:
                gap = max(gap, abs(a - a0))
            gap = max(gap, abs(w - w0))
    return float(gap)


# ---------------------------------------------------------------------------
# lattice quantization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeWalk:
    """Increment law with atoms on an integer lattice of pitch ``step_h``."""

    step_h: float
    int_atoms: np.ndarray
    probs: np.ndarray
    rounding: str  # "floor" | "ceil" | "exact"

    def __post_init__(self):
        if not self.step_h > 0:
            raise ValueError("step_h must be positive")
        if self.rounding not in ("floor", "ceil", "exact"):
            raise ValueError("rounding must be floor, ceil, or exact")
        ia = np.asarray(self.int_atoms, dtype=np.int64)
        pr = np.asarray(self.probs, dtype=np.float64)
        if ia.shape != pr.shape or ia.ndim != 1 or len(ia) == 0:
            raise ValueError("int_atoms and probs must be matching nonempty vectors")
        object.__setattr__(self, "int_atoms", ia)
        object.__setattr__(self, "probs", pr)

    @property
    def drift(self):
        return float(np.dot(self.int_atoms, self.probs) * self.step_h)

    @property
    def max_atom(self):
        return float(self.int_atoms.max() * self.step_h)


def quantize(law, h, rounding):
    """Round a law's atoms onto the lattice h*Z with a chosen bias direction.

    ``floor`` produces a walk dominated by the true one, ``ceil`` a dominating
    walk.  Atoms within 1e-9 lattice units of an exact lattice point snap to
    it instead of paying the full rounding penalty.
    """
    if rounding not in ("floor", "ceil"):
        raise ValueError("rounding must be 'floor' or 'ceil'")
    if not h > 0:
        raise ValueError("h must be positive")
    x = law.atoms / h
    if rounding == "floor":
        ia = np.floor(x + GRID_SNAP)
    else:
        ia = np.ceil(x - GRID_SNAP)
    ia = np.clip(ia, -2**62, 2**62)
    return LatticeWalk(step_h=h, int_atoms=ia.astype(np.int64), probs=law.probs.copy(),
                       rounding=rounding)


def _common_lattice_pitch(atoms, rel_tol=1e-12):
    """Largest g with every atom an integer multiple of g, or None.

    Uses a real-valued Euclid reduction; irrational ratios fail the final
    integer-multiple verification and yield None.
    """
    mags = np.abs(atoms[np.abs(atoms) > 1e-15])
    if len(mags) == 0:
        return None
    scale = float(mags.max())
    g = float(mags[0])
    for a in mags[1:]:
        a = float(a)
        while a > rel_tol * scale:
            g, a = a, math.fmod(g, a)
            if a > rel_tol * scale and a < g * 1e-9:
                # ratio keeps producing tiny but nonzero remainders: treat as
                # incommensurable rather than looping toward denormals
                return None
        g = abs(g)
        if g <= rel_tol * scale:
            return None
    mult = atoms / g
    if np.max(np.abs(mult - np.round(mult))) > 1e-9:
        return None
    if scale / g > 1e8:
        return None  # lattice too fine to be useful
    return g


# ---------------------------------------------------------------------------
# stopping laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StoppingLaw:
    """CDF of a passage time up to a horizon, with certified tail bounds.

    ``cdf[t] = P[tau <= t]`` for t = 0..horizon_T, possibly defective.  The
    invariant ``cdf[-1] + tail_mass_bound >= 1 - 1e-12`` always holds.
    ``tail_expectation_bound`` bounds ``E[(tau - T)^+]`` (finite only for
    positive-drift walks); ``future_crossing_bound`` bounds ``P[T < tau <
    infinity]`` (finite when the increment MGF at 1 is <= 1, the
    supermartingale regime of the independent-codeword walk).
    """

    gamma: float
    horizon_T: int
    cdf: np.ndarray
    tail_mass_bound: float
    tail_expectation_bound: float = np.inf
    future_crossing_bound: float = np.inf
    drift: float = np.nan
    independence_gap: float = None

    def __post_init__(self):
        cdf = np.asarray(self.cdf, dtype=np.float64)
        if len(cdf) != self.horizon_T + 1:
            raise ValueError("cdf must have horizon_T + 1 entries")
        if np.any(np.diff(cdf) < -1e-15) or cdf[0] < -1e-15 or cdf[-1] > 1 + 1e-12:
            raise ValueError("cdf must be nondecreasing within [0, 1]")
        if cdf[-1] + self.tail_mass_bound < 1 - 1e-12:
            raise ValueError("cdf and tail bound do not account for all mass")
        object.__setattr__(self, "cdf", cdf)


def _single_atom_stop(a, gamma, tail_tol, horizon):
    """Deterministic walk: crossing time is ceil(gamma / a) exactly."""
    if gamma <= 0:
        return StoppingLaw(gamma=gamma, horizon_T=0, cdf=np.array([1.0]),
                           tail_mass_bound=0.0, tail_expectation_bound=0.0,
                           future_crossing_bound=0.0, drift=a)
    if a <= 0:
        T = horizon if horizon else 1
        return StoppingLaw(gamma=gamma, horizon_T=T, cdf=np.zeros(T + 1),
                           tail_mass_bound=1.0, future_crossing_bound=0.0, drift=a)
    n = int(math.ceil(gamma / a - GRID_SNAP))
    T = horizon if horizon is not None else n
    T = max(T, n)
    cdf = np.zeros(T + 1)
    cdf[n:] = 1.0
    return StoppingLaw(gamma=gamma, horizon_T=T, cdf=cdf, tail_mass_bound=0.0,
                       tail_expectation_bound=0.0, future_crossing_bound=0.0, drift=a)


def _as_dp_spec(walk, gamma, bias, h):
    """Normalize (walk-or-law, gamma) into an exact or lattice DP problem.

    Returns a dict with keys:
      kind: "two" | "lattice"
      for "two": a_hi, a_lo, p_hi, p_lo, gamma (real-valued, exact)
      for "lattice": int_atoms, probs, h, m_idx  (threshold index)
      plus drift, max_atom, mgf1 of the walk actually used.
    """
    if isinstance(walk, LatticeWalk):
        atoms = walk.int_atoms.astype(np.float64) * walk.step_h
        probs = walk.probs
        if walk.rounding == "ceil" or bias == "upper":
            m_idx = int(math.floor(gamma / walk.step_h + GRID_SNAP))
        else:
            m_idx = int(math.ceil(gamma / walk.step_h - GRID_SNAP))
        spec = dict(kind="lattice", int_atoms=walk.int_atoms, probs=probs,
                    h=walk.step_h, m_idx=m_idx)
    else:
        law = walk
        atoms, probs = law.atoms, law.probs
        if len(atoms) == 1:
            spec = dict(kind="single", a=float(atoms[0]))
        elif len(atoms) == 2:
            spec = dict(kind="two", a_lo=float(atoms[0]), a_hi=float(atoms[1]),
                        p_lo=float(probs[0]), p_hi=float(probs[1]), gamma=gamma)
        else:
            g = _common_lattice_pitch(atoms)
            if g is not None:
                ia = np.round(atoms / g).astype(np.int64)
                m_idx = int(math.ceil(gamma / g - GRID_SNAP))
                if bias == "upper":
                    m_idx = int(math.floor(gamma / g + GRID_SNAP))
                spec = dict(kind="lattice", int_atoms=ia, probs=probs, h=g, m_idx=m_idx)
            else:
                lw = quantize(law, h, "floor" if bias == "lower" else "ceil")
                return _as_dp_spec(lw, gamma, bias, h)
    spec["drift"] = float(np.dot(atoms, probs))
    spec["max_atom"] = float(atoms.max())
    with np.errstate(over="ignore"):
        spec["mgf1"] = float(np.dot(probs, np.exp(np.minimum(atoms, 700))))
    return spec


_EXP_CLIP_FLOOR = -40.0  # absolute walk value below which supermartingale clipping engages
_HORIZON_CAP = 2**24


def stopping_time_cdf(walk, gamma, tail_tol=1e-12, horizon=None, h=1e-4, bias="lower"):
    """Certified CDF of ``tau = inf{n >= 0: S_n >= gamma}``.

    ``walk`` may be an IncrementLaw (exact paths are auto-detected: two-atom
    laws and common-lattice laws incur no quantization error) or an explicit
    LatticeWalk.  ``bias`` controls the conservative direction when
    quantization is unavoidable: "lower" under-reports the CDF (passage looks
    slower), "upper" over-reports it.

    Positive-drift walks choose their own horizon (initial ``1.5 *
    gamma/drift``, doubled until the unaccounted transient mass drops below
    ``tail_tol``).  Nonpositive-drift walks require either ``mgf_at_one <= 1``
    (the defective-passage regime, where an exponential supermartingale
    certifies the uncrossed mass) or an explicit ``horizon``.
    """
    if bias not in ("lower", "upper"):
        raise ValueError("bias must be 'lower' or 'upper'")
    gamma = float(gamma)
    spec = _as_dp_spec(walk, gamma, bias, h)
    indep_gap = walk.independence_gap if isinstance(walk, IncrementLaw) else None

    if gamma <= 0:
        return StoppingLaw(gamma=gamma, horizon_T=0, cdf=np.array([1.0]),
                           tail_mass_bound=0.0, tail_expectation_bound=0.0,
                           future_crossing_bound=0.0, drift=spec["drift"],
                           independence_gap=indep_gap)
    if spec["kind"] == "single":
        law = _single_atom_stop(spec["a"], gamma, tail_tol, horizon)
        return StoppingLaw(**{**law.__dict__, "independence_gap": indep_gap})

    drift = spec["drift"]
    supermartingale = spec["mgf1"] <= 1.0 + 1e-9
    if drift <= 0 and not supermartingale and horizon is None:
        raise ValueError(
            "walk has nonpositive drift and no supermartingale certificate; "
            "an explicit horizon is required"
        )
    if spec["max_atom"] <= 0:
        T = horizon if horizon is not None else 1
        return StoppingLaw(gamma=gamma, horizon_T=T, cdf=np.zeros(T + 1),
                           tail_mass_bound=1.0, future_crossing_bound=0.0,
                           drift=drift, independence_gap=indep_gap)

    if horizon is not None:
        T = int(horizon)
        schedule = [T]
    else:
        if drift > 0:
            T = int(math.ceil(1.5 * gamma / drift)) + 16
        else:
            T = int(math.ceil(8.0 * gamma / max(spec["max_atom"], 1e-9))) + 16
        schedule = []
        while T <= _HORIZON_CAP:
            schedule.append(T)
            T *= 2
        if not schedule:
            schedule = [_HORIZON_CAP]

    clip_mode = 2 if (supermartingale and drift <= 0) else 1
    last = None
    for T in schedule:
        if spec["kind"] == "two":
            f, dead_mass, dead_val_sum, exp_acc, live_w, live_j0 = _kernels.two_atom_stop(
                spec["a_hi"], spec["a_lo"], spec["p_hi"], spec["p_lo"],
                gamma, T, clip_mode, _EXP_CLIP_FLOOR,
            )
            d = spec["a_hi"] - spec["a_lo"]
            live_vals = spec["a_hi"] * T - d * (live_j0 + np.arange(len(live_w)))
            max_atom = spec["a_hi"]
        else:
            f, dead_mass, dead_val_sum, exp_acc, live_w, live_lo = _kernels.lattice_stop(
                spec["int_atoms"], spec["probs"], spec["h"], spec["m_idx"], T,
                clip_mode, _EXP_CLIP_FLOOR,
            )
            live_vals = (live_lo + np.arange(len(live_w))) * spec["h"]
            max_atom = spec["int_atoms"].max() * spec["h"]
        live_mass = float(live_w.sum())
        # mode 2 removes mass under an exponential certificate; only the live
        # remainder argues for a longer horizon
        transient = live_mass if clip_mode == 2 else live_mass + dead_mass
        cdf = np.cumsum(f)
        last = (T, cdf, live_w, live_vals, dead_mass, dead_val_sum, exp_acc, max_atom)
        if transient < tail_tol or horizon is not None:
            break

    T, cdf, live_w, live_vals, dead_mass, dead_val_sum, exp_acc, max_atom = last
    live_mass = float(live_w.sum())
    tail_mass = max(0.0, 1.0 - float(cdf[-1]))

    gamma_for_bounds = gamma if spec["kind"] == "two" else spec["m_idx"] * spec["h"]
    if drift > 0:
        # Wald-style bound on E[(tau - T)^+]: from a surviving state with value
        # v, the expected extra time to cross is at most (gamma - v + max_atom)/drift.
        extra = (gamma_for_bounds - live_vals + max_atom) / drift
        tail_exp = float(np.dot(live_w, np.clip(extra, 0.0, None)))
        if clip_mode == 1 and dead_mass > 0:
            tail_exp += (gamma_for_bounds * dead_mass - dead_val_sum
                         + max_atom * dead_mass) / drift
        future_cross = tail_mass  # trivial bound
    else:
        tail_exp = np.inf
        future_cross = np.inf
    if clip_mode == 2:
        # supermartingale e^{S_n}: P[ever cross | value v] <= e^{v - gamma}
        with np.errstate(over="ignore"):
            live_cross = float(np.dot(live_w, np.exp(np.minimum(live_vals - gamma_for_bounds, 0.0))))
        future_cross = exp_acc + live_cross

    return StoppingLaw(
        gamma=gamma, horizon_T=T, cdf=cdf, tail_mass_bound=tail_mass,
        tail_expectation_bound=tail_exp, future_crossing_bound=future_cross,
        drift=drift, independence_gap=indep_gap,
    )


def running_max_crossing(walk, threshold, T, h=1e-4):
    """``v_t = P[max_{0<=n<=t} S_n >= threshold]`` for t = 0..T.

    Any quantization is biased so the computed curve dominates the true one
    (ceil-rounded atoms, floor-rounded threshold index), which weakens the
    downstream converse.  Exact paths incur no bias.
    """
    threshold = float(threshold)
    if threshold <= 0:
        return np.ones(T + 1)
    spec = _as_dp_spec(walk, threshold, "upper", h)
    if spec["kind"] == "single":
        a = spec["a"]
        v = np.zeros(T + 1)
        if a > 0:
            n = int(math.ceil(threshold / a - GRID_SNAP))
            if n <= T:
                v[n:] = 1.0
        return v
    if spec["max_atom"] <= 0:
        return np.zeros(T + 1)
    # crossing the running max by time t == stopping by time t, so the
    # first-passage DP (with its exact cannot-cross-by-T pruning) serves both
    if spec["kind"] == "two":
        f = _kernels.two_atom_stop(
            spec["a_hi"], spec["a_lo"], spec["p_hi"], spec["p_lo"],
            threshold, T, 1, 0.0,
        )[0]
    else:
        f = _kernels.lattice_stop(
            spec["int_atoms"], spec["probs"], spec["h"], spec["m_idx"], T, 1, 0.0
        )[0]
    return np.cumsum(f)


def expected_max_stopping(laws):
    """(value, error_bound) for E[max_k tau_k] of independent passage times.

    The value is computed from the (possibly defective) CDFs up to the joint
    horizon; the error bound collects each walk's certified tail expectation,
    so value + error_bound is a rigorous upper bound on the true expectation
    (and the value alone is an upper bound on the truncated sum, since
    defective CDFs only understate each F_k).
    """
    laws = list(laws)
    if not laws:
        raise ValueError("need at least one stopping law")
    T = max(l.horizon_T for l in laws)
    prod = np.ones(T + 1)
    err = 0.0
    for l in laws:
        F = l.cdf
        if len(F) < T + 1:
            F = np.concatenate([F, np.full(T + 1 - len(F), F[-1])])
        prod *= F
        if not np.isfinite(l.tail_expectation_bound):
            raise ValueError("a law lacks a finite tail expectation bound")
        err += l.tail_expectation_bound
    # E[max] = sum_{t>=0} (1 - F_max(t)); the t >= T remainder is covered by
    # sum_k E[(tau_k - T)^+] >= sum_{t >= T} (1 - prod F_k(t)).
    value = float(np.sum(1.0 - prod[:-1])) + float(1.0 - prod[-1])
    # ^ include t = T term explicitly: sum_{t=0}^{T} (1 - F_max(t)) counts
    #   P[max tau > t] for t up to T; beyond-T terms live in err.
    return value, float(err)


def crossing_order_prob(tau_law, taubar_law):
    """Upper bound on P[tau >= taubar] for independent passage times.

    ``taubar_law`` must carry a verified independence gap (the conditional
    increment law of the independent-codeword walk must not depend on the
    conditioning output symbol); otherwise the pairing argument is invalid
    and this function refuses.
    """
    gap = taubar_law.independence_gap
    if gap is None or not (gap <= 1e-12):
        raise ValueError(
            "paired-walk ordering requires the independent-codeword law to be "
            f"output-invariant (gap={gap!r}); use the simple bound instead"
        )
    Fb = taubar_law.cdf
    pb = np.diff(np.concatenate([[0.0], Fb]))
    Ft = tau_law.cdf
    Tt = len(Ft) - 1
    # P[tau >= t] = 1 - F_tau(t - 1); F_tau may be defective (understated),
    # which only raises this bound.
    surv = np.empty(len(pb))
    surv[0] = 1.0
    idx = np.minimum(np.arange(len(pb) - 1), Tt)
    surv[1:] = 1.0 - Ft[idx]
    total = float(np.dot(pb, surv))
    # crossings of the taubar walk after its horizon
    fc = taubar_law.future_crossing_bound
    if not np.isfinite(fc):
        fc = taubar_law.tail_mass_bound
    tail_surv = 1.0 - float(Ft[min(len(Fb) - 1, Tt)])
    total += fc * max(tail_surv, 0.0)
    return min(1.0, total)


# ---------------------------------------------------------------------------
# cached driver
# ---------------------------------------------------------------------------


def cached_stopping_law(law, gamma, tail_tol=1e-12, h=1e-4, bias="lower",
                        horizon=None, cache_dir=None, extra_key=()):
    """stopping_time_cdf with content-addressed on-disk caching.

    The cache key hashes the law's atoms/probs (exact float bytes), the
    provenance, lattice parameters, gamma, tolerance and bias, so any change
    in inputs misses cleanly.  Corrupt or unreadable entries are recomputed
    and replaced.
    """
    if cache_dir is None:
        return stopping_time_cdf(law, gamma, tail_tol=tail_tol, horizon=horizon,
                                 h=h, bias=bias)
    key = _cache.content_key(
        "stoplaw",
        law.atoms.tobytes(), law.probs.tobytes(), law.provenance,
        repr(float(gamma)), repr(float(tail_tol)), repr(float(h)), bias,
        repr(horizon), *extra_key,
    )
    hit = _cache.cache_get(cache_dir, key)
    if hit is not None:
        try:
            return _deserialize_stopping_law(hit)
        except Exception:
            pass  # fall through to recompute + replace
    res = stopping_time_cdf(law, gamma, tail_tol=tail_tol, horizon=horizon,
                            h=h, bias=bias)
    _cache.cache_put(cache_dir, key, _serialize_stopping_law(res))
    return res


def _serialize_stopping_law(law):
    import json

    head = {
        "gamma": law.gamma, "horizon_T": law.horizon_T,
        "tail_mass_bound": law.tail_mass_bound,
        "tail_expectation_bound": law.tail_expectation_bound,
        "future_crossing_bound": law.future_crossing_bound,
        "drift": law.drift,
        "independence_gap": law.independence_gap,
    }
    hb = json.dumps(head).encode()
    return len(hb).to_bytes(4, "little") + hb + law.cdf.tobytes()


def _deserialize_stopping_law(blob):
    import json

    n = int.from_bytes(blob[:4], "little")
    head = json.loads(blob[4 : 4 + n].decode())
    cdf = np.frombuffer(blob[4 + n :], dtype=np.float64).copy()
    if len(cdf) != head["horizon_T"] + 1:
        raise ValueError("corrupt cache entry")
    return StoppingLaw(cdf=cdf, **head)
