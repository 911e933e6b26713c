"""Pure-numpy compute kernels (fallback backend).

Semantics contract shared with the compiled backend in ``_core.pyx``:

two_atom_stop / lattice_stop
    Absorbing first-passage DP.  Returns ``(f, dead_mass, dead_val_sum,
    exp_acc, live_w, live_lo)`` where ``f[n]`` is the probability of first
    crossing at step n (f[0] = 0; the trivial gamma <= 0 case is handled by
    the caller), ``dead_mass``/``dead_val_sum`` account mass removed because
    it cannot reach the threshold within the horizon (value-weighted sum in
    real units, recorded at removal time), ``exp_acc`` accumulates
    ``sum w * exp(value - gamma)`` over mass removed below ``clip_floor``
    (supermartingale clipping, clip_mode 2), and ``live_w``/``live_lo``
    describe the surviving states at the horizon.

simulate_trials
    Monte Carlo of the variable-length stop-feedback scheme with a
    counter-based RNG (splitmix64 finalizer), so each random draw is a pure
    function of (seed, trial, purpose, index) and the two backends produce
    bit-identical output.
"""

import math

import numpy as np

NAME = "numpy"
DEFAULT_MAX_CELLS = 4e8

_SNAP = 1e-9

# --------------------------------------------------------------------------
# counter-based RNG (splitmix64 finalizer)
# --------------------------------------------------------------------------

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
PHI = np.uint64(0x9E3779B97F4A7C15)
PHI2 = np.uint64(0xD1B54A32D192ED03)
_U64 = np.uint64
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


def mix3(z):
    """splitmix64 finalizer on uint64 scalars/arrays (wrapping)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> _U64(30))) * _M1
        z = (z ^ (z >> _U64(27))) * _M2
        return z ^ (z >> _U64(31))


def stream_base(seed, trial, purpose):
    """Per-(trial, purpose) hash: draws are mix3(base + idx * PHI)."""
    with np.errstate(over="ignore"):
        k0 = mix3(np.asarray(seed, dtype=np.uint64))
        k1 = mix3(k0 ^ (np.asarray(trial, dtype=np.uint64) + PHI))
        return mix3(k1 ^ (np.asarray(purpose, dtype=np.uint64) + PHI2))


def uniforms(base, idx):
    """Uniforms in [0, 1) at the given draw indices (uint64 array)."""
    with np.errstate(over="ignore"):
        z = mix3(base + np.asarray(idx, dtype=np.uint64) * PHI)
    return (z >> _U64(11)).astype(np.float64) * _INV53


# --------------------------------------------------------------------------
# two-atom exact passage DP
# --------------------------------------------------------------------------


def two_atom_stop(a_hi, a_lo, p_hi, p_lo, gamma, T, clip_mode, clip_floor):
    d = a_hi - a_lo
    f = np.zeros(T + 1)
    if clip_mode == 1:
        jdead = int(math.floor((T * a_hi - gamma) / d + _SNAP)) + 1
        if jdead <= 0:
            return f, 1.0, 0.0, 0.0, np.zeros(0), 0
    else:
        jdead = None
    dead_mass = 0.0
    dead_val_sum = 0.0
    exp_acc = 0.0
    w = np.array([1.0])
    jmin = 0  # j index of w[0]
    for n in range(1, T + 1):
        m = len(w)
        wn = np.empty(m + 1)
        wn[0] = p_hi * w[0]
        if m > 1:
            wn[1:m] = p_hi * w[1:] + p_lo * w[:-1]
        wn[m] = p_lo * w[-1]
        jmax = jmin + m  # top j after the lo-shift
        # absorb j <= jcross(n)
        jc = int(math.floor((n * a_hi - gamma) / d + _SNAP))
        k = jc - jmin + 1
        if k > 0:
            k = min(k, m + 1)
            f[n] = wn[:k].sum()
            wn = wn[k:]
            jmin += k
        # clip the far side
        if clip_mode == 1 and jmax >= jdead and len(wn) > 0:
            nk = jmax - jdead + 1
            nk = min(nk, len(wn))
            tail = wn[-nk:]
            vals = n * a_hi - d * np.arange(jmax - nk + 1, jmax + 1, dtype=np.float64)
            dead_mass += tail.sum()
            dead_val_sum += float(np.dot(tail, vals))
            wn = wn[:-nk]
            jmax -= nk
        elif clip_mode == 2 and len(wn) > 0:
            jclip = int(math.ceil((n * a_hi - clip_floor) / d - _SNAP))
            if jmax >= jclip:
                nk = min(jmax - jclip + 1, len(wn))
                tail = wn[-nk:]
                vals = n * a_hi - d * np.arange(jmax - nk + 1, jmax + 1, dtype=np.float64)
                exp_acc += float(np.dot(tail, np.exp(vals - gamma)))
                wn = wn[:-nk]
                jmax -= nk
        w = wn
        if len(w) == 0:
            break
    return f, dead_mass, dead_val_sum, exp_acc, w, jmin


# --------------------------------------------------------------------------
# general integer-lattice passage DP
# --------------------------------------------------------------------------


def lattice_stop(int_atoms, probs, h, m_idx, T, clip_mode, clip_floor,
                 max_cells=DEFAULT_MAX_CELLS):
    order = np.argsort(int_atoms)
    atoms = np.asarray(int_atoms, dtype=np.int64)[order]
    pr = np.asarray(probs, dtype=np.float64)[order]
    amin, amax = int(atoms[0]), int(atoms[-1])
    f = np.zeros(T + 1)
    if clip_mode == 1 and T * amax < m_idx:
        return f, 1.0, 0.0, 0.0, np.zeros(0), 0
    clo = int(math.floor(clip_floor / h + _SNAP)) if clip_mode == 2 else None
    dead_mass = 0.0
    dead_val_sum = 0.0
    exp_acc = 0.0
    w = np.array([1.0])
    lo = 0
    cells = 0
    for n in range(1, T + 1):
        new_lo = lo + amin
        width = len(w) + (amax - amin)
        cells += width
        if cells > max_cells:
            raise RuntimeError(
                "lattice passage DP exceeded the cell budget "
                f"({cells:.2e} > {max_cells:.2e}); coarsen the lattice (larger h) "
                "or reduce the threshold"
            )
        wn = np.zeros(width + 1)
        for a, p in zip(atoms, pr):
            off = int(a) - amin
            wn[off : off + len(w)] += p * w
        # absorb at >= m_idx
        hi = new_lo + width
        k = hi - m_idx + 1
        if k > 0:
            k = min(k, len(wn))
            f[n] = wn[-k:].sum()
            wn = wn[:-k]
            hi = m_idx - 1
        # dead zone
        if clip_mode == 1:
            cut = m_idx - (T - n) * amax
            kk = cut - new_lo
            if kk > 0:
                kk = min(kk, len(wn))
                head = wn[:kk]
                vals = (new_lo + np.arange(kk, dtype=np.float64)) * h
                dead_mass += head.sum()
                dead_val_sum += float(np.dot(head, vals))
                wn = wn[kk:]
                new_lo += kk
        elif clip_mode == 2:
            kk = clo - new_lo + 1
            if kk > 0:
                kk = min(kk, len(wn))
                head = wn[:kk]
                idxs = new_lo + np.arange(kk, dtype=np.float64)
                exp_acc += float(np.dot(head, np.exp((idxs - m_idx) * h)))
                wn = wn[kk:]
                new_lo += kk
        # trim exact zeros at the edges to keep the window tight
        nz = np.flatnonzero(wn)
        if len(nz) == 0:
            w = wn[:0]
            break
        wn = wn[nz[0] : nz[-1] + 1]
        new_lo += int(nz[0])
        w = wn
        lo = new_lo
    return f, dead_mass, dead_val_sum, exp_acc, w, lo


# --------------------------------------------------------------------------
# Monte Carlo simulation of the stop-feedback scheme
# --------------------------------------------------------------------------


def simulate_trials(seed, trial0, n_trials, M, q, gamma, cap, cw_cdf, out_cdf,
                    inc, fixed_codebook):
    """Simulate n_trials independent uses of the coding scheme.

    Returns (err [K, n] uint8, tau_max [n] int64, trunc [n] uint8).

    Draw map (all uniforms are pure functions of seed/trial/purpose/index):
      purpose 0, idx 0: send-nothing coin (u < q)
      purpose 0, idx 1: message J = min(floor(u * M), M - 1)
      purpose 1, idx j*cap + t: codeword symbol of message j at time t
                                 (trial key 0 when fixed_codebook)
      purpose 2, idx k*cap + t: channel output of user k at time t
    """
    K = out_cdf.shape[0]
    err = np.zeros((K, n_trials), dtype=np.uint8)
    tau_max = np.zeros(n_trials, dtype=np.int64)
    trunc = np.zeros(n_trials, dtype=np.uint8)

    trials = np.arange(trial0, trial0 + n_trials, dtype=np.uint64)
    base0 = stream_base(seed, trials, 0)
    u_send = uniforms(base0, np.zeros(n_trials, dtype=np.uint64))
    u_msg = uniforms(base0, np.ones(n_trials, dtype=np.uint64))
    J = np.minimum((u_msg * M).astype(np.int64), M - 1)

    silent = u_send < q
    err[:, silent] = (J[silent] != M - 1).astype(np.uint8)[None, :]

    act = np.flatnonzero(~silent)
    if len(act) == 0:
        return err, tau_max, trunc

    cb_trials = np.zeros(len(act), dtype=np.uint64) if fixed_codebook else trials[act]
    base_cb = stream_base(seed, cb_trials, 1)
    base_out = stream_base(seed, trials[act], 2)

    S = np.zeros((len(act), K, M))
    user_active = np.ones((len(act), K), dtype=bool)
    tau_k = np.zeros((len(act), K), dtype=np.int64)
    decided_err = np.zeros((len(act), K), dtype=np.uint8)
    Jact = J[act]

    live = np.arange(len(act))  # indices into act-arrays still running
    for t in range(cap):
        if len(live) == 0:
            break
        # codeword column for every message (values identical across backends
        # because the draw is keyed, not sequential)
        idx_cb = (np.arange(M, dtype=np.uint64) * np.uint64(cap) + np.uint64(t))
        u_cb = uniforms(base_cb[live][:, None], idx_cb[None, :])
        col = _inv_cdf_rows(cw_cdf[None, :], u_cb)  # (n_live, M)
        x = col[np.arange(len(live)), Jact[live]]  # transmitted symbol

        for k in range(K):
            mask = user_active[live, k]
            if not mask.any():
                continue
            rows = np.flatnonzero(mask)
            g = live[rows]
            u_y = uniforms(base_out[g], np.uint64(k) * np.uint64(cap) + np.uint64(t))
            y = _inv_cdf_rows(out_cdf[k][x[rows]], u_y)
            S[g, k, :] += inc[k][col[rows], y[:, None]]
            crossed = S[g, k, :] >= gamma
            hit = crossed.any(axis=1)
            if hit.any():
                gh = g[hit]
                # decode the largest message index whose score crossed
                rev = crossed[hit][:, ::-1]
                jhat = M - 1 - np.argmax(rev, axis=1)
                decided_err[gh, k] = (jhat != Jact[gh]).astype(np.uint8)
                tau_k[gh, k] = t + 1
                user_active[gh, k] = False
        live = live[user_active[live].any(axis=1)]

    if len(live) > 0:
        still = user_active[live]
        decided_err[live] = np.where(still, 1, decided_err[live])
        tau_k[live] = np.where(still, cap, tau_k[live])
        trunc[act[live]] = 1

    err[:, act] = decided_err.T
    tau_max[act] = tau_k.max(axis=1)
    return err, tau_max, trunc


def _inv_cdf_rows(cdf_rows, u):
    """First index i with u < cdf[i], rowwise (cdf rows end at exactly 1.0)."""
    return (u[..., None] >= cdf_rows).sum(axis=-1).astype(np.int64)
