# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled compute kernels.

Same contract as ``_purepy``; see that module's docstring.  The Monte Carlo
kernel performs every floating-point operation with the same draw map and
accumulation order as the numpy backend, making the two bit-identical.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor, ceil

cnp.import_array()

NAME = "cython"
DEFAULT_MAX_CELLS = 4e9

ctypedef unsigned long long u64

cdef double SNAP = 1e-9
cdef u64 MIX_M1 = <u64>0xBF58476D1CE4E5B9ULL
cdef u64 MIX_M2 = <u64>0x94D049BB133111EBULL
cdef u64 PHI_C = <u64>0x9E3779B97F4A7C15ULL
cdef u64 PHI2_C = <u64>0xD1B54A32D192ED03ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef inline u64 mix3_u64(u64 z) nogil:
    z = (z ^ (z >> 30)) * MIX_M1
    z = (z ^ (z >> 27)) * MIX_M2
    return z ^ (z >> 31)


cdef inline u64 stream_base_u64(u64 seed, u64 trial, u64 purpose) nogil:
    cdef u64 k0 = mix3_u64(seed)
    cdef u64 k1 = mix3_u64(k0 ^ (trial + PHI_C))
    return mix3_u64(k1 ^ (purpose + PHI2_C))


cdef inline double u01(u64 base, u64 idx) nogil:
    cdef u64 z = mix3_u64(base + idx * PHI_C)
    return <double>(z >> 11) * INV53


# Python-visible RNG mirrors (used by the cross-backend agreement tests).

def mix3(z):
    cdef cnp.uint64_t[::1] v
    cdef Py_ssize_t i
    shp = np.shape(z)
    flat = np.asarray(z, dtype=np.uint64).reshape(-1).copy()
    v = flat
    for i in range(v.shape[0]):
        v[i] = mix3_u64(v[i])
    out = flat.reshape(shp)
    return out if shp else out[()]


def stream_base(seed, trial, purpose):
    cdef cnp.uint64_t[::1] tv, ov
    cdef u64 s = <u64>int(seed)
    cdef u64 p = <u64>int(purpose)
    cdef Py_ssize_t i
    shp = np.shape(trial)
    tr = np.asarray(trial, dtype=np.uint64).reshape(-1)
    out = np.empty(tr.shape[0], dtype=np.uint64)
    tv = tr
    ov = out
    for i in range(tv.shape[0]):
        ov[i] = stream_base_u64(s, tv[i], p)
    out = out.reshape(shp)
    return out if shp else out[()]


def uniforms(base, idx):
    cdef cnp.uint64_t[::1] bv, xv
    cdef double[::1] uv
    cdef Py_ssize_t i
    b = np.asarray(base, dtype=np.uint64)
    ix = np.asarray(idx, dtype=np.uint64)
    b, ix = np.broadcast_arrays(b, ix)
    shp = b.shape
    bf = np.ascontiguousarray(b).reshape(-1)
    xf = np.ascontiguousarray(ix).reshape(-1)
    out = np.empty(bf.shape[0], dtype=np.float64)
    bv = bf
    xv = xf
    uv = out
    for i in range(bv.shape[0]):
        uv[i] = u01(bv[i], xv[i])
    out = out.reshape(shp)
    return out if shp else out[()]


# ---------------------------------------------------------------------------
# two-atom exact passage DP
# ---------------------------------------------------------------------------


def two_atom_stop(double a_hi, double a_lo, double p_hi, double p_lo,
                  double gamma, long long T, int clip_mode, double clip_floor):
    cdef double d = a_hi - a_lo
    cdef double dead_mass = 0.0, dead_val_sum = 0.0, exp_acc = 0.0
    cdef long long jdead = 0, W, jmin = 0, m = 1
    cdef long long n, jc, jtop, jclip, head_end, jmax, j
    cdef double acc, val
    cdef double[::1] f, w, wn, tmp

    f_arr = np.zeros(T + 1, dtype=np.float64)
    f = f_arr
    if clip_mode == 1:
        jdead = <long long>floor((T * a_hi - gamma) / d + SNAP) + 1
        if jdead <= 0:
            return f_arr, 1.0, 0.0, 0.0, np.zeros(0), 0
        W = jdead + 3
    else:
        W = <long long>ceil((gamma - clip_floor) / d) + 4
    if W > T + 2:
        W = T + 2

    buf_a = np.zeros(W + 2, dtype=np.float64)
    buf_b = np.zeros(W + 2, dtype=np.float64)
    w = buf_a
    wn = buf_b
    w[0] = 1.0

    for n in range(1, T + 1):
        jmax = jmin + m
        jc = <long long>floor((n * a_hi - gamma) / d + SNAP)
        head_end = jc + 1
        if head_end < jmin:
            head_end = jmin
        if clip_mode == 1:
            jtop = jdead - 1
        else:
            jclip = <long long>ceil((n * a_hi - clip_floor) / d - SNAP)
            jtop = jclip - 1
        if jtop > jmax:
            jtop = jmax

        # new w[j] = p_hi * w_old[j] + p_lo * w_old[j-1]; old range [jmin, jmin+m-1]
        for j in range(head_end, jtop + 1):
            val = 0.0
            if jmin <= j <= jmin + m - 1:
                val = p_hi * w[j - jmin]
            if jmin <= j - 1 <= jmin + m - 1:
                val = val + p_lo * w[j - 1 - jmin]
            wn[j - head_end] = val
        acc = 0.0
        for j in range(jmin, head_end):
            val = 0.0
            if jmin <= j <= jmin + m - 1:
                val = p_hi * w[j - jmin]
            if jmin <= j - 1 <= jmin + m - 1:
                val = val + p_lo * w[j - 1 - jmin]
            acc += val
        f[n] = acc
        for j in range(jtop + 1, jmax + 1):
            val = 0.0
            if jmin <= j <= jmin + m - 1:
                val = p_hi * w[j - jmin]
            if jmin <= j - 1 <= jmin + m - 1:
                val = val + p_lo * w[j - 1 - jmin]
            if clip_mode == 1:
                dead_mass += val
                dead_val_sum += val * (n * a_hi - d * j)
            else:
                exp_acc += val * exp(n * a_hi - d * j - gamma)
        m = jtop - head_end + 1
        jmin = head_end
        tmp = w
        w = wn
        wn = tmp
        if m <= 0:
            m = 0
            break

    live = np.asarray(w[:m]).copy() if m > 0 else np.zeros(0)
    return f_arr, dead_mass, dead_val_sum, exp_acc, live, jmin


# ---------------------------------------------------------------------------
# general integer-lattice passage DP
# ---------------------------------------------------------------------------


cdef void _lattice_step(double[::1] w, long long m, cnp.int64_t[::1] atoms,
                        double[::1] pr, long long n_atoms, long long amin,
                        double[::1] wn) nogil:
    cdef long long ai, off, i
    cdef double p
    for ai in range(n_atoms):
        off = atoms[ai] - amin
        p = pr[ai]
        for i in range(m):
            wn[off + i] += p * w[i]


cdef double _sum_range(double[::1] a, long long lo, long long hi) nogil:
    cdef double s = 0.0
    cdef long long i
    for i in range(lo, hi):
        s += a[i]
    return s


cdef double _wsum_vals(double[::1] a, long long lo, long long hi,
                       long long base, double h) nogil:
    cdef double s = 0.0
    cdef long long i
    for i in range(lo, hi):
        s += a[i] * ((base + i) * h)
    return s


cdef double _wsum_exp(double[::1] a, long long lo, long long hi,
                      long long base, long long m_idx, double h) nogil:
    cdef double s = 0.0
    cdef long long i
    for i in range(lo, hi):
        s += a[i] * exp((base + i - m_idx) * h)
    return s


def lattice_stop(int_atoms, probs, double h, long long m_idx, long long T,
                 int clip_mode, double clip_floor, double max_cells=DEFAULT_MAX_CELLS):
    cdef cnp.int64_t[::1] atoms
    cdef double[::1] pr, w, wn
    cdef double[::1] f
    cdef long long n_atoms, amin, amax, clo = 0
    cdef double dead_mass = 0.0, dead_val_sum = 0.0, exp_acc = 0.0, cells = 0.0
    cdef long long lo = 0, n, m, width, new_lo, hi, k, kk, cut
    cdef long long first, last, i

    order = np.argsort(int_atoms)
    atoms_arr = np.ascontiguousarray(np.asarray(int_atoms, dtype=np.int64)[order])
    pr_arr = np.ascontiguousarray(np.asarray(probs, dtype=np.float64)[order])
    atoms = atoms_arr
    pr = pr_arr
    n_atoms = atoms.shape[0]
    amin = atoms[0]
    amax = atoms[n_atoms - 1]

    f_arr = np.zeros(T + 1, dtype=np.float64)
    f = f_arr
    if clip_mode == 1 and T * amax < m_idx:
        return f_arr, 1.0, 0.0, 0.0, np.zeros(0), 0
    if clip_mode == 2:
        clo = <long long>floor(clip_floor / h + SNAP)

    w_arr = np.ones(1, dtype=np.float64)
    w = w_arr
    m = 1
    for n in range(1, T + 1):
        new_lo = lo + amin
        width = m + (amax - amin)
        cells += width
        if cells > max_cells:
            raise RuntimeError(
                "lattice passage DP exceeded the cell budget "
                f"({cells:.2e} > {max_cells:.2e}); coarsen the lattice (larger h) "
                "or reduce the threshold"
            )
        wn_arr = np.zeros(width + 1, dtype=np.float64)
        wn = wn_arr
        _lattice_step(w, m, atoms, pr, n_atoms, amin, wn)
        hi = new_lo + width
        k = hi - m_idx + 1
        if k > 0:
            if k > width + 1:
                k = width + 1
            f[n] = _sum_range(wn, width + 1 - k, width + 1)
            wn_arr = wn_arr[: width + 1 - k]
            wn = wn_arr
            hi = m_idx - 1
        if clip_mode == 1:
            cut = m_idx - (T - n) * amax
            kk = cut - new_lo
            if kk > 0:
                if kk > wn.shape[0]:
                    kk = wn.shape[0]
                dead_mass += _sum_range(wn, 0, kk)
                dead_val_sum += _wsum_vals(wn, 0, kk, new_lo, h)
                wn_arr = wn_arr[kk:]
                wn = wn_arr
                new_lo += kk
        elif clip_mode == 2:
            kk = clo - new_lo + 1
            if kk > 0:
                if kk > wn.shape[0]:
                    kk = wn.shape[0]
                exp_acc += _wsum_exp(wn, 0, kk, new_lo, m_idx, h)
                wn_arr = wn_arr[kk:]
                wn = wn_arr
                new_lo += kk
        first = -1
        last = -1
        for i in range(wn.shape[0]):
            if wn[i] != 0.0:
                first = i
                break
        if first < 0:
            w_arr = wn_arr[:0]
            m = 0
            break
        for i in range(wn.shape[0] - 1, -1, -1):
            if wn[i] != 0.0:
                last = i
                break
        w_arr = np.ascontiguousarray(wn_arr[first : last + 1])
        w = w_arr
        m = w.shape[0]
        lo = new_lo + first
    return f_arr, dead_mass, dead_val_sum, exp_acc, np.asarray(w_arr).copy(), lo


# ---------------------------------------------------------------------------
# Monte Carlo simulation of the stop-feedback scheme
# ---------------------------------------------------------------------------


def simulate_trials(seed, long long trial0, long long n_trials, long long M,
                    double q, double gamma, long long cap, cw_cdf, out_cdf,
                    inc, int fixed_codebook):
    cdef double[::1] cwc = np.ascontiguousarray(cw_cdf, dtype=np.float64)
    out_c = np.ascontiguousarray(out_cdf, dtype=np.float64)
    inc_c = np.ascontiguousarray(inc, dtype=np.float64)
    cdef double[:, :, ::1] oc = out_c
    cdef double[:, :, ::1] ic = inc_c
    cdef long long K = out_c.shape[0]
    cdef long long nx = out_c.shape[1]
    cdef long long ny = out_c.shape[2]

    err_arr = np.zeros((K, n_trials), dtype=np.uint8)
    tau_arr = np.zeros(n_trials, dtype=np.int64)
    trunc_arr = np.zeros(n_trials, dtype=np.uint8)
    cdef unsigned char[:, ::1] err = err_arr
    cdef cnp.int64_t[::1] tau_max = tau_arr
    cdef unsigned char[::1] trunc = trunc_arr

    S_arr = np.zeros((K, M), dtype=np.float64)
    col_arr = np.zeros(M, dtype=np.int64)
    act_arr = np.zeros(K, dtype=np.uint8)
    tk_arr = np.zeros(K, dtype=np.int64)
    cdef double[:, ::1] S = S_arr
    cdef cnp.int64_t[::1] col = col_arr
    cdef unsigned char[::1] active = act_arr
    cdef cnp.int64_t[::1] tau_k = tk_arr

    cdef u64 seed_u = <u64>int(seed)
    cdef u64 base0, base_cb, base_out
    cdef long long b, tr, J, t, j, k, x, y, jhat, n_active, tmax
    cdef double u, smax

    for b in range(n_trials):
        tr = trial0 + b
        base0 = stream_base_u64(seed_u, <u64>tr, 0)
        u = u01(base0, 1)
        J = <long long>(u * M)
        if J > M - 1:
            J = M - 1
        if u01(base0, 0) < q:
            for k in range(K):
                err[k, b] = 1 if J != M - 1 else 0
            tau_max[b] = 0
            continue
        base_cb = stream_base_u64(seed_u, 0 if fixed_codebook else <u64>tr, 1)
        base_out = stream_base_u64(seed_u, <u64>tr, 2)
        for k in range(K):
            active[k] = 1
            tau_k[k] = 0
            for j in range(M):
                S[k, j] = 0.0
        n_active = K
        for t in range(cap):
            if n_active == 0:
                break
            for j in range(M):
                u = u01(base_cb, <u64>(j * cap + t))
                x = 0
                while x < nx - 1 and u >= cwc[x]:
                    x += 1
                col[j] = x
            x = col[J]
            for k in range(K):
                if not active[k]:
                    continue
                u = u01(base_out, <u64>(k * cap + t))
                y = 0
                while y < ny - 1 and u >= oc[k, x, y]:
                    y += 1
                smax = -1e300
                for j in range(M):
                    S[k, j] += ic[k, col[j], y]
                    if S[k, j] > smax:
                        smax = S[k, j]
                if smax >= gamma:
                    jhat = M - 1
                    while S[k, jhat] < gamma:
                        jhat -= 1
                    err[k, b] = 1 if jhat != J else 0
                    tau_k[k] = t + 1
                    active[k] = 0
                    n_active -= 1
        if n_active > 0:
            trunc[b] = 1
            for k in range(K):
                if active[k]:
                    err[k, b] = 1
                    tau_k[k] = cap
        tmax = 0
        for k in range(K):
            if tau_k[k] > tmax:
                tmax = tau_k[k]
        tau_max[b] = tmax
    return err_arr, tau_arr, trunc_arr
