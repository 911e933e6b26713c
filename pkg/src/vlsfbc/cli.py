"""Command-line surface.

Subcommands
-----------
analyze    channel constants: capacity, caid, dispersions, assumption flags
achieve    achievability curve log M(ell) as CSV
converse   converse curve log M(ell) as CSV
approx     second-order normal-approximation curve as CSV
constants  Xi_a / Xi_c block, optional CSV of the maximizer profile
simulate   Monte Carlo runs over a gamma ladder, checked against the bounds
figure2    the four curve-family CSVs for the BSC(0.11) reference setup
oracle     brute-force converse summand L_t for tiny t

Exit codes: 0 success, 1 usage error, 2 numeric/scope failure.  All outputs
are deterministic for a fixed flag set, so repeated runs are byte-identical.
"""

import argparse
import csv
import math
import sys

import numpy as np

from . import asymptotics as asy
from . import bounds, simulator
from .cache import default_cache_dir
from .channel import analyze, converse_capacity_condition, load_channel, replicate

LOG2 = math.log(2.0)


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return ""
    return "%.12g" % x


def _add_common(p):
    p.add_argument("--channel", required=True, help="channel JSON path")
    p.add_argument("--replicate-K", type=int, default=None, metavar="K",
                   help="replicate a single-user channel into K identical users")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--out", default=None, help="output CSV path")
    p.add_argument("--bits", action="store_true",
                   help="also print rates/capacities in bits")


def _add_ell(p):
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--ell", type=float, default=None,
                   help="single expected-length target (overrides the grid)")
    p.add_argument("--ell-min", type=float, default=100.0)
    p.add_argument("--ell-max", type=float, default=2000.0)
    p.add_argument("--ell-step", type=float, default=50.0)


def build_parser():
    ap = _Parser(prog="vlsfbc", description=__doc__,
                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="channel constants and assumption flags")
    _add_common(p)

    p = sub.add_parser("achieve", help="achievability curve CSV")
    _add_common(p)
    _add_ell(p)
    p.add_argument("--mode", choices=("simple", "tight"), default="simple")
    p.add_argument("--gamma-points", type=int, default=None)
    p.add_argument("--lattice-h", type=float, default=1e-4)
    p.add_argument("--tail-tol", type=float, default=1e-12)

    p = sub.add_parser("converse", help="converse curve CSV")
    _add_common(p)
    _add_ell(p)
    p.add_argument("--eta-points", type=int, default=None)

    p = sub.add_parser("approx", help="normal-approximation curve CSV")
    _add_common(p)
    _add_ell(p)
    p.add_argument("--w-max", type=float, default=12.0)
    p.add_argument("--grid-n", type=int, default=2048)

    p = sub.add_parser("constants", help="second-order constants")
    _add_common(p)
    p.add_argument("--w-max", type=float, default=12.0)
    p.add_argument("--grid-n", type=int, default=2048)

    p = sub.add_parser("simulate", help="Monte Carlo vs analytic bounds")
    _add_common(p)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--gamma", required=True,
                   help="threshold in nats; comma-separated list for a ladder")
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("figure2", help="reference BSC(0.11) curve families")
    _add_common(p)
    _add_ell(p)
    p.add_argument("--mode", choices=("simple", "tight"), default="simple")
    p.add_argument("--out-dir", default=".",
                   help="directory for the four CSV files")

    p = sub.add_parser("oracle", help="brute-force converse summand L_t")
    _add_common(p)
    p.add_argument("--M", type=int, required=True)
    p.add_argument("--eta", type=float, default=1e-3)
    p.add_argument("--t-max", type=int, default=6)
    return ap


def _load(args):
    try:
        ch = load_channel(args.channel)
    except FileNotFoundError as e:
        raise _Usage(f"channel file not found: {args.channel}") from e
    except (KeyError, TypeError, ValueError) as e:
        raise _Usage(f"malformed channel file {args.channel}: {e}") from e
    if args.replicate_K is not None:
        if ch.K != 1:
            raise _Usage("--replicate-K needs a single-user channel file")
        if args.replicate_K < 1:
            raise _Usage("--replicate-K must be >= 1")
        ch = replicate(ch.users[0], args.replicate_K, name=ch.name)
    return ch


def _cachedir(args):
    if args.no_cache:
        return None
    return args.cache_dir or default_cache_dir()


def _ell_grid(args):
    if args.ell is not None:
        if args.ell <= 0:
            raise _Usage("expected length must be positive")
        return np.array([args.ell])
    if args.ell_min <= 0 or args.ell_max < args.ell_min or args.ell_step <= 0:
        raise _Usage("need 0 < ell-min <= ell-max and ell-step > 0")
    g = np.arange(args.ell_min, args.ell_max + 1e-9, args.ell_step)
    if len(g) == 0:
        raise _Usage("empty expected-length grid")
    return g


def _check_eps(args):
    if not (0.0 < args.eps < 1.0):
        raise _Usage("eps must lie strictly between 0 and 1")


_CSV_HEADER = ["kind", "K", "ell", "eps", "logM_nats", "rate_nats",
               "rate_bits", "gamma", "q", "eta"]


def _write_rows(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        w.writerows(rows)


def _row(kind, K, ell, eps, logM, gamma=None, q=None, eta=None):
    rate = logM / ell if ell > 0 else math.nan
    return [kind, K, _fmt(ell), _fmt(eps), _fmt(logM), _fmt(rate),
            _fmt(rate / LOG2), _fmt(gamma), _fmt(q), _fmt(eta)]


def _print_rows(rows):
    print(",".join(_CSV_HEADER))
    for r in rows:
        print(",".join(str(c) for c in r))


# ---------------------------------------------------------------------------
# subcommand drivers
# ---------------------------------------------------------------------------


def _cmd_analyze(args):
    ch = _load(args)
    an = analyze(ch)
    unit = 1.0 / LOG2 if args.bits else 1.0
    suffix = "bits" if args.bits else "nats"
    print(f"channel = {ch.name or args.channel}  (K={ch.K}, |X|={ch.input_size})")
    print(f"C = {an.capacity_C * unit:.10f} {suffix}")
    print("pstar =", " ".join("%.10f" % p for p in an.pstar))
    print("Ck =", " ".join("%.10f" % (c * unit) for c in an.Ck))
    print("Ik_at_pstar =", " ".join("%.10f" % (v * unit) for v in an.Ik_at_pstar))
    print("Vk_conditional =", " ".join("%.10f" % v for v in an.Vk))
    print("Uk_unconditional =", " ".join("%.10f" % v for v in an.Uk))
    print(f"dispersion_convention = {an.dispersion_convention}")
    print("rho_k =", " ".join("%.10f" % r for r in an.rho_k))
    print(f"V_geomean = {an.V_geomean:.10f}")
    for k, v in sorted(an.assumption_flags.items()):
        print(f"flag.{k} = {v}")
    print("sorted_capacity_condition =",
          converse_capacity_condition(an.Ck, an.capacity_C))
    return 0


def _cmd_achieve(args):
    _check_eps(args)
    ch = _load(args)
    an = analyze(ch)
    ells = _ell_grid(args)
    spec = None
    if args.gamma_points is not None:
        spec = (args.gamma_points, 0.3 * an.capacity_C * ells.min(),
                2.0 * an.capacity_C * ells.max())
    pts = bounds.achievability_curve(
        an, args.eps, ells, mode=args.mode, gamma_grid_spec=spec,
        tail_tol=args.tail_tol, h=args.lattice_h, cache_dir=_cachedir(args),
    )
    rows = [_row("ach", ch.K, p.ell, p.eps, p.logM, gamma=p.gamma, q=p.q)
            for p in pts]
    if args.out:
        _write_rows(args.out, rows)
    else:
        _print_rows(rows)
    return 0


def _cmd_converse(args):
    _check_eps(args)
    ch = _load(args)
    an = analyze(ch)
    ells = _ell_grid(args)
    spec = None if args.eta_points is None else (args.eta_points, 1e-6, 0.3)
    pts = bounds.converse_curve(an, args.eps, ells, eta_grid_spec=spec,
                                cache_dir=_cachedir(args))
    rows = [_row("conv", ch.K, p.ell_lower_bound, p.eps, p.logM, eta=p.eta)
            for p in pts]
    if args.out:
        _write_rows(args.out, rows)
    else:
        _print_rows(rows)
    return 0


def _cmd_approx(args):
    _check_eps(args)
    ch = _load(args)
    an = analyze(ch)
    ells = _ell_grid(args)
    consts = asy.second_order_constants(
        an, w_range=(-args.w_max, args.w_max), grid_n=args.grid_n)
    na = asy.normal_approx(an, consts, args.eps, ells)
    rows = [_row("approx", ch.K, float(l), args.eps, float(m))
            for l, m in zip(ells, np.atleast_1d(na.logM))]
    if args.out:
        _write_rows(args.out, rows)
    else:
        _print_rows(rows)
    return 0


def _cmd_constants(args):
    ch = _load(args)
    an = analyze(ch)
    consts = asy.second_order_constants(
        an, w_range=(-args.w_max, args.w_max), grid_n=args.grid_n)
    print(f"channel = {ch.name or args.channel}  (K={ch.K})")
    print(f"C = {an.capacity_C:.10f} nats")
    print(f"V_geomean = {an.V_geomean:.10f}")
    print("rho_k =", " ".join("%.10f" % r for r in an.rho_k))
    d = consts.xi_a_detail
    print(f"xi_a = {consts.xi_a:.6f}   (converged={d.converged}, "
          f"start_spread={d.start_spread:.2e}, quad_err={d.quad_err:.2e})")
    c = consts.xi_c_detail
    print(f"xi_c = {consts.xi_c:.6f}   (grid_gap={c.grid_gap:.2e}, "
          f"max_residual={c.max_residual:.2e}, tail={c.tail_bound:.2e})")
    print(f"emax_gauss = {consts.emax_gauss:.10f}")
    print(f"equality_case = {consts.equality_case}")
    try:
        lm = asy.lemma1_check(an)
        print(f"profile_slope_D = {lm.D:.6f}")
        print(f"profile_region_ok = {lm.cond_region_ok}  "
              f"(margins {lm.region_margins[0]:.6f}, {lm.region_margins[1]:.6f})")
        print(f"profile_sign_ok = {lm.cond_sign_ok}  (value {lm.sign_value:.6f})")
        print(f"profile_slope_bounds_ok = {lm.vprime_bounds_ok}")
    except ValueError:
        pass  # not a two-block/two-user channel; nothing to report
    if args.out:
        prof = consts.xi_c_detail.profile
        bar = asy.xi_a_bar(an, prof)
        print(f"xi_a_bar_hatv_profile = {bar.value:.6f}")
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            head = (["w"] + [f"v{i}" for i in range(an.input_size)]
                    + [f"F_H{k+1}" for k in range(an.K)])
            w.writerow(head)
            for i, wv in enumerate(prof.w_grid):
                w.writerow([_fmt(wv)]
                           + [_fmt(x) for x in prof.directions[i]]
                           + [_fmt(x) for x in prof.cdf_values[i]])
    return 0


def _cmd_simulate(args):
    ch = _load(args)
    an = analyze(ch)
    try:
        gammas = [float(g) for g in args.gamma.split(",") if g.strip()]
    except ValueError as e:
        raise _Usage(f"bad --gamma list: {e}") from e
    if not gammas:
        raise _Usage("--gamma needs at least one value")
    if args.trials < 1:
        raise _Usage("--trials must be positive")
    rows = []
    for g in gammas:
        cfg = simulator.SimConfig(channel=ch, pstar=an.pstar, M=args.M,
                                  gamma=g, q=args.q, trials=args.trials,
                                  seed=args.seed)
        rep = simulator.validate_against_bounds(cfg, an)
        s = rep.sim
        print(f"gamma = {g:.6f}   (backend {s.backend}, {args.trials} trials)")
        for k in range(ch.K):
            print(f"  user {k + 1}: err = {s.error_rates[k]:.3e}  "
                  f"wilson99 = [{s.wilson_lower99[k]:.3e}, {s.wilson_upper99[k]:.3e}]")
        t = "n/a" if rep.bound_eps_tight is None else f"{rep.bound_eps_tight:.3e}"
        print(f"  bound eps: simple = {rep.bound_eps_simple:.3e}  tight = {t}")
        print(f"  mean tau* = {s.mean_tau_star:.4f} +- {s.se_tau_star:.4f}  "
              f"analytic = {rep.expected_length:.4f}  "
              f"({rep.length_gap_sigmas:.2f} sigma)")
        print(f"  truncated = {s.truncation_count}")
        if not rep.failures:
            verdict = "all passed"
        elif rep.hard_violations:
            verdict = "VIOLATED " + ", ".join(rep.hard_violations)
        else:
            verdict = ("inconclusive at this trial count: "
                       + ", ".join(rep.failures))
        print(f"  checks: {verdict}")
        for k in range(ch.K):
            rows.append([
                _fmt(g), _fmt(args.q), args.M, args.trials, args.seed, k + 1,
                _fmt(s.error_rates[k]), _fmt(s.wilson_lower99[k]),
                _fmt(s.wilson_upper99[k]), _fmt(rep.bound_eps_simple),
                _fmt(rep.bound_eps_tight), _fmt(s.mean_tau_star),
                _fmt(s.se_tau_star), _fmt(rep.expected_length),
                s.truncation_count, len(rep.failures) == 0,
            ])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gamma", "q", "M", "trials", "seed", "user",
                        "err_rate", "wilson_lo", "wilson_hi", "bound_simple",
                        "bound_tight", "mean_tau_star", "se_tau_star",
                        "analytic_length", "truncated", "all_checks_ok"])
            w.writerows(rows)
    return 0


def _cmd_figure2(args):
    import os

    _check_eps(args)
    ells = _ell_grid(args)
    cache = _cachedir(args)
    from .channel import make_bsc

    bsc = make_bsc(0.11)
    os.makedirs(args.out_dir, exist_ok=True)

    ach_rows, conv_rows, approx_rows, single_rows = [], [], [], []
    for K in (1, 2, 3, 4):
        an = analyze(replicate(bsc, K, name=f"bsc011_k{K}"))
        # the K = 1 reference curve is the point-to-point bound, which is the
        # pairing-probability (tight) evaluation; the K > 1 family follows the
        # requested mode
        mode = "tight" if K == 1 else args.mode
        pts = bounds.achievability_curve(an, args.eps, ells, mode=mode,
                                         cache_dir=cache)
        tgt = single_rows if K == 1 else ach_rows
        kind = "single_ach" if K == 1 else "ach"
        for p in pts:
            tgt.append(_row(kind, K, p.ell, p.eps, p.logM, gamma=p.gamma, q=p.q))
        if K > 1:
            cps = bounds.converse_curve(an, args.eps, ells, cache_dir=cache)
            for p in cps:
                conv_rows.append(_row("conv", K, p.ell_lower_bound, p.eps,
                                      p.logM, eta=p.eta))
    for K in range(2, 9):
        an = analyze(replicate(bsc, K, name=f"bsc011_k{K}"))
        consts = asy.second_order_constants(an)
        na = asy.normal_approx(an, consts, args.eps, ells)
        for l, m in zip(ells, np.atleast_1d(na.logM)):
            approx_rows.append(_row("approx", K, float(l), args.eps, float(m)))

    for name, rows in (("achievability.csv", ach_rows),
                       ("converse.csv", conv_rows),
                       ("normal_approx.csv", approx_rows),
                       ("single_user.csv", single_rows)):
        _write_rows(os.path.join(args.out_dir, name), rows)
        print(f"wrote {os.path.join(args.out_dir, name)} ({len(rows)} rows)")
    return 0


def _cmd_oracle(args):
    ch = _load(args)
    if args.M < 2:
        raise _Usage("--M must be at least 2")
    if not (0 < args.eta < 1):
        raise _Usage("--eta must lie in (0, 1)")
    if args.t_max < 1 or args.t_max > 12:
        raise _Usage("--t-max must lie in 1..12 (exhaustive enumeration)")
    print(f"thr = log M + log eta = {math.log(args.M) + math.log(args.eta):.6f}")
    for t in range(1, args.t_max + 1):
        best, xbest, probs = bounds.converse_Lt_bruteforce(ch, args.M, args.eta, t)
        print(f"t = {t}: L_t = {best:.12g}  argmax x^t = {xbest}  "
              f"per-user = {' '.join('%.12g' % p for p in probs)}")
    return 0


_DISPATCH = {
    "analyze": _cmd_analyze,
    "achieve": _cmd_achieve,
    "converse": _cmd_converse,
    "approx": _cmd_approx,
    "constants": _cmd_constants,
    "simulate": _cmd_simulate,
    "figure2": _cmd_figure2,
    "oracle": _cmd_oracle,
}


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        return _DISPATCH[args.command](args)
    except _Usage as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
