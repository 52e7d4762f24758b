"""Command line runner: ``tdimv <command> ...``.

Every CSV starts with ``# tdimv <version> config=<hash>`` where the hash
covers the parameters that determine the output (not thread count, output
path or timing).  JSON outputs carry the same data as keys.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from fractions import Fraction

from . import __version__
from .congruence import hensel_count, load_hensel_manifest, load_congruence_manifest, sweep_entry
from .counting import (classify_solution, count_Js, count_Js_bruteforce, fit_exponent,
                       lower_bound_terms, projection_bounds)
from .errors import BudgetExceeded, InputError, InvariantViolation, TdimvError
from .iterlab import IterationParams, delta_budget, eta_bound, render, run_iteration, verify_closed_forms
from .polycore import format_polynomial
from .tdisys import (FAMILY_PARAMS, Family, closed_form_stats, find_sigma, format_system, load_system,
                     parse_system_spec, system_from_spec)
from .weyl import classify_arc, eval_f, rational_approx_search, scan_alphas

EXIT_USAGE = 2
EXIT_BUDGET = 3
EXIT_INVARIANT = 4

_UNHASHED = {"threads", "out", "timing", "func", "command"}


class _Fail(Exception):
    """Output was produced but a checked invariant failed."""


# argument helpers

def _int_list(text: str) -> list:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _fraction_list(text: str) -> list:
    return [_fraction(v) for v in text.split(",") if v.strip()]


def _add_system_args(p):
    g = p.add_argument_group("system")
    g.add_argument("--family", choices=sorted(FAMILY_PARAMS))
    for name in ("k", "d", "l", "k1", "k2"):
        g.add_argument(f"--{name}", type=int)
    g.add_argument("--system", metavar="FILE", help="system spec file")


def _add_common(p):
    p.add_argument("--out", help="output file (relative paths resolve under $TDIMV_OUTPUT_DIR)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p.add_argument("--timing", action="store_true", help="fill in elapsed_ms columns")


def _family_from_args(args) -> Family | None:
    if args.family is None:
        return None
    params = {k: getattr(args, k) for k in FAMILY_PARAMS[args.family]}
    missing = [k for k, v in params.items() if v is None]
    if missing:
        raise InputError(f"--family {args.family} needs --{' --'.join(missing)}")
    return Family.make(args.family, **params)


def _system_from_args(args):
    """(system, family name, params string)."""
    if getattr(args, "system", None):
        with open(args.system) as fh:
            sysm = load_system(fh.read())
        label = sysm.label or ""
        name, _, params = label.partition(" ")
        return sysm, name or "custom", params
    fam = _family_from_args(args)
    if fam is None:
        raise InputError("give --family or --system")
    sysm = fam.build()
    return sysm, fam.name, " ".join(f"{k}={v}" for k, v in fam.params)


def _config_hash(args) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED}
    cfg["command"] = args.command
    if cfg.get("system"):
        with open(cfg["system"], "rb") as fh:
            cfg["system"] = hashlib.sha256(fh.read()).hexdigest()
    text = json.dumps(cfg, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _header(args) -> str:
    return f"# tdimv {__version__} config={_config_hash(args)}\n"


def _resolve_out(path: str) -> str:
    base = os.environ.get("TDIMV_OUTPUT_DIR")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _emit(args, text: str):
    if args.out:
        path = _resolve_out(args.out)
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_text(args, header: list, rows: list, comments=()) -> str:
    buf = io.StringIO()
    buf.write(_header(args))
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _json_text(args, payload: dict) -> str:
    out = {"tool": f"tdimv {__version__}", "config": _config_hash(args)}
    out.update(payload)
    return json.dumps(out, indent=2, sort_keys=False, default=str) + "\n"


def _elapsed(args, t0) -> str:
    return f"{(time.perf_counter() - t0) * 1000:.1f}" if args.timing else ""


def _vec(v) -> str:
    return " ".join(str(x) for x in v)


# commands

def cmd_build(args):
    if args.spec:
        with open(args.spec) as fh:
            spec = parse_system_spec(fh.read())
        sysm = system_from_spec(spec)
        fam = spec.family
    else:
        fam = _family_from_args(args)
        if fam is None:
            raise InputError("give --family or --spec")
        sysm = fam.build()
    text = format_system(sysm, fam)
    again = load_system(text)
    if again.forms != sysm.forms:
        raise InvariantViolation("emitted system does not round-trip")
    r, K = sysm.rank, sysm.weight
    if fam is not None:
        r0, K0 = closed_form_stats(fam)
        report = f"r={r} K={K}\nr={r} (closed-form {r0}) K={K} (closed-form {K0})"
    else:
        r0, K0 = r, K
        report = f"r={r} K={K}"
    if args.out:
        _emit(args, text)
    else:
        sys.stdout.write(text)
    print(report)
    if (r, K) != (r0, K0):
        raise _Fail("generated stats disagree with the closed forms")


def cmd_stats(args):
    sysm, name, params = _system_from_args(args)
    sigma = find_sigma(sysm, seed=args.seed)
    payload = {
        "family": name,
        "params": params,
        "dimension": sysm.dimension,
        "rank": sysm.rank,
        "degree": sysm.degree,
        "weight": sysm.weight,
        "degrees": list(sysm.degrees),
        "sigma": list(sigma.assignment),
        "sigma_witness_delta": str(sigma.witness_delta),
        "forms": [format_polynomial(f) for f in sysm.forms],
    }
    if args.family:
        r0, K0 = closed_form_stats(_family_from_args(args))
        payload["closed_form"] = {"rank": r0, "weight": K0}
    _emit(args, _json_text(args, payload))


def _check_schedule(xs):
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise InputError("X schedule must be strictly increasing")


def cmd_count(args):
    sysm, name, params = _system_from_args(args)
    _check_schedule(args.X)
    rows = []
    bad = []
    for s in args.s:
        for X in args.X:
            t0 = time.perf_counter()
            J = count_Js(sysm, s, X, threads=args.threads)
            el = _elapsed(args, t0)
            if args.check:
                J2 = count_Js_bruteforce(sysm, s, X)
                if J2 != J:
                    bad.append((s, X, J, J2))
            rows.append([name, params, s, X, J, el])
    _emit(args, _csv_text(args, ["family", "params", "s", "X", "J", "elapsed_ms"], rows))
    if bad:
        raise _Fail(f"engine and brute force disagree at {bad}")


def cmd_fit(args):
    sysm, name, params = _system_from_args(args)
    _check_schedule(args.X)
    counts = [count_Js(sysm, args.s, X, threads=args.threads) for X in args.X]
    fit = fit_exponent(zip(args.X, counts))
    payload = {
        "family": name,
        "params": params,
        "s": args.s,
        "X": args.X,
        "J": counts,
        "slope": round(fit.slope, 12),
        "intercept": round(fit.intercept, 12),
        "residual": round(fit.residual, 12),
        "target": 2 * args.s * sysm.dimension - sysm.weight,
    }
    _emit(args, _json_text(args, payload))


def cmd_lower(args):
    sysm, name, params = _system_from_args(args)
    rows = []
    bad = []
    for s in args.s:
        for X in args.X:
            J = count_Js(sysm, s, X, threads=args.threads)
            terms = [(t.label, t.value, t.certified) for t in lower_bound_terms(sysm, s, X, args.threads)]
            terms += [("one-step " + _vec(idx), v, True) for idx, v in projection_bounds(sysm, s, X, args.threads)]
            for label, value, cert in terms:
                holds = value <= J
                if cert and not holds:
                    bad.append((s, X, label))
                rows.append([name, params, s, X, J, label, str(value), int(cert), int(holds)])
    header = ["family", "params", "s", "X", "J", "term", "value", "certified", "holds"]
    _emit(args, _csv_text(args, header, rows))
    if bad:
        raise _Fail(f"certified lower bounds failed: {bad}")


def cmd_congruence(args):
    if args.action == "sweep":
        entries = load_congruence_manifest(args.manifest)
        rows = []
        bad = 0
        for entry in entries:
            if args.only and entry.family.name != args.only:
                continue
            sysm = entry.family.build()
            for row in sweep_entry(sysm, entry, all_m=args.all_m, budget=args.budget):
                bad += not row.ok
                rows.append([row.family, row.p, row.a, row.b, _vec(f"{v:+d}" for v in row.signs),
                             _vec(row.m), row.count, str(row.bound), int(row.ok)])
        header = ["family", "p", "a", "b", "sigma", "m", "count", "bound", "ok"]
        _emit(args, _csv_text(args, header, rows))
        if bad:
            raise _Fail(f"{bad} rows exceed the bound")
    else:
        rows = []
        bad = []
        for inst in load_hensel_manifest(args.manifest):
            c = hensel_count(inst, budget=args.budget)
            ok = c <= inst.bound and (inst.expected is None or c == inst.expected)
            if not ok:
                bad.append(inst.label)
            rows.append([inst.label, inst.prime, inst.level, c, inst.bound,
                         "" if inst.expected is None else inst.expected, int(ok)])
        header = ["label", "prime", "level", "count", "bound", "expected", "ok"]
        _emit(args, _csv_text(args, header, rows))
        if bad:
            raise _Fail(f"failed instances: {bad}")


def cmd_weyl(args):
    sysm, name, params = _system_from_args(args)
    r = sysm.rank
    if args.action == "scan":
        if args.grid ** r > 10**6:
            raise BudgetExceeded(f"grid^r = {args.grid ** r} exceeds 1000000")
        rows = []
        for alpha in scan_alphas(sysm, args.grid):
            f = eval_f(sysm, alpha, args.X)
            lab = classify_arc(sysm, alpha, args.X, args.theta)
            pt = lab.point
            rows.append([str(a) for a in alpha] + [f"{abs(f):.9f}", lab.kind,
                         pt.q if pt else ""] + ([str(v) for v in pt.a] if pt else [""] * r))
        header = [f"alpha{i}" for i in range(1, r + 1)] + ["abs_f", "arc", "q"] + [f"a{i}" for i in range(1, r + 1)]
        comments = [f"family={name} {params}".rstrip() + f" X={args.X} grid={args.grid} theta={args.theta}"]
        _emit(args, _csv_text(args, header, rows, comments))
    else:
        if args.alpha is None or len(args.alpha) != r:
            raise InputError(f"--alpha needs {r} comma separated rationals")
        cert = rational_approx_search(sysm, args.alpha, args.X, args.Y)
        payload = {"family": name, "params": params, "alpha": [str(a) for a in args.alpha],
                   "X": args.X, "Y": args.Y}
        if cert is None:
            payload["found"] = False
        else:
            if not cert.verify(args.alpha):
                raise InvariantViolation("certificate failed to verify")
            payload.update(found=True, q=cert.point.q, a=list(cert.point.a),
                           errors=[str(e) for e in cert.errors], bounds=[str(b) for b in cert.bounds],
                           method=cert.method)
        _emit(args, _json_text(args, payload))


def cmd_iterate(args):
    params = IterationParams.parse_policy(args.r, args.k, args.N, args.policy, seed=args.seed)
    trace = run_iteration(params)
    rep = verify_closed_forms(trace)
    rows = [[row["n"], row["a"], row["b"], "" if row["h"] is None else row["h"],
             render(row["psi"]), render(row["c"]), render(row["gamma"])] for row in trace.rows()]
    th = trace.theta
    eta = eta_bound(args.r, args.k, args.N)
    comments = [
        f"s={params.s} theta=N^(-1/2)*({th.base})^{th.exponent} ~ {float(th):.6e}",
        f"eta_bound={eta.numerator}/sqrt({eta.N}) ~ {float(eta):.6g}",
        f"delta_budget=({args.N}*{params.s})^(-{3 * args.N}) ~ {float(delta_budget(args.N, params.s)):.6e}",
        "b_n<sqrt(N)(s/r)^n fails at n=" + (_vec(rep.b_sqrtN_violations) or "none"),
    ]
    _emit(args, _csv_text(args, ["n", "a", "b", "h", "psi", "c", "gamma"], rows, comments))
    if not rep.ok:
        raise _Fail(f"closed-form checks failed: {rep}")


def _parse_points(text: str) -> list:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            pts.append(tuple(int(v) for v in chunk.split(",")))
        except ValueError:
            raise InputError(f"bad point {chunk!r}") from None
    return pts


def cmd_classify(args):
    sysm, name, params = _system_from_args(args)
    pts = _parse_points(args.solution)
    if args.coeffs is None:
        if len(pts) % 2:
            raise InputError("give --coeffs for an odd number of points")
        coeffs = [1] * (len(pts) // 2) + [-1] * (len(pts) // 2)
    else:
        coeffs = args.coeffs
    cl = classify_solution(pts, sysm, coeffs)
    payload = {
        "family": name,
        "params": params,
        "solution": [list(p) for p in pts],
        "coeffs": list(coeffs),
        "labels": cl.labels,
        "diagonal": cl.diagonal,
        "projected": cl.projected,
        "subset_sum": cl.subset_sum,
        "partition": [list(b) for b in cl.partition] if cl.partition else None,
    }
    _emit(args, _json_text(args, payload))


# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tdimv", description="Mean-value experiments for translation-dilation invariant systems.")
    ap.add_argument("--version", action="version", version=f"tdimv {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="generate a system and cross-check its rank and weight")
    _add_system_args(p)
    p.add_argument("--spec", metavar="FILE", help="system spec file")
    _add_common(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("stats", help="rank, weight, degrees and a sigma map as JSON")
    _add_system_args(p)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("count", help="J_s(X) series as CSV")
    _add_system_args(p)
    p.add_argument("--s", type=_int_list, required=True)
    p.add_argument("--X", type=_int_list, required=True)
    p.add_argument("--check", action="store_true", help="compare against brute force")
    _add_common(p)
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("fit", help="fit the growth exponent of J_s(X)")
    _add_system_args(p)
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--X", type=_int_list, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("lower-bounds", help="explicit lower bounds against exact counts")
    _add_system_args(p)
    p.add_argument("--s", type=_int_list, required=True)
    p.add_argument("--X", type=_int_list, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_lower)

    p = sub.add_parser("congruence", help="congruence counts against their bounds")
    p.add_argument("action", choices=["sweep", "hensel"])
    p.add_argument("--manifest", metavar="FILE", help="manifest (default: bundled)")
    p.add_argument("--all-m", action="store_true", help="one row per target m")
    p.add_argument("--only", choices=sorted(FAMILY_PARAMS), help="restrict the sweep to one family")
    p.add_argument("--budget", type=int, default=10**8)
    _add_common(p)
    p.set_defaults(func=cmd_congruence)

    p = sub.add_parser("weyl", help="Weyl sums, arcs and rational approximation")
    p.add_argument("action", choices=["scan", "approx"])
    _add_system_args(p)
    p.add_argument("--X", type=int, required=True)
    p.add_argument("--grid", type=int, default=8)
    p.add_argument("--theta", type=_fraction, default=Fraction(1, 4))
    p.add_argument("--alpha", type=_fraction_list)
    p.add_argument("--Y", type=int, default=50)
    _add_common(p)
    p.set_defaults(func=cmd_weyl)

    p = sub.add_parser("iterate", help="exact parameter iteration trace")
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--policy", default="zero", help="zero | max | random | list:h0,h1,...")
    p.add_argument("--seed", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_iterate)

    p = sub.add_parser("classify", help="label a solution as diagonal, projected or subset-sum")
    _add_system_args(p)
    p.add_argument("--solution", required=True, help="points separated by ';', coordinates by ','")
    p.add_argument("--coeffs", type=_int_list)
    _add_common(p)
    p.set_defaults(func=cmd_classify)
    return ap


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "reason": message}) + "\n")
    return code


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        ap.error("--threads must be positive")
    try:
        args.func(args)
    except BudgetExceeded as exc:
        return _fail(EXIT_BUDGET, "budget", str(exc))
    except (InvariantViolation, _Fail) as exc:
        return _fail(EXIT_INVARIANT, "invariant", str(exc))
    except (InputError, OSError) as exc:
        return _fail(EXIT_USAGE, "input", str(exc))
    except TdimvError as exc:
        return _fail(EXIT_INVARIANT, "internal", str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
