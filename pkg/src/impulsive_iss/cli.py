"""Command-line interface.

Results go to stdout as ``key: value`` lines, diagnostics to stderr.  Exit
codes: 0 success or positive verdict, 1 negative verdict, 2 usage error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .core import RateCoeffs, sup_norm
from .dsl import load_model
from .dwell import DwellParams, adt_worst_pair, in_class, parse_impulse_spec
from .errors import ImpulsiveError
from .lyapunov import (check_flow, check_jump, check_razumikhin, iss_envelope,
                       load_certificate, theorem_gate, vector_blocks)
from .sim import SimConfig, simulate
from .smallgain import cycle_condition, find_scaling_vector, read_gain_matrix

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class Output:
    def __init__(self, quiet=False):
        self.quiet = quiet

    def kv(self, key, value):
        print(f"{key}: {value}")

    def note(self, msg):
        if not self.quiet:
            print(msg, file=sys.stderr)


# ---------------------------------------------------------------- helpers


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"not a comma separated list of numbers: {text!r}") from None


def _inputs(pairs):
    out = {}
    for item in pairs or ():
        name, eq, value = item.partition("=")
        if not eq:
            raise UsageError(f"input must read NAME=VALUE, got {item!r}")
        vals = _floats(value)
        out[name.strip()] = vals[0] if len(vals) == 1 else vals
    return out


def _need_file(path, what):
    if path is not None and not os.path.isfile(path):
        raise UsageError(f"{what} file not found: {path}")


def _impulse_file(spec):
    if spec and spec.startswith("file:"):
        _need_file(spec[5:], "impulse")


def _out_dir(args):
    if args.out:
        os.makedirs(args.out, exist_ok=True)
    return args.out


def _simulate_from_args(args, model):
    seq = parse_impulse_spec(args.impulses, args.t0, args.horizon, seed=args.seed)
    init = _floats(args.init) if args.init else [0.0] * model.dim
    if len(init) == 1 and model.dim > 1:
        init = init * model.dim
    cfg = SimConfig(dt=args.dt, horizon=args.horizon, inputs=_inputs(args.input), t0=args.t0,
                    allow_short_gaps=getattr(args, "allow_short_gaps", False))
    return seq, simulate(model, seq, init, cfg)


def _sim_flags(p, impulses_required=True):
    p.add_argument("--impulses", required=impulses_required, default="none",
                   help="periodic:P, poisson:RATE[:seedN], file:PATH or none")
    p.add_argument("--init", help="initial state (constant history), comma separated")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--input", action="append", metavar="NAME=V[,V...]",
                   help="constant input value (repeatable)")


# --------------------------------------------------------------- commands


def cmd_simulate(args, out):
    _need_file(args.model, "model")
    _impulse_file(args.impulses)
    model = load_model(args.model)
    seq, traj = _simulate_from_args(args, model)
    out.kv("samples", traj.n_samples)
    out.kv("impulses", len(traj.events))
    out.kv("t_end", repr(traj.t_end))
    out.kv("final_state", ", ".join(repr(float(v)) for v in traj.x[-1]))
    out.kv("sup_norm", repr(sup_norm(traj, (traj.t0, traj.t_end))))
    d = _out_dir(args)
    if d:
        traj.to_csv(os.path.join(d, "traj.csv"))
        out.kv("traj", os.path.join(d, "traj.csv"))
    return EXIT_OK


def cmd_smallgain(args, out):
    _need_file(args.gains, "gain matrix")
    gamma = read_gain_matrix(args.gains)
    rep = cycle_condition(gamma, args.alpha)
    out.kv("rho", f"{rep.rho:.5f}")
    out.kv("threshold", repr(rep.threshold))
    if rep.worst_cycle:
        cyc = [str(k + 1) for k in rep.worst_cycle]
        out.kv("worst_cycle", "->".join(cyc + cyc[:1]))
        out.kv("worst_cycle_product", f"{rep.worst_value:.5f}")
    out.kv("smallgain", "pass" if rep.ok else "fail")
    s = find_scaling_vector(gamma, args.alpha)
    if s is not None:
        out.kv("s", ", ".join(repr(float(v)) for v in s))
    return EXIT_OK if rep.ok else EXIT_NEGATIVE


def cmd_dwell(args, out):
    _impulse_file(args.impulses)
    seq = parse_impulse_spec(args.impulses, args.t0, args.horizon, seed=args.seed)
    sup, s, t, s_left, t_left = adt_worst_pair(seq, args.c, args.d, args.lam)
    member = in_class(seq, DwellParams(args.mu, args.lam), RateCoeffs(args.c, args.d))
    out.kv("sup", repr(sup))
    out.kv("impulses", len(seq))
    out.kv("worst_s", repr(s) + ("-0" if s_left else ""))
    out.kv("worst_t", repr(t) + ("-0" if t_left else ""))
    out.kv("in_class", str(member).lower())
    return EXIT_OK if member else EXIT_NEGATIVE


def cmd_certify(args, out):
    _need_file(args.model, "model")
    _need_file(args.cert, "certificate")
    _impulse_file(args.impulses)
    model = load_model(args.model)
    cert = load_certificate(args.cert)
    vector_blocks(cert, model)
    seq = parse_impulse_spec(args.impulses, args.t0, args.horizon, seed=args.seed)
    verdict = theorem_gate(cert, None, seq, args.flavor, args.mu, args.lam)
    for line in verdict.lines():
        key, _, value = line.partition(": ")
        out.kv(key, value)
    ok = verdict.iss
    if args.check:
        _, traj = _simulate_from_args(args, model)
        if args.flavor == "razumikhin" and model.theta > 0:
            reports = {"razumikhin": check_razumikhin(cert, traj, tol=args.tol)}
        else:
            reports = {"flow": check_flow(cert, traj, tol=args.tol),
                       "jump": check_jump(cert, traj, "maxform", tol=args.tol)}
        for name, rep in reports.items():
            out.kv(f"check_{name}", rep.summary())
            ok = ok and rep.ok
        if verdict.composite is not None:
            env = iss_envelope(verdict.composite, args.mu, args.lam, traj)
            out.kv("envelope", "pass" if env.ok else "fail")
            out.kv("envelope_margin", repr(env.worst_margin))
            ok = ok and env.ok
    return EXIT_OK if ok else EXIT_NEGATIVE


def _ncs_params(args):
    from .ncs import DEFAULT_A, NcsParams
    A = [list(r) for r in DEFAULT_A]
    for item in args.coupling or ():
        key, eq, value = item.partition("=")
        try:
            i, j = (int(v) for v in key.split(","))
            A[i - 1][j - 1] = float(value)
        except ValueError:
            raise UsageError(f"coupling must read I,J=VALUE, got {item!r}") from None
    eps = [0.1, 0.1, 0.1]
    for item in args.eps or ():
        key, eq, value = item.partition("=")
        try:
            eps[int(key) - 1] = float(value)
        except (ValueError, IndexError):
            raise UsageError(f"eps must read I=VALUE, got {item!r}") from None
    protocol = {"rr": "roundrobin"}.get(args.protocol, args.protocol)
    return NcsParams(A=tuple(map(tuple, A)), eps=tuple(eps), protocol=protocol,
                     horizon=args.horizon, dt=args.dt, mu=args.mu, lam=args.lam,
                     noise_seed=args.seed)


def cmd_ncs(args, out):
    from .ncs import reproduce, report_lines
    if getattr(args, "action", "reproduce") != "reproduce":
        raise UsageError("ncs supports the 'reproduce' action")
    p = _ncs_params(args)
    d = args.out or "ncs_out"
    rep = reproduce(d, p)
    for line in report_lines(rep, p):
        key, _, value = line.partition(": ")
        out.kv(key, value)
    out.kv("out", d)
    return EXIT_OK if rep.iss else EXIT_NEGATIVE


def _sweep_one(job):
    model_path, cert_path, spec, flavor, mu, lam, t0, horizon, seed, out_dir, k = job
    cert = load_certificate(cert_path)
    seq = parse_impulse_spec(spec, t0, horizon, seed=seed)
    verdict = theorem_gate(cert, None, seq, flavor, mu, lam)
    path = None
    if out_dir:
        path = os.path.join(out_dir, f"run{k:04d}.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"impulses: {spec}\n" + "\n".join(verdict.lines()) + "\n")
    return k, spec, verdict.iss, verdict.adt_sup, path


def cmd_sweep(args, out):
    _need_file(args.model, "model")
    _need_file(args.cert, "certificate")
    for spec in args.impulses:
        _impulse_file(spec)
    cert = load_certificate(args.cert)
    vector_blocks(cert, load_model(args.model))
    d = _out_dir(args)
    jobs = [(args.model, args.cert, spec, args.flavor, args.mu, args.lam, args.t0, args.horizon,
             args.seed, d, k) for k, spec in enumerate(args.impulses)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            results = sorted(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    bad = 0
    for k, spec, iss, sup, _ in results:
        out.kv(f"run{k}", f"{spec} iss={str(iss).lower()} adt_sup={sup!r}")
        bad += not iss
    if d:
        # the merged index is written after every run finished
        with open(os.path.join(d, "index.csv"), "w", encoding="utf-8") as fh:
            fh.write("run,impulses,iss,adt_sup,file\n")
            for k, spec, iss, sup, path in results:
                fh.write(f"{k},{spec},{str(iss).lower()},{sup!r},{path or ''}\n")
    out.kv("runs", len(results))
    out.kv("negative", bad)
    return EXIT_OK if bad == 0 else EXIT_NEGATIVE


# ----------------------------------------------------------------- parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="seed for randomized inputs")
    common.add_argument("--quiet", action="store_true", help="suppress notes on stderr")

    p = _Parser(prog="impulsive-iss", parents=[common],
                description="Simulate impulsive systems and check ISS certificates.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="integrate a model file")
    s.add_argument("--model", required=True)
    _sim_flags(s)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("smallgain", parents=[common], help="cycle condition of a gain matrix")
    s.add_argument("--gains", required=True)
    s.add_argument("--alpha", type=float, default=1.0, help="threshold for the cycle means")
    s.set_defaults(func=cmd_smallgain)

    s = sub.add_parser("dwell", parents=[common], help="average dwell-time supremum")
    s.add_argument("--impulses", required=True)
    s.add_argument("--c", type=float, required=True)
    s.add_argument("--d", type=float, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--t0", type=float, default=0.0)
    s.set_defaults(func=cmd_dwell)

    s = sub.add_parser("certify", parents=[common], help="theorem gate for a certificate")
    s.add_argument("--model", required=True)
    s.add_argument("--cert", required=True)
    s.add_argument("--flavor", choices=("delayfree", "razumikhin", "krasovskii"),
                   default="delayfree")
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--check", action="store_true",
                   help="also simulate and check the certificate along the trajectory")
    s.add_argument("--tol", type=float, default=1e-3)
    _sim_flags(s)
    s.set_defaults(func=cmd_certify)

    for name in ("ncs", "ncs-reproduce"):
        s = sub.add_parser(name, parents=[common], help="networked control example")
        if name == "ncs":
            s.add_argument("action", choices=("reproduce",))
        s.add_argument("--protocol", choices=("tod", "rr", "roundrobin"), default="tod")
        s.add_argument("--horizon", type=float, default=6.0)
        s.add_argument("--dt", type=float, default=1e-3)
        s.add_argument("--mu", type=float, default=0.01)
        s.add_argument("--lambda", dest="lam", type=float, default=None)
        s.add_argument("--coupling", action="append", metavar="I,J=VALUE",
                       help="override a coupling coefficient (1-based)")
        s.add_argument("--eps", action="append", metavar="I=VALUE",
                       help="override a decay margin (1-based)")
        s.set_defaults(func=cmd_ncs)

    s = sub.add_parser("sweep", parents=[common], help="theorem gate over impulse specs")
    s.add_argument("--model", required=True)
    s.add_argument("--cert", required=True)
    s.add_argument("--impulses", nargs="+", required=True)
    s.add_argument("--flavor", choices=("delayfree", "razumikhin", "krasovskii"),
                   default="delayfree")
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--lambda", dest="lam", type=float, required=True)
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--t0", type=float, default=0.0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep, allow_short_gaps=True)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            raise UsageError("a command is required")
        out = Output(args.quiet)
        return args.func(args, out)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ImpulsiveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():  # pragma: no cover - console entry point
    sys.exit(run())
