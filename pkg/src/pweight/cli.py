"""``pweight`` command line: weights, weighted testing, and simulations.

Tables go to ``--out`` (or stdout for ``simulate`` without ``--out``);
a ``<out>.manifest.json`` with the resolved parameters and input
digests is written next to every output file. Diagnostics go to stderr.
Exit status is 0 on success, 1 on a data or solver error and 2 on a
usage error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from .barrier import BarrierConfig, monotone_weights
from .closed_form import (
    exponential_weights,
    filter_weights,
    spjotvoll_one_sided,
    spjotvoll_two_sided,
)
from .exceptions import PWeightError, SolverError
from .simulate import EXPERIMENTS, GENERATOR, run_experiment, thread_count
from .tables import (
    RunManifest,
    file_digest,
    read_effects,
    read_groups,
    read_summary_stats,
    read_table,
    write_table,
)
from .testing import (
    count_loci,
    join_studies,
    score_method,
    weighted_bonferroni,
    z_from_two_sided_p,
)

SCHEMES = ("spjotvoll", "two-sided", "monotone", "exponential", "filter", "uniform")


def _version():
    try:
        return version("artifact")
    except PackageNotFoundError:  # pragma: no cover - running from a source tree
        return "0+unknown"


def _real(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None


def _add_scheme_flags(p):
    p.add_argument("--scheme", required=True, choices=SCHEMES)
    p.add_argument("--q", type=_real, help="per-test level; the family-wise level is J*q")
    p.add_argument("--l", type=_real, default=0.0, help="monotone lower bound (default 0)")
    p.add_argument("--u", type=_real, default=math.inf,
                   help="monotone upper bound; 'inf' means 1/q (default inf)")
    p.add_argument("--beta", type=_real, help="exponential scheme tilt")
    p.add_argument("--cutoff", type=_real, help="filter scheme prior p-value cutoff")
    p.add_argument("--subsample-L", type=int, default=BarrierConfig.subsample_L,
                   help="largest problem the barrier solver handles directly")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pweight",
        description="Optimal p-value weights for weighted Bonferroni testing.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    w = sub.add_parser("weights", help="compute weights from effect sizes or prior p-values")
    _add_scheme_flags(w)
    w.add_argument("--in", dest="input", required=True,
                   help="TSV with columns id, mu (or id, p for prior p-values)")
    w.add_argument("--out", required=True)

    t = sub.add_parser("test", help="weight a current study with a prior study and test")
    _add_scheme_flags(t)
    t.add_argument("--prior", required=True, help="prior summary statistics: id, p, n")
    t.add_argument("--current", required=True, help="current summary statistics: id, p, n")
    t.add_argument("--broadcast-n", type=_real, help="current sample size for every record")
    t.add_argument("--broadcast-n0", type=_real, help="prior sample size for every record")
    t.add_argument("--loci", help="optional TSV id, locus; hits are counted per locus")
    t.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="run a seeded simulation experiment")
    s.add_argument("--experiment", required=True, choices=tuple(EXPERIMENTS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trials", type=int, help="timing: trials per J (default 50)")
    s.add_argument("--sizes", help="timing: comma-separated J values")
    s.add_argument("--out", help="results TSV (default stdout)")
    return parser


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise PWeightError(f"scheme {args.scheme!r} requires {flags}")


def _config(args):
    return BarrierConfig(subsample_L=args.subsample_L)


def _compute_weights(args, mu, prior_p):
    """Weights for the chosen scheme; returns ``(w, promises_monotone)``."""
    s = args.scheme
    if s == "uniform":
        return np.ones(mu.size), False
    if s == "filter":
        _need(args, "cutoff")
        if prior_p is None:
            raise PWeightError("scheme 'filter' needs prior p-values (an input with a 'p' column)")
        return filter_weights(prior_p, args.cutoff).w, False
    if s == "exponential":
        _need(args, "beta")
        return exponential_weights(mu, args.beta).w, True
    _need(args, "q")
    if s == "spjotvoll":
        return spjotvoll_one_sided(mu, args.q).weights.w, False
    if s == "two-sided":
        return spjotvoll_two_sided(mu, args.q).weights.w, False
    try:
        return monotone_weights(mu, args.q, args.l, args.u, _config(args)).weights.w, True
    except SolverError as exc:
        raise SolverError(f"{exc} (current --subsample-L {args.subsample_L})") from exc


def _validate(w, mu, monotone, args):
    """Re-check an output weight vector before it is written."""
    n = w.size
    if not (np.all(np.isfinite(w)) and np.all(w >= 0)):
        raise SolverError("internal check failed: weights must be finite and nonnegative")
    if abs(w.sum() - n) > 1e-8 * n:
        raise SolverError(f"internal check failed: weights sum to {w.sum():.17g}, not {n}")
    if args.scheme == "monotone":
        cap = min(args.u, 1.0 / args.q)
        if w.min() < args.l - 1e-8 or w.max() > cap + 1e-8 * max(1.0, cap):
            raise SolverError("internal check failed: weights leave the box [l, min(u, 1/q)]")
    if monotone:
        order = np.argsort(-np.asarray(mu), kind="stable")  # |mu| ascending
        if np.any(np.diff(w[order]) < -1e-8 * max(1.0, w.max())):
            raise SolverError("internal check failed: weights are not monotone in |mu|")


def _summarize(w, args, err):
    n = w.size
    print(f"J = {n}; sum(w) = {w.sum():.17g} (relative error {abs(w.sum() - n) / n:.2e})",
          file=err)
    print(f"min weight {w.min():.6g}, max weight {w.max():.6g}", file=err)
    if args.scheme == "monotone":
        cap = min(args.u, 1.0 / args.q)
        at_l = int(np.sum(np.abs(w - args.l) <= 1e-6))
        at_u = int(np.sum(np.abs(w - cap) <= 1e-6 * max(1.0, cap)))
        print(f"at lower bound {args.l:g}: {at_l}; at upper bound {cap:g}: {at_u}", file=err)


def _scheme_params(args):
    keys = ("scheme", "q", "l", "u", "beta", "cutoff")
    out = {k: getattr(args, k) for k in keys}
    if args.scheme == "monotone":
        out["barrier"] = asdict(_config(args))
    return out


def _read_weight_input(path):
    cols, _ = read_table(path, ("id",), optional=("mu", "p"))
    if "mu" in cols:
        ids, mu = read_effects(path)
        return ids, np.asarray(mu), None
    if "p" in cols:
        recs = read_summary_stats(path, broadcast_n=1.0)
        p = np.array([r.p_two_sided for r in recs])
        return [r.id for r in recs], np.atleast_1d(z_from_two_sided_p(p)), p
    raise PWeightError(f"{path}: need an 'mu' or a 'p' column")


def cmd_weights(args, err=None):
    err = sys.stderr if err is None else err
    ids, mu, prior_p = _read_weight_input(args.input)
    w, monotone = _compute_weights(args, mu, prior_p)
    _validate(w, mu, monotone, args)
    write_table(args.out, ("id", "weight"), zip(ids, w))
    RunManifest("weights", _scheme_params(args), {args.input: file_digest(args.input)},
                _version()).write(args.out)
    _summarize(w, args, err)
    return 0


def cmd_test(args, err=None):
    err = sys.stderr if err is None else err
    _need(args, "q")
    prior = read_summary_stats(args.prior, args.broadcast_n0)
    current = read_summary_stats(args.current, args.broadcast_n)
    study = join_studies(prior, current)
    if study.dropped:
        print(f"dropped {study.dropped} shared ids with prior p-value 1", file=err)
    w, monotone = _compute_weights(args, study.mu_hat, study.prior_p)
    _validate(w, study.mu_hat, monotone, args)
    report = weighted_bonferroni(study.current_p, w, args.q)
    plain = weighted_bonferroni(study.current_p, np.ones(len(study)), args.q)
    groups = read_groups(args.loci) if args.loci else None
    hits = count_loci(study.ids, report.rejected, groups)
    hits_plain = count_loci(study.ids, plain.rejected, groups)
    rows = zip(study.ids, study.current_p, w, report.weighted_p, report.rejected)
    write_table(args.out, ("id", "p", "weight", "weighted_p", "reject"), rows)
    digests = {f: file_digest(f) for f in (args.prior, args.current, args.loci) if f}
    params = {**_scheme_params(args), "broadcast_n": args.broadcast_n,
              "broadcast_n0": args.broadcast_n0, "loci": args.loci}
    RunManifest("test", params, digests, _version()).write(args.out)
    unit = "loci" if groups is not None else "hits"
    print(f"J = {len(study)}; alpha = J*q = {report.alpha:.6g}; {unit}: {hits} "
          f"(unweighted {hits_plain}); score {score_method(hits, hits_plain):+d}", file=err)
    return 0


def cmd_simulate(args, err=None):
    err = sys.stderr if err is None else err
    kwargs = {}
    if args.experiment == "timing":
        if args.trials is not None:
            kwargs["trials"] = args.trials
        if args.sizes:
            kwargs["sizes"] = tuple(int(x) for x in args.sizes.split(","))
    elif args.trials is not None or args.sizes:
        raise PWeightError("--trials and --sizes apply only to the timing experiment")
    threads = thread_count()
    result = run_experiment(args.experiment, args.seed, threads=threads, **kwargs)
    write_table(args.out, result.header, result.rows)
    if args.out not in (None, "-"):
        params = {"experiment": args.experiment, "seed": args.seed, "generator": GENERATOR,
                  **kwargs}
        RunManifest("simulate", params, {}, _version()).write(args.out)
    for key, value in result.summary.items():
        print(f"{key}: {value}", file=err)
    return 0


COMMANDS = {"weights": cmd_weights, "test": cmd_test, "simulate": cmd_simulate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PWeightError as exc:
        print(f"pweight {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
