"""Command-line interface: ``dispfock <subcommand> [options]``.

Exit status is 0 on success, 2 for invalid input or configuration and 3 when
a reconstruction fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, load_settings
from .fock import DiagonalDensity, DnsParams, PhononDistribution, dns_ppd, mixed_dns_ppd
from .kick import VoltageWaveform, integrate_eom, sweep_alpha_vs_voltage
from .pipeline import DEFAULT_VOLTAGES, ConvergenceError, ExperimentPlan, StageError, run_pipeline
from .semiclassics import minima_table, phase_offset
from .sideband import BRANCHES, RabiDataset, default_theta_grid, synthesize_dataset
from .tomography import ReconstructionConfig, bootstrap_errors, extract_alpha, reconstruct

EXIT_OK, EXIT_INVALID, EXIT_CONVERGENCE = 0, 2, 3
log = logging.getLogger("dispfock")


class CliError(Exception):
    def __init__(self, message, status=EXIT_INVALID):
        super().__init__(message)
        self.status = status


def _fmt(x):
    return repr(float(x))


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _numeric(value):
    """Undo the CSV string formatting so JSON carries real numbers."""
    if isinstance(value, dict):
        return {k: _numeric(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_numeric(v) for v in value]
    if isinstance(value, str):
        for kind in (int, float):
            try:
                return kind(value)
            except ValueError:
                pass
    return value


def _emit(args, name, header, rows, doc=None):
    """Write a table as CSV or a document as JSON, to --out/<name> or stdout."""
    if args.format == "json":
        if doc is None:
            doc = [dict(zip(header, r)) for r in rows]
        text = json.dumps(_numeric(doc), indent=1, sort_keys=True, default=float) + "\n"
        suffix = ".json"
    else:
        text = _csv_text(header, rows)
        suffix = ".csv"
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / (name + suffix)).write_text(text)
    else:
        sys.stdout.write(text)


def _settings(args):
    s = load_settings(args.config)
    if args.seed is not None:
        s = dataclasses.replace(s, seed=args.seed)
    return s


# subcommands --------------------------------------------------------------

def cmd_ppd(args):
    alpha = complex(args.alpha)
    pure = dns_ppd(DnsParams(args.n, alpha), args.kmax)
    rows = []
    if args.fidelity is not None:
        rho0 = DiagonalDensity.imperfect_fock(args.n, args.fidelity)
        mixed = mixed_dns_ppd(abs(alpha), rho0, args.kmax)
        header = ["k", "p_pure", "p_mixed"]
        rows = [[k, _fmt(a), _fmt(b)] for k, (a, b) in enumerate(zip(pure.probs, mixed.probs))]
    else:
        header = ["k", "p_pure"]
        rows = [[k, _fmt(a)] for k, a in enumerate(pure.probs)]
    doc = {"n": args.n, "alpha_abs": abs(alpha), "k_max": args.kmax,
           "tail_mass": pure.tail_mass, "rows": [dict(zip(header, r)) for r in rows]}
    _emit(args, "ppd", header, rows, doc)


def cmd_kick(args):
    s = _settings(args)
    trap = s.trap()
    template = s.kick_template()
    if args.waveform:
        wf = VoltageWaveform.load(args.waveform)
    else:
        volts = s.kick_voltage_v if args.voltage is None else args.voltage
        wf = template.waveform(volts)
    r = integrate_eom(trap, wf, steps_per_period=template.steps_per_period)
    row = [_fmt(r.alpha_energy), _fmt(abs(r.alpha)), _fmt(r.alpha.real), _fmt(r.alpha.imag),
           _fmt(r.final_energy_quanta), r.steps_per_period]
    header = ["alpha_abs", "alpha_integral_abs", "alpha_re", "alpha_im", "E_f_quanta",
              "steps_per_period"]
    _emit(args, "kick", header, [row], dict(zip(header, row)))


def cmd_sweep(args):
    s = _settings(args)
    volts = args.voltages if args.voltages else list(DEFAULT_VOLTAGES)
    res = sweep_alpha_vs_voltage(s.trap(), s.kick_template(), volts)
    header = ["V_k", "alpha_abs", "E_f_quanta"]
    rows = [[_fmt(v), _fmt(a), _fmt(e)] for v, a, _, e in res.rows()]
    fit = {"coefficients": res.quartic.tolist(), "rms_residual": res.rms_residual,
           "model": "alpha = c1 V + c2 V^2 + c3 V^3 + c4 V^4"}
    if args.format == "json":
        _emit(args, "sweep", header, rows, {"rows": [dict(zip(header, r)) for r in rows],
                                             "quartic_fit": fit})
        return
    _emit(args, "sweep", header, rows)
    text = json.dumps(fit, indent=1, sort_keys=True) + "\n"
    if args.out:
        (Path(args.out) / "sweep_fit.json").write_text(text)
    else:
        sys.stdout.write(text)


def cmd_synth(args):
    s = _settings(args)
    fidelity = s.fidelity(args.n) if args.fidelity is None else args.fidelity
    rho0 = DiagonalDensity.imperfect_fock(args.n, fidelity)
    truth = mixed_dns_ppd(args.alpha, rho0, s.k_max_truth).renormalized()
    grids = {dn: default_theta_grid(dn, s.eta, s.theta_points, s.theta_periods) for dn in BRANCHES}
    shots = s.shots if args.shots is None else args.shots
    data = synthesize_dataset(truth, s.coupling(), grids, shots, s.seed)
    data.meta.update({"n": args.n, "alpha": args.alpha, "fidelity": fidelity})
    text = data.to_json() if args.format == "json" else data.to_csv()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / ("dataset." + args.format)).write_text(text)
    else:
        sys.stdout.write(text)


def _load_dataset(path):
    try:
        return RabiDataset.load(path)
    except (OSError, KeyError, ValueError) as exc:
        raise CliError(f"cannot read dataset {path}: {exc}") from None


def cmd_fit(args):
    s = _settings(args)
    data = _load_dataset(args.data)
    cfg = ReconstructionConfig(k_max=args.kmax if args.kmax is not None else 6,
                               restarts=s.restarts, seed=s.seed,
                               fit_readout_fidelity=not args.fix_fidelity,
                               fit_bare_rabi=not args.fix_scale)
    eta = data.meta.get("eta", s.eta)
    result = reconstruct(data, cfg, eta=eta)
    if not result.converged:
        raise CliError("reconstruction did not converge", EXIT_CONVERGENCE)
    if args.bootstrap:
        result.bootstrap_errors = bootstrap_errors(data, cfg, args.bootstrap, result, eta).std
    err = result.bootstrap_errors
    header = ["k", "p_k"] + (["std_err"] if err is not None else [])
    rows = [[k, _fmt(p)] + ([_fmt(err[k])] if err is not None else [])
            for k, p in enumerate(result.ppd.probs)]
    _emit(args, "fit", header, rows, result.to_dict())


def _load_ppd(path):
    path = Path(path)
    try:
        text = path.read_text()
        if path.suffix == ".json":
            return PhononDistribution(np.array(json.loads(text)["ppd"]))
        rows = list(csv.DictReader(io.StringIO(text)))
        col = "p_k" if "p_k" in rows[0] else [c for c in rows[0] if c.startswith("p")][0]
        return PhononDistribution(np.array([float(r[col]) for r in rows]))
    except (OSError, KeyError, IndexError, ValueError) as exc:
        raise CliError(f"cannot read distribution {path}: {exc}") from None


def cmd_alpha(args):
    ppd = _load_ppd(args.ppd)
    rho0 = DiagonalDensity(_load_ppd(args.rho0)) if args.rho0 else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        a, resid = extract_alpha(ppd, args.n, rho0)
    row = [_fmt(a), _fmt(resid), int(bool(caught))]
    header = ["alpha_abs", "fit_residual", "degenerate"]
    _emit(args, "alpha", header, [row], dict(zip(header, row)))


def cmd_semiclassics(args):
    pairs = [tuple(int(x) for x in p.split(",")) for p in args.pairs]
    rows = [[n, k, _fmt(a), _fmt(e), _fmt(r)] for n, k, a, e, r in minima_table(pairs)]
    header = ["n", "k", "alpha_min_semiclassical", "alpha_min_exact", "relative_error"]
    _emit(args, "semiclassics", header, rows,
          {"phase_offset": phase_offset(), "rows": [dict(zip(header, r)) for r in rows]})


def cmd_pipeline(args):
    s = _settings(args)
    volts = tuple(args.voltages) if args.voltages else DEFAULT_VOLTAGES
    out = Path(args.out) if args.out else Path("dispfock_report")
    plan = ExperimentPlan(preparation_n=tuple(args.n), v_k_list=volts, settings=s)
    from .pipeline import write_report
    report = run_pipeline(plan)
    write_report(report, out, plots=not args.no_plots)
    summary = {"output_dir": str(out), "max_alpha_error": report.max_alpha_error(),
               "files": len(report.files) + 1}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")


# parser -------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON key-value config (default: $DISPFOCK_CONFIG)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="dispfock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ppd", parents=[common], help="phonon distribution of |alpha, n>")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=complex, required=True)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--fidelity", type=float, help="also mix with an imperfect preparation")
    p.set_defaults(func=cmd_ppd)

    p = sub.add_parser("kick", parents=[common], help="simulate one voltage kick")
    p.add_argument("--voltage", type=float)
    p.add_argument("--waveform", help="CSV (t_s, volts) applied as-is to the kick segment")
    p.set_defaults(func=cmd_kick)

    p = sub.add_parser("sweep", parents=[common], help="|alpha| against kick voltage")
    p.add_argument("--voltages", type=float, nargs="+")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", parents=[common], help="synthetic three-branch Rabi dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--fidelity", type=float)
    p.add_argument("--shots", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", parents=[common], help="maximum-likelihood reconstruction")
    p.add_argument("--data", required=True)
    p.add_argument("--kmax", type=int)
    p.add_argument("--bootstrap", type=int, default=0, metavar="RESAMPLES")
    p.add_argument("--fix-fidelity", action="store_true")
    p.add_argument("--fix-scale", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("alpha", parents=[common], help="fit |alpha| to a distribution")
    p.add_argument("--ppd", required=True, help="fit JSON or CSV with a p_k column")
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--rho0", help="zero-kick distribution (same formats)")
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("semiclassics", parents=[common], help="semiclassical vs exact minima")
    p.add_argument("--pairs", nargs="+", default=["1,1", "2,2", "1,2", "2,3"], metavar="N,K")
    p.set_defaults(func=cmd_semiclassics)

    p = sub.add_parser("pipeline", parents=[common], help="full synthetic experiment")
    p.add_argument("--n", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--voltages", type=float, nargs="+")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"dispfock {args.command}: {exc}", file=sys.stderr)
        return exc.status
    except ConvergenceError as exc:
        print(f"dispfock {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (ConfigError, ValueError, StageError) as exc:
        print(f"dispfock {args.command}: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
