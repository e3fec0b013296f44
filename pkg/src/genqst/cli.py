"""Command-line front end.

    genqst sample --qubits 2 --state ghz --povm pauli4 --shots 1000 --seed 1 --out d.txt
    genqst train --data d.txt --out model.npz
    genqst reconstruct --checkpoint model.npz --qubits 2 --out rho.npz
    genqst metrics --checkpoint model.npz --reference d.txt --qubits 2 --state ghz
    genqst scaling --config sweep.cfg --out results/

Any flag can also be given in a ``--config`` file, one ``key = value`` per
line with ``#`` comments; flags on the command line take precedence.
"""
import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import StageError, TomographyError
from .generative import TrainingConfig, exact_distribution, load_checkpoint, save_checkpoint, train
from .harness import DEFAULT_GRID, REPORT_VERSION, ExperimentSpec, prepare, run_scaling, run_tomography
from .metrics import all_correlations, classical_fidelity, quantum_fidelity
from .mle import mle_project
from .povm import (
    coarse_grain_p6_to_p4,
    empirical_distribution,
    load_dataset,
    make_povm,
    povm_distribution,
    sample_dataset,
    save_dataset,
)
from .quantum_sim import READOUT_TABLE, projector
from . import report


class CliError(Exception):
    """Failure inside a named pipeline stage."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _depol(text):
    if text == "device":
        return text
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a probability or 'device', got {text!r}")
    if not 0.0 <= p <= 1.0:
        raise argparse.ArgumentTypeError(f"depolarizing probability {p} outside [0, 1]")
    return p


def _int_list(text):
    try:
        vals = tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _readout(value):
    """'device' selects the built-in table; anything else is a file of 'F_g F_e' rows."""
    if value is None or value == "none":
        return None
    if value == "device":
        return READOUT_TABLE
    rows = []
    for line in Path(value).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            fg, fe = (float(x) for x in line.replace(",", " ").split())
            rows.append((fg, fe))
    return tuple(rows)


def read_config(path):
    """Turn a ``key = value`` file into argv tokens."""
    tokens = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        low = value.lower()
        if low in ("true", "yes", "on"):
            tokens.append(flag)
        elif low in ("false", "no", "off"):
            continue
        else:
            tokens.extend([flag, value])
    return tokens


def _common(p, qubits_type=int, default_qubits=2):
    p.add_argument("--config", help="key = value file mirroring these flags")
    p.add_argument("--qubits", type=qubits_type, default=default_qubits)
    p.add_argument("--state", choices=("ghz", "random", "zero"), default="ghz")
    p.add_argument("--povm", choices=("pauli4", "pauli6"), default="pauli4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-depol", type=_depol, default=0.0, help="per-qubit depolarizing probability or 'device'")
    p.add_argument("--readout-table", default=None, help="'device' or a file of 'F_g F_e' rows")
    p.add_argument("--experimental", action="store_true", help="GHZ variant with X on odd qubits")
    p.add_argument("--depth", type=_positive_int, default=8, help="layers of the random-state circuit")
    p.add_argument("--out", help="output path")


def _training_flags(p, sweep=False):
    p.add_argument("--hidden", type=_positive_int, default=32)
    p.add_argument("--lr", type=float, default=1e-2 if sweep else 1e-3)
    p.add_argument("--epochs", type=_positive_int, default=5000 if sweep else 100)
    p.add_argument("--batch", type=_positive_int, default=64)
    p.add_argument("--full-batch", action="store_true", default=sweep, help="exact step over distinct sequences")
    p.add_argument("--minibatch", dest="full_batch", action="store_false")
    p.add_argument("--val-frac", type=float, default=0.2 if sweep else 0.0)
    p.add_argument("--patience", type=int, default=100 if sweep else None)
    p.add_argument("--refit", action="store_true", help="retrain on all shots for the selected epoch count")


def build_parser():
    parser = argparse.ArgumentParser(prog="genqst", description="Generative-model state tomography on simulated Pauli POVM data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="simulate the (noisy) state and save it")
    _common(p)

    p = sub.add_parser("sample", help="draw POVM measurement records")
    _common(p)
    p.add_argument("--shots", type=_positive_int, default=10_000)

    p = sub.add_parser("train", help="fit the autoregressive model to a dataset")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _training_flags(p)

    p = sub.add_parser("reconstruct", help="density matrix from a model or dataset")
    p.add_argument("--config")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--data")
    p.add_argument("--qubits", type=_positive_int)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="also write a heat map of Re(rho)")

    p = sub.add_parser("metrics", help="score a model or dataset against the simulated state")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--data")
    p.add_argument("--reference", help="dataset whose empirical distribution is the F_C target")

    p = sub.add_parser("tomography", help="full pipeline on one state: sample, train, reconstruct, score")
    _common(p)
    p.add_argument("--shots", type=_positive_int, default=10_000)
    p.add_argument("--bayes", action="store_true")
    _training_flags(p, sweep=True)

    p = sub.add_parser("scaling", help="N_s* sweep against the empirical baseline")
    _common(p, qubits_type=_int_list, default_qubits=(2, 3, 4, 5))
    p.add_argument("--shots", type=_positive_int, default=100_000, help="master dataset size per N")
    p.add_argument("--grid", type=_int_list, default=DEFAULT_GRID)
    p.add_argument("--repeats", type=_positive_int, default=10)
    p.add_argument("--threshold", type=float, default=0.99)
    p.add_argument("--bayes", action="store_true")
    p.add_argument("--no-baseline", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _training_flags(p, sweep=True)
    return parser


def _expand_config(argv):
    """Insert config-file tokens right after the subcommand so explicit flags win."""
    argv = list(argv)
    for i, tok in enumerate(argv):
        path = None
        if tok == "--config" and i + 1 < len(argv):
            path, end = argv[i + 1], i + 2
        elif tok.startswith("--config="):
            path, end = tok.split("=", 1)[1], i + 1
        if path is not None:
            try:
                extra = read_config(path)
            except (OSError, ValueError) as exc:
                raise CliError("config", exc)
            rest = argv[:i] + argv[end:]
            return rest[:1] + extra + rest[1:]
    return argv


def _training_config(args, seed):
    return TrainingConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        max_epochs=args.epochs,
        hidden_size=args.hidden,
        seed=seed,
        validation_fraction=args.val_frac,
        patience=args.patience,
        full_batch=args.full_batch,
        refit=args.refit,
    )


def _spec(args, **extra):
    return ExperimentSpec(
        state=args.state,
        qubits=args.qubits,
        povm=args.povm,
        depolarizing=args.noise_depol,
        readout=_readout(args.readout_table),
        experimental_variant=args.experimental,
        random_depth=args.depth,
        seed=args.seed,
        **extra,
    )


def _emit(obj, out=None):
    text = report.dumps(obj)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _stage(name, fn, *a, **kw):
    try:
        return fn(*a, **kw)
    except CliError:
        raise
    except StageError as exc:
        raise CliError(exc.stage, exc.error)
    except (TomographyError, OSError, ValueError, ArithmeticError) as exc:
        raise CliError(name, exc)


def cmd_prepare(args):
    spec = _stage("config", _spec, args)
    psi, noise, rho = _stage("prepare", prepare, spec, args.qubits)
    out = args.out or "state.npz"
    np.savez(out, psi=psi, rho=rho)
    _emit({"n_qubits": args.qubits, "depolarizing_p": noise.depolarizing_p, "fq_vs_ideal": quantum_fidelity(rho, projector(psi)), "out": out})


def cmd_sample(args):
    spec = _stage("config", _spec, args)
    _, noise, rho = _stage("prepare", prepare, spec, args.qubits)
    data = _stage("sample", sample_dataset, rho, make_povm(args.povm), args.shots, noise, args.seed)
    out = args.out or "dataset.txt"
    _stage("write", save_dataset, data, out)
    print(f"wrote {len(data)} shots to {out}", file=sys.stderr)


def cmd_train(args):
    data = _stage("load", load_dataset, args.data)
    cfg = _stage("config", _training_config, args, args.seed)

    def progress(epoch, params):
        if epoch % 50 == 0:
            print(f"epoch {epoch}", file=sys.stderr)
        return {}

    params, trace = _stage("train", train, data, cfg, progress)
    prov = {"dataset": args.data, "n_qubits": data.n_qubits, "povm": data.povm, "training": cfg, "best_epoch": trace.best_epoch}
    _stage("write", save_checkpoint, params, args.out, prov)
    _emit({"out": args.out, "epochs": len(trace.epochs), "best_epoch": trace.best_epoch, "steps": trace.steps, "stopped": trace.stopped, "final_loss": trace.epochs[-1]["loss"] if trace.epochs else None})


def _source_distribution(args):
    if args.checkpoint:
        params, prov = _stage("load", load_checkpoint, args.checkpoint)
        n = args.qubits or prov.get("n_qubits")
        if not n:
            raise CliError("config", "--qubits is required when the checkpoint does not record it")
        return _stage("enumerate", exact_distribution, params, n)
    data = _stage("load", load_dataset, args.data)
    return empirical_distribution(data)


def _pauli4(dist):
    return coarse_grain_p6_to_p4(dist) if dist.K == 6 else dist


def cmd_reconstruct(args):
    dist = _pauli4(_source_distribution(args))
    fit = _stage("mle", mle_project, dist, make_povm("pauli4"))
    np.savez(args.out, rho=fit.rho)
    if args.figure:
        _stage("figure", report.plot_density, fit.rho, args.figure)
    _emit({"out": args.out, "objective": fit.objective, "iterations": fit.iterations, "converged": fit.converged})


def cmd_metrics(args):
    spec = _stage("config", _spec, args)
    psi, _, rho = _stage("prepare", prepare, spec, args.qubits)
    dist = _source_distribution(args)
    if dist.n_qubits != args.qubits:
        raise CliError("config", f"source has {dist.n_qubits} qubits but --qubits is {args.qubits}")
    target = povm_distribution(rho, make_povm("pauli6" if dist.K == 6 else "pauli4"))
    out = {"n_qubits": args.qubits, "fc_vs_exact": classical_fidelity(dist, target)}
    if args.reference:
        ref = _stage("load", load_dataset, args.reference)
        out["fc_vs_reference"] = classical_fidelity(dist, empirical_distribution(ref))
    fit = _stage("mle", mle_project, _pauli4(dist), make_povm("pauli4"))
    out["fq_vs_ideal"] = quantum_fidelity(fit.rho, projector(psi))
    out["fq_vs_true"] = quantum_fidelity(fit.rho, rho)
    out["correlations"] = {f"{ax}{j}{k}": v for (ax, j, k), v in all_correlations(fit.rho).items()}
    out["correlations_true"] = {f"{ax}{j}{k}": v for (ax, j, k), v in all_correlations(rho).items()}
    _emit(out, args.out)


def cmd_tomography(args):
    spec = _stage("config", _spec, args, shots=args.shots, grid=(args.shots,), bayes=args.bayes, training=_training_config(args, 0))
    rec = _stage("tomography", run_tomography, spec, args.qubits, 25)
    rec["report_version"] = REPORT_VERSION
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report.write_json(rec, out / "tomography.json")
        report.plot_training(rec, out / "training.png")
    _emit(rec)


def cmd_scaling(args):
    spec = _stage(
        "config",
        _spec,
        args,
        shots=args.shots,
        grid=args.grid,
        repeats=args.repeats,
        threshold=args.threshold,
        bayes=args.bayes,
        training=_training_config(args, 0),
    )
    rep = _stage("scaling", run_scaling, spec, not args.no_baseline)
    out = Path(args.out or "scaling")
    paths = _stage("report", report.write_scaling, rep, out, not args.no_figures)
    for s in rep["rnn"]["summary"] + rep.get("baseline", {}).get("summary", []):
        star = "censored" if s["censored"] else s["ns_star"]
        print(f"{s['method']:>9} N={s['n_qubits']} N_s*={star}")
    fit = rep["rnn"]["fit"]
    if fit:
        print(f"rnn linear fit slope={fit['slope']:.1f} R2={fit['r2']:.3f}")
    print("wrote " + ", ".join(str(p) for p in paths), file=sys.stderr)


COMMANDS = {
    "prepare": cmd_prepare,
    "sample": cmd_sample,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "metrics": cmd_metrics,
    "tomography": cmd_tomography,
    "scaling": cmd_scaling,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        argv = _expand_config(argv)
    except CliError as exc:
        print(f"genqst: error {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except CliError as exc:
        print(f"genqst: error {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
