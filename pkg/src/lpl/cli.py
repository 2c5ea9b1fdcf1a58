"""``lpl`` command-line driver.

Every run writes ``manifest.json`` into its output directory before doing
anything else; ``lpl replay --manifest PATH`` reruns it. Exit codes: 0 on
success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, fileio
from ._accel import backend, configure_threads
from .datasets import load_dataset, mode_coverage
from .errors import ConfigError, LplError
from .gan import TrainConfig, gan_train, make_gan, sample_generator
from .metrics import LinearGaussianModel, cluster_ratio, kl_decomposition_check, pag_from_codes
from .nn import mlp_specs
from .prior import (
    PganConfig,
    collect_induced_codes,
    disagreement_rank,
    fit_pgan,
    retrain_with_induced_prior,
)
from .reversal import ReversalOptions, random_reconstruction_experiment

log = logging.getLogger("lpl")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_common(p):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)


def _add_data(p, default="ring", n=2000):
    p.add_argument("--dataset", default=default, help="ring, blobs or an IDX image file")
    p.add_argument("--labels", default=None, help="IDX label file matching --dataset")
    p.add_argument("--n", type=int, default=n, help="number of samples")
    p.add_argument("--data-seed", type=int, default=0)


def _add_reversal(p):
    p.add_argument("--reversal-lr", type=float, default=0.05)
    p.add_argument("--reversal-steps", type=int, default=400)
    p.add_argument("--init-stddev", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--l2-weight", type=float, default=0.0)
    p.add_argument("--row-seeding", choices=("index", "content"), default="index")


def _add_codes_source(p):
    p.add_argument("--codes", default=None, help="code set written by `reverse`")
    p.add_argument("--checkpoint", default=None, help="reverse --dataset through this model instead")
    _add_data(p)
    _add_reversal(p)


def build_parser():
    parser = _Parser(prog="lpl", description="GAN reversal, prior agreement and learned priors.")
    parser.add_argument("--version", action="version", version=f"lpl {__version__}")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a GAN")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.add_argument("--latent-dim", type=int, default=20)
    p.add_argument("--hidden", type=_int_list, default=(128, 128))
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--checkpoint-every", type=int, default=0)

    p = sub.add_parser("reverse", help="reverse a dataset through a generator")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    _add_data(p)
    _add_reversal(p)

    p = sub.add_parser("pag", help="prior agreement score of reversed codes")
    _add_common(p)
    _add_codes_source(p)
    p.add_argument("--sigma", type=float, default=None, help="prior stddev (default: from checkpoint, else 1)")
    p.add_argument("--normalization", choices=("centered", "raw"), default="centered")

    p = sub.add_parser("spectrum", help="dump the singular value spectrum of a code set")
    _add_common(p)
    _add_codes_source(p)
    p.add_argument("--normalization", choices=("centered", "raw"), default="centered")

    p = sub.add_parser("report-structure", help="cluster ratio of codes grouped by label")
    _add_common(p)
    _add_codes_source(p)

    p = sub.add_parser("disagree", help="prior draws that disagree most with the data codes")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--codes", default=None)
    p.add_argument("--dataset", default="ring", help="ring, blobs or an IDX image file")
    p.add_argument("--labels", default=None)
    p.add_argument("--data-n", dest="n", type=int, default=1024, help="data rows to reverse")
    p.add_argument("--data-seed", type=int, default=0)
    _add_reversal(p)
    p.add_argument("--n", dest="candidates", type=int, default=1000, help="prior draws to score")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--cols", type=int, default=5)

    p = sub.add_parser("pgan", help="fit a prior GAN to a code set")
    _add_common(p)
    p.add_argument("--codes", required=True)
    p.add_argument("--aux-dim", type=int, default=None)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=3e-4)

    p = sub.add_parser("retrain", help="continue training with a learned prior")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mapping", required=True, help="model written by `pgan`")
    _add_data(p)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr", type=float, default=3e-4)

    p = sub.add_parser("random-recon", help="reconstruct data through an untrained generator")
    _add_common(p)
    _add_data(p, default="blobs", n=64)
    # a dense net needs an over-complete code to reconstruct images well
    p.add_argument("--latent-dim", type=int, default=100)
    p.add_argument("--hidden", type=_int_list, default=(256,))
    p.add_argument("--snapshots", type=_int_list, default=(5, 20, 400))
    p.add_argument("--reversal-lr", type=float, default=0.05)
    p.add_argument("--init-stddev", type=float, default=1e-4)
    p.add_argument("--cols", type=int, default=8)

    p = sub.add_parser("check-kl", help="joint KL decomposition on random linear-Gaussian pairs")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--latent-dim", type=int, default=4)
    p.add_argument("--data-dim", type=int, default=3)
    p.add_argument("--max-gap", type=float, default=1e-10)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None, help="override the output directory")
    return parser


# -- helpers -------------------------------------------------------------------


def _dataset(args):
    return load_dataset(args.dataset, args.n, args.data_seed, args.labels)


def _reversal_opts(args):
    return ReversalOptions(step_size=args.reversal_lr, max_steps=args.reversal_steps,
                           init_stddev=args.init_stddev, tolerance=args.tolerance,
                           l2_weight=args.l2_weight, row_seeding=args.row_seeding)


def _codes_and_labels(args):
    """Codes from ``--codes``, or from reversing ``--dataset`` through ``--checkpoint``."""
    ds = None
    if args.codes is not None:
        codes = fileio.read_codes(args.codes)
    elif args.checkpoint is not None:
        model = fileio.read_checkpoint(args.checkpoint)
        ds = _dataset(args)
        codes = collect_induced_codes(model.effective_generator(), ds, _reversal_opts(args), args.seed)
    else:
        raise ConfigError("give --codes or --checkpoint")
    return codes, ds


def _prior_sigma(args):
    if args.sigma is not None:
        return args.sigma
    if args.checkpoint is not None:
        return fileio.read_checkpoint(args.checkpoint).prior.root().sigma
    return 1.0


def write_manifest(command, config, out):
    manifest = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "out": str(out),
        "version": __version__,
        "backend": backend(),
    }
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- subcommands -----------------------------------------------------------------


def cmd_train(args, out):
    ds = _dataset(args)
    if args.checkpoint:
        model = fileio.read_checkpoint(args.checkpoint)
    else:
        model = make_gan(ds.dim, args.latent_dim, args.hidden, args.sigma, args.seed, args.lr)
    cfg = TrainConfig(batch_size=args.batch_size, steps=args.steps, lr=args.lr, seed=args.seed,
                      checkpoint_every=args.checkpoint_every, log_path=out / "train_log.csv",
                      checkpoint_dir=out / "checkpoints")
    model, rows, _ = gan_train(model, ds, cfg)
    fileio.write_checkpoint(model, out / "model.lpl", {"dataset": ds.source})
    if "centres" in ds.meta:
        covered, counts = mode_coverage(sample_generator(model, 2000, args.seed), ds.meta["centres"],
                                        ds.meta["stddev"])
        fileio.write_csv(out / "coverage.csv", ("mode", "count"), list(enumerate(counts)))
        print(f"modes covered: {covered}/{len(counts)}")
    if rows:
        print(f"step {rows[-1]['step']}: d_loss={rows[-1]['d_loss']:.4f} g_loss={rows[-1]['g_loss']:.4f}")


def cmd_reverse(args, out):
    model = fileio.read_checkpoint(args.checkpoint)
    ds = _dataset(args)
    codes = collect_induced_codes(model.effective_generator(), ds, _reversal_opts(args), args.seed,
                                  out / "codes.lpl", Path(args.checkpoint).name)
    fileio.write_csv(out / "reversal.csv", ("index", "loss", "steps", "converged", "failed"),
                     zip(range(len(codes)), codes.reversal_losses, codes.steps_used,
                         codes.converged, codes.failed))
    print(f"reversed {len(codes)} rows, mean loss {codes.mean_loss:.6g}, "
          f"{int(np.sum(codes.failed))} failed")


def cmd_pag(args, out):
    codes, _ = _codes_and_labels(args)
    rep = pag_from_codes(codes, _prior_sigma(args), out / "spectrum.csv", out / "pag.csv",
                         args.normalization)
    print(f"PAG {rep.pag:.6g} (n={rep.n}, d={rep.d}, sigma={rep.prior_sigma:g})")


def cmd_spectrum(args, out):
    codes, _ = _codes_and_labels(args)
    from .metrics import singular_values

    nu = singular_values(codes, args.normalization)
    fileio.write_csv(out / "spectrum.csv", ("index", "singular_value"), enumerate(nu))
    for i, v in enumerate(nu):
        print(f"{i}\t{v:.6g}")


def cmd_report_structure(args, out):
    codes, ds = _codes_and_labels(args)
    if ds is None:
        ds = _dataset(args)
    if ds.labels is None:
        raise ConfigError(f"dataset {ds.source} carries no labels")
    if len(ds) != len(codes):
        raise ConfigError(f"{len(codes)} codes but {len(ds)} labelled samples")
    ratio = cluster_ratio(codes.codes, ds.labels)
    fileio.write_csv(out / "structure.csv", ("n", "clusters", "cluster_ratio"),
                     [(len(codes), int(np.unique(ds.labels).size), ratio)])
    print(f"cluster ratio {ratio:.6g}")


def cmd_disagree(args, out):
    model = fileio.read_checkpoint(args.checkpoint)
    if args.codes is not None:
        codes = fileio.read_codes(args.codes)
    else:
        codes = collect_induced_codes(model.effective_generator(), _dataset(args),
                                      _reversal_opts(args), args.seed)
    rep = disagreement_rank(model.effective_generator(), model.prior.root(), codes,
                            args.candidates, args.k, args.seed)
    # candidates are drawn in root-noise space and decoded through the full chain
    fileio.write_csv(out / "disagree.csv", ("rank", "index", "score"),
                     [(r, int(i), float(s)) for r, (i, s) in
                      enumerate(zip(rep.ranked[:args.k], rep.scores[:args.k]))])
    if fileio.is_square(model.data_dim):
        fileio.write_ppm_grid(rep.top_samples, args.cols, out / "disagree.pgm")
    else:
        fileio.write_csv(out / "disagree_samples.csv",
                         tuple(f"x{j}" for j in range(model.data_dim)), rep.top_samples)
    print(f"top {args.k} of {args.candidates}: scores {rep.scores[0]:.4g} .. {rep.scores[args.k - 1]:.4g}")


def cmd_pgan(args, out):
    codes = fileio.read_codes(args.codes)
    cfg = PganConfig(aux_dim=args.aux_dim, width=args.width, steps=args.steps, seed=args.seed,
                     batch_size=args.batch_size, lr=args.lr)
    model = fit_pgan(codes, cfg, out / "pgan_log.csv")
    fileio.write_checkpoint(model, out / "mapping.lpl", {"codes": str(args.codes)})
    print(f"mapping {model.generator.in_dim} -> {model.generator.out_dim} written")


def cmd_retrain(args, out):
    model = fileio.read_checkpoint(args.checkpoint)
    h = fileio.read_checkpoint(args.mapping).generator
    ds = _dataset(args)
    cfg = TrainConfig(batch_size=args.batch_size, steps=args.steps, lr=args.lr, seed=args.seed,
                      log_path=out / "retrain_log.csv")
    model, _ = retrain_with_induced_prior(model, h, ds, cfg)
    fileio.write_checkpoint(model, out / "model.lpl", {"dataset": ds.source})
    if "centres" in ds.meta:
        covered, counts = mode_coverage(sample_generator(model, 2000, args.seed), ds.meta["centres"],
                                        ds.meta["stddev"])
        fileio.write_csv(out / "coverage.csv", ("mode", "count"), list(enumerate(counts)))
        print(f"modes covered: {covered}/{len(counts)}")


def cmd_random_recon(args, out):
    ds = _dataset(args)
    arch = mlp_specs([args.latent_dim, *args.hidden, ds.dim], "relu", "tanh")
    opts = ReversalOptions(step_size=args.reversal_lr, init_stddev=args.init_stddev,
                           max_steps=max(args.snapshots), tolerance=0.0)
    run = random_reconstruction_experiment(arch, ds, args.snapshots, args.seed, opts, out, args.cols)
    for s in args.snapshots:
        print(f"step {s}: mean loss {run.mean_loss[s]:.6g}")


def cmd_check_kl(args, out):
    rng = np.random.default_rng(args.seed)
    rows = []
    for t in range(args.trials):
        p = LinearGaussianModel.random(rng, args.latent_dim, args.data_dim)
        q = LinearGaussianModel.random(rng, args.latent_dim, args.data_dim)
        r = kl_decomposition_check(p, q)
        rows.append((t, r.lhs, r.rhs_prior_term, r.rhs_conditional_term, r.gap))
    fileio.write_csv(out / "kl_check.csv", ("trial", "joint_kl", "prior_kl", "conditional_kl", "gap"),
                     rows)
    worst = max(r[4] for r in rows)
    print(f"max gap {worst:.3g} over {args.trials} pairs")
    if worst >= args.max_gap:
        raise LplError(f"decomposition gap {worst:.3g} exceeds {args.max_gap:g}")


COMMANDS = {
    "train": cmd_train,
    "reverse": cmd_reverse,
    "pag": cmd_pag,
    "spectrum": cmd_spectrum,
    "report-structure": cmd_report_structure,
    "disagree": cmd_disagree,
    "pgan": cmd_pgan,
    "retrain": cmd_retrain,
    "random-recon": cmd_random_recon,
    "check-kl": cmd_check_kl,
}

_NOT_CONFIG = {"command", "verbose"}


def _config(args):
    return {k: list(v) if isinstance(v, tuple) else v
            for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _replay_args(args):
    manifest = json.loads(Path(args.manifest).read_text())
    if manifest.get("command") not in COMMANDS:
        raise ConfigError(f"{args.manifest}: unknown command {manifest.get('command')!r}")
    config = {k: tuple(v) if isinstance(v, list) else v for k, v in manifest["config"].items()}
    config["out"] = args.out or manifest["out"]
    return argparse.Namespace(command=manifest["command"], verbose=args.verbose, **config)


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help / --version
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    configure_threads()
    try:
        if args.command == "replay":
            args = _replay_args(args)
        out = Path(args.out)
        write_manifest(args.command, _config(args), out)
        COMMANDS[args.command](args, out)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (LplError, OSError, ValueError, ArithmeticError, KeyError) as e:
        print(f"lpl {args.command}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
