"""Command-line experiment driver.

    gresnet train --arch gresnet --depth 10 --data-dir mnist/ --out runs/g10
    gresnet eval --checkpoint runs/g10/checkpoint.gresnet --data-dir mnist/
    gresnet prune --checkpoint runs/g100/checkpoint.gresnet --data-dir mnist/ --strategy both
    gresnet sweep --depths 2,10,20 --data-dir mnist/ --out runs/sweep
    gresnet analyze-init --widths 50,100,200
"""

import argparse
import csv
import logging
import os
import sys

from . import model as M
from . import pruning as P
from .data import IDXError, load_mnist
from .optimizer import Nadam
from .tensor import Rng
from .training import error_rate, train

REPORT_NAME = "report.json"
METRICS_NAME = "metrics.csv"
CHECKPOINT_NAME = "checkpoint.gresnet"


class UsageError(ValueError):
    pass


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _add_train_flags(p, single=True):
    if single:
        p.add_argument("--arch", choices=M.FAMILIES, required=True)
        p.add_argument("--depth", type=int, required=True, help="number of middle layers d")
    p.add_argument("--width", type=int, default=50)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--k-decay", type=float, default=0.0)
    p.add_argument("--bn-momentum", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--train-subset", type=int, default=None,
                   help="use only the first N training images (smoke runs)")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="gresnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one network")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="test error of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--split", choices=("test", "train"), default="test")

    p = sub.add_parser("prune", help="accuracy vs number of removed blocks")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--strategy", choices=(P.GREEDY_K, P.RANDOM, "both"), default="both")
    p.add_argument("--seeds", type=int, default=5, help="number of random permutations")
    p.add_argument("--seed", type=int, default=0, help="first permutation seed")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")

    p = sub.add_parser("sweep", help="depth x architecture grid")
    p.add_argument("--depths", type=_int_list, default=[2, 10, 20, 50, 100])
    p.add_argument("--archs", type=_str_list, default=list(M.FAMILIES))
    _add_train_flags(p, single=False)

    p = sub.add_parser("analyze-init", help="distance from initialization to the origin")
    p.add_argument("--widths", type=_int_list, default=[25, 50, 100, 200])
    p.add_argument("--schemes", type=_str_list, default=["he_uniform", "glorot_uniform", "zero"])
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    return parser


def _open_out(path):
    if path is None:
        return sys.stdout
    return open(path, "w", newline="")


def _optimizer(args):
    return Nadam(lr=args.lr, beta1=args.beta1, weight_decay=args.weight_decay, k_decay=args.k_decay)


def run_train(args, arch=None, depth=None, out=None):
    arch = arch or args.arch
    depth = args.depth if depth is None else depth
    out = out or args.out
    if args.k_decay > 0 and arch != "gresnet":
        raise UsageError(f"--k-decay needs gate parameters, which {arch} lacks")
    if args.epochs < 0:
        raise UsageError("--epochs must be non-negative")
    config = M.NetworkConfig(arch, depth, width=args.width, seed=args.seed, bn_momentum=args.bn_momentum)
    train_ds = load_mnist(args.data_dir, "train")
    test_ds = load_mnist(args.data_dir, "test")
    if args.train_subset is not None:
        train_ds = train_ds.subset(args.train_subset)
    os.makedirs(out, exist_ok=True)
    opt = _optimizer(args)
    net, report, opt = train(
        config, train_ds, test_ds, epochs=args.epochs, batch_size=args.batch_size,
        optimizer=opt, metrics_path=os.path.join(out, METRICS_NAME),
    )
    report.config["train_subset"] = args.train_subset
    report.save(os.path.join(out, REPORT_NAME))
    M.save_checkpoint(net, os.path.join(out, CHECKPOINT_NAME), optimizer=opt.hyperparameters())
    return report


def cmd_train(args):
    report = run_train(args)
    err = report.final_test_error
    print(f"final test error: {err:.2f}%" if err is not None else "no epochs run")


def cmd_eval(args):
    net, _ = M.load_checkpoint(args.checkpoint)
    ds = load_mnist(args.data_dir, args.split)
    print(repr(error_rate(net, ds)))


def cmd_prune(args):
    net, _ = M.load_checkpoint(args.checkpoint)
    if net.family not in ("resnet", "gresnet"):
        raise UsageError(f"pruning needs a resnet or gresnet checkpoint, got {net.family}")
    if args.strategy == P.GREEDY_K and net.family != "gresnet":
        raise UsageError("greedy pruning needs k, which a resnet lacks")
    # "both" on a resnet quietly means random only
    greedy = args.strategy in (P.GREEDY_K, "both") and net.family == "gresnet"
    ds = load_mnist(args.data_dir, "test")
    rows = []
    if greedy:
        rep = P.prune_curve(net, ds, P.GREEDY_K)
        rows += [(P.GREEDY_K, "", n, acc) for n, acc in rep.accuracy_curve]
    if args.strategy in (P.RANDOM, "both"):
        seeds = range(args.seed, args.seed + args.seeds)
        reports, mean = P.random_curves(net, ds, seeds)
        for rep in reports:
            rows += [(P.RANDOM, rep.seed, n, acc) for n, acc in rep.accuracy_curve]
        rows += [(P.RANDOM, "mean", n, acc) for n, acc in mean]
    f = _open_out(args.out)
    try:
        w = csv.writer(f)
        w.writerow(("strategy", "seed", "num_removed", "accuracy"))
        w.writerows(rows)
    finally:
        if f is not sys.stdout:
            f.close()


def cmd_sweep(args):
    for arch in args.archs:
        if arch not in M.FAMILIES:
            raise UsageError(f"unknown architecture {arch!r}")
    errors = {}
    mean_ks = {}
    for depth in args.depths:
        for arch in args.archs:
            run_dir = os.path.join(args.out, "runs", f"{arch}-d{depth}")
            report = run_train(args, arch, depth, run_dir)
            errors[depth, arch] = report.final_test_error
            if arch == "gresnet":
                mean_ks[depth] = report.mean_k
    with open(os.path.join(args.out, "table1.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["depth"] + args.archs)
        for depth in args.depths:
            w.writerow([depth] + [errors[depth, a] for a in args.archs])
    if mean_ks:
        with open(os.path.join(args.out, "table2.csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["depth", "mean_k"])
            w.writerows(sorted(mean_ks.items()))
    print(f"wrote {os.path.join(args.out, 'table1.csv')}")


def cmd_analyze_init(args):
    rng = Rng(args.seed)
    f = _open_out(args.out)
    try:
        w = csv.writer(f)
        w.writerow(("n", "scheme", "per_component_var", "total_abs_distance"))
        for scheme in args.schemes:
            for n in args.widths:
                r = M.init_distance_report(scheme, n, args.trials, rng)
                w.writerow((n, scheme, r["per_component_var"], r["total_abs_distance"]))
    finally:
        if f is not sys.stdout:
            f.close()


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "prune": cmd_prune,
    "sweep": cmd_sweep,
    "analyze-init": cmd_analyze_init,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError, IDXError, M.CheckpointError, FloatingPointError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"gresnet: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
