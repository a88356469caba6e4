"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

import argparse
import sys

import numpy as np

from .analysis import embedding_discrepancy, rank_sweep, theorem_bound
from .bench import BenchConfig, emit_report, run_bench
from .data import gen_synthetic, load_csv, load_idx, save_csv, split
from .errors import FormatError, NumericError, ParameterError, ParseError, ShapeError, StateError
from .kpd import KpShape, kpd_approx
from .net import count_params, fnn_to_kdl, init_network, load_network, save_network
from .optim import AdaptiveConfig, TrainConfig, adaptive_rank_train, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    return [int(t) if t.lstrip("-").isdigit() else t for t in text.split(",") if t]


def _float_list(text):
    return [float(t) for t in text.split(",") if t]


def build_parser():
    p = _Parser(prog="kdlnet", description="Kronecker dual-layer networks")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write the synthetic regression dataset as CSV")
    g.add_argument("--n1", type=int, default=8)
    g.add_argument("--samples", type=int, default=10000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    for name in ("train", "train-adaptive"):
        t = sub.add_parser(name, help="train a network" if name == "train" else "train with rank growth")
        t.add_argument("--arch", required=True)
        t.add_argument("--data", required=True, help="CSV file or IDX image file")
        t.add_argument("--labels", help="IDX label file (with IDX --data)")
        t.add_argument("--target-cols", type=_int_list, default=[-1])
        t.add_argument("--skip-header", action="store_true", default=None, help="default: auto-detect")
        t.add_argument("--limit", type=int, help="use at most this many samples")
        t.add_argument("--test-fraction", type=float, default=0.1)
        t.add_argument("--epochs", type=int, default=20)
        t.add_argument("--eta", type=float, default=1e-3)
        t.add_argument("--lambda", dest="lam", type=float, default=0.0)
        t.add_argument("--batch", type=int, default=100)
        t.add_argument("--optimizer", choices=["sgd", "adam"], default="adam")
        t.add_argument("--seed", type=int, default=0)
        t.add_argument("--phi1", default="tanh")
        t.add_argument("--phi2", default="tanh")
        t.add_argument("--phi-out", default=None)
        t.add_argument("--metric", choices=["rel_l2_pct", "class_err_pct", "mse"], default=None)
        t.add_argument("--out-model")
        t.add_argument("--out-history")
        if name == "train-adaptive":
            t.add_argument("--max-rank", type=int, default=4)
            t.add_argument("--plateau-window", type=int, default=5)
            t.add_argument("--plateau-tol", type=float, default=0.01)
            t.add_argument("--lr-factors", type=_float_list, default=[0.25, 0.63, 1.26, 2.0])
            t.add_argument("--probe-epochs", type=int, default=10)
            t.add_argument("--val-fraction", type=float, default=0.1)

    d = sub.add_parser("decompose", help="KPD of one dense layer of a checkpoint")
    d.add_argument("--model", required=True)
    d.add_argument("--shape", required=True, help="m1,n1,m2,n2")
    d.add_argument("--rank", type=int, required=True)
    d.add_argument("--layer", type=int, default=1)

    b = sub.add_parser("bound", help="evaluate the embedding error bound")
    b.add_argument("--model", required=True)
    b.add_argument("--shapes", required=True, help="KDL arch string fixing the factorization")
    b.add_argument("--rank", type=int, required=True)
    b.add_argument("--c1", type=float, default=1.0)
    b.add_argument("--input", required=True, help="CSV file; its first row is the input")
    b.add_argument("--out")

    r = sub.add_parser("rank-sweep", help="test error of truncated embeddings for every rank")
    r.add_argument("--model", required=True)
    r.add_argument("--shapes", required=True)
    r.add_argument("--test-data", required=True)
    r.add_argument("--target-cols", type=_int_list, default=[-1])
    r.add_argument("--skip-header", action="store_true", default=None, help="default: auto-detect")
    r.add_argument("--metric", choices=["rel_l2_pct", "class_err_pct", "mse"], default="rel_l2_pct")
    r.add_argument("--out")

    c = sub.add_parser("bench", help="run a benchmark described by a JSON config")
    c.add_argument("--config", required=True)
    c.add_argument("--out")
    c.add_argument("--format", choices=["csv", "json", "markdown"], default="markdown")
    return p


# ---------------------------------------------------------------------------


def _load_data(args):
    if args.data.endswith(".csv"):
        ds = load_csv(args.data, args.target_cols, args.skip_header)
        if args.limit:
            ds = ds.subset(slice(0, args.limit))
        return ds, "rel_l2_pct"
    if not args.labels:
        raise UsageError("IDX data needs --labels")
    return load_idx(args.data, args.labels, limit=args.limit), "class_err_pct"


def _train_config(args, default_metric):
    adaptive = None
    if args.command == "train-adaptive":
        adaptive = AdaptiveConfig(
            val_fraction=args.val_fraction,
            plateau_window=args.plateau_window,
            plateau_tol=args.plateau_tol,
            max_rank=args.max_rank,
            lr_factors=tuple(args.lr_factors),
            probe_epochs=args.probe_epochs,
        )
    return TrainConfig(
        eta=args.eta,
        lam=args.lam,
        epochs=args.epochs,
        batch_size=args.batch,
        optimizer=args.optimizer,
        seed=args.seed,
        metric=args.metric or default_metric,
        adaptive=adaptive,
    )


def cmd_gen_data(args, out):
    ds = gen_synthetic(args.n1, args.samples, args.seed)
    save_csv(ds, args.out)
    print(f"wrote {len(ds)} samples with {ds.n_in} inputs to {args.out}", file=out)


def cmd_train(args, out):
    ds, default_metric = _load_data(args)
    config = _train_config(args, default_metric)
    sd = split(ds, test_fraction=args.test_fraction, seed=args.seed)
    net = init_network(args.arch, args.phi1, args.phi2, seed=args.seed, phi_out=args.phi_out)
    print(
        f"arch {net.spec.render()}  params {count_params(net.spec)} (unique)  "
        f"train {len(sd.train)}  test {len(sd.test) if sd.test else 0}",
        file=out,
    )

    def report(rec):
        print(
            f"epoch {rec.epoch:3d}  loss {rec.train_loss:.6g}  test {rec.test_error:.4g}  "
            f"fwd {rec.fwd_s:.3f}s  bwd {rec.bwd_s:.3f}s  ranks {','.join(map(str, rec.ranks))}",
            file=out,
        )

    runner = adaptive_rank_train if args.command == "train-adaptive" else train
    hist = runner(net, sd, config, on_epoch=report)
    if args.out_history:
        hist.to_csv(args.out_history)
    if args.out_model:
        save_network(net, args.out_model)
    return hist, net


def cmd_decompose(args, out):
    net = load_network(args.model)
    if not 1 <= args.layer <= len(net.layers):
        raise UsageError(f"--layer must lie in [1, {len(net.layers)}]")
    layer = net.layers[args.layer - 1]
    if layer.family != "dense":
        raise ShapeError(f"layer {args.layer} is a {layer.family} layer, not dense")
    shape = KpShape.parse(args.shape)
    fac = kpd_approx(layer.W, shape, args.rank)
    err = float(np.linalg.norm(layer.W - fac.dense()))
    print(f"shape {shape}  rank {args.rank}  max rank {shape.max_rank}", file=out)
    print("sigma " + " ".join(f"{s:.6g}" for s in fac.sigma), file=out)
    print(f"frobenius error {err:.6g}  relative {err / max(np.linalg.norm(layer.W), 1e-300):.6g}", file=out)
    return fac


def _first_row(path):
    with open(path) as fh:
        for line in fh:
            cells = [c.strip() for c in line.split(",") if c.strip()]
            if not cells:
                continue
            try:
                return np.array([float(c) for c in cells])
            except ValueError:
                continue  # header
    raise ParseError(f"{path}: no numeric row")


def cmd_bound(args, out):
    fnn = load_network(args.model)
    x = _first_row(args.input)
    n_in = fnn.layers[0].W.shape[1]
    n_out = fnn.layers[-1].W.shape[0]
    if x.size == n_in + n_out:
        x = x[:n_in]  # row of a dataset CSV with trailing targets
    rep = theorem_bound(fnn, args.shapes, args.rank, args.c1, x)
    kdl = fnn_to_kdl(fnn, args.shapes, args.rank, phi2="linear")
    measured = embedding_discrepancy(fnn, kdl, x)
    for idx, (e, kap) in enumerate(zip(rep.eps_at_k(), rep.kappa)):
        print(f"layer {idx + 2}  rank {rep.ranks[idx]}  epsilon {e:.6g}  kappa {kap:.6g}  "
              f"f0 {rep.f_zero_norms[idx]:.6g}", file=out)
    print(f"bound {rep.total_bound:.6g}  measured {measured:.6g}", file=out)
    if args.out:
        rep.to_csv(args.out)
    return rep


def cmd_rank_sweep(args, out):
    fnn = load_network(args.model)
    test = load_csv(args.test_data, args.target_cols, args.skip_header)
    sweep = rank_sweep(fnn, args.shapes, test, metric=args.metric)
    print(f"fnn reference {sweep.reference:.6g}", file=out)
    for k, e in zip(sweep.ks, sweep.errors):
        print(f"k {k:3d}  {args.metric} {e:.6g}", file=out)
    if args.out:
        sweep.to_csv(args.out)
    return sweep


def cmd_bench(args, out):
    try:
        config = BenchConfig.from_json(args.config)
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{args.config}: bad bench config ({exc})") from exc
    report = run_bench(config)
    for row in report.rows:
        print(
            f"{row.network:8s} {row.architecture:40s} params {row.params_unique:>9d}  "
            f"fwd {row.fwd_s:.3f}s  bwd {row.bwd_s:.3f}s  {report.metric} {row.test_metric:.4g}  "
            f"flops {row.fwd_flops}/{row.bwd_flops}  {row.status}",
            file=out,
        )
    if args.out:
        emit_report(report, args.out, args.format)
    return report


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "train-adaptive": cmd_train,
    "decompose": cmd_decompose,
    "bound": cmd_bound,
    "rank-sweep": cmd_rank_sweep,
    "bench": cmd_bench,
}


def main(argv=None, out=None):
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"kdlnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"kdlnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, FormatError, ShapeError, StateError, OSError) as exc:
        print(f"kdlnet: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
