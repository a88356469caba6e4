"""Train a rank-1 KDL-NN (and optionally the dense baseline) on an MNIST subset.

    python scripts/mnist_subset.py --data-dir data/mnist --epochs 10
"""

import argparse
from dataclasses import dataclass
from pathlib import Path

from kdlnet import TrainConfig, count_params, init_network, load_idx, split, train


@dataclass
class MnistConfig:
    data_dir: str = "data/mnist"
    arch: str = "(28,28)|(28,28)|(28,28)|(5,2)"
    limit: int = 10000
    test_fraction: float = 0.2
    epochs: int = 10
    eta: float = 1e-2
    batch: int = 100
    act: str = "tanh"
    seed: int = 0


def _find(root, stem):
    for cand in (root / stem, root / f"{stem}.gz"):
        if cand.exists():
            return cand
    raise SystemExit(f"{stem}[.gz] not found under {root}")


def run(cfg):
    root = Path(cfg.data_dir)
    ds = load_idx(_find(root, "images-idx3-ubyte"), _find(root, "labels-idx1-ubyte"), limit=cfg.limit)
    sd = split(ds, test_fraction=cfg.test_fraction, seed=cfg.seed)
    net = init_network(cfg.arch, cfg.act, cfg.act, seed=cfg.seed, phi_out=cfg.act)
    print(f"{cfg.arch}: {count_params(net.spec)} parameters, {len(sd.train)} train / {len(sd.test)} test")
    tc = TrainConfig(eta=cfg.eta, epochs=cfg.epochs, batch_size=cfg.batch, seed=cfg.seed, metric="class_err_pct")
    hist = train(net, sd, tc, on_epoch=lambda r: print(
        f"epoch {r.epoch:2d}  loss {r.train_loss:.4f}  test error {r.test_error:.2f}%  "
        f"fwd {r.fwd_s:.2f}s  bwd {r.bwd_s:.2f}s"))
    return hist


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, value in MnistConfig().__dict__.items():
        p.add_argument(f"--{name.replace('_', '-')}", type=type(value), default=value)
    run(MnistConfig(**vars(p.parse_args())))


if __name__ == "__main__":
    main()
