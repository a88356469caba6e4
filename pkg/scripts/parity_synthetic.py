"""FNN vs KDL-NN on the synthetic regression target, averaged over seeds.

    python scripts/parity_synthetic.py --seeds 5 --epochs 20
"""

import argparse
from dataclasses import dataclass

import numpy as np

from kdlnet import TrainConfig, gen_synthetic, init_network, split, train


@dataclass
class ParityConfig:
    fnn: str = "8|64|64|1"
    kdl: str = "(2,4)|(8,8)|(8,8)|(1,1)"
    n_train: int = 10000
    n_test: int = 1000
    seeds: int = 5
    epochs: int = 20
    eta: float = 1e-3
    batch: int = 100
    act: str = "relu"


def run(cfg):
    sd = split(gen_synthetic(8, cfg.n_train, seed=100))
    sd.test = gen_synthetic(8, cfg.n_test, seed=200)
    errs = {"fnn": [], "kdl": []}
    for seed in range(cfg.seeds):
        tc = TrainConfig(eta=cfg.eta, epochs=cfg.epochs, batch_size=cfg.batch, seed=seed)
        for name, arch in (("fnn", cfg.fnn), ("kdl", cfg.kdl)):
            net = init_network(arch, cfg.act, cfg.act, seed=seed, phi_out=cfg.act)
            err = train(net, sd, tc).records[-1].test_error
            errs[name].append(err)
            print(f"seed {seed}  {name}  rel_l2 {err:.3f}%")
    for name, vals in errs.items():
        print(f"{name}: mean {np.mean(vals):.3f}%  std {np.std(vals):.3f}%")
    print(f"ratio kdl/fnn {np.mean(errs['kdl']) / np.mean(errs['fnn']):.3f}")
    return errs


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for name, value in ParityConfig().__dict__.items():
        p.add_argument(f"--{name.replace('_', '-')}", type=type(value), default=value)
    run(ParityConfig(**vars(p.parse_args())))


if __name__ == "__main__":
    main()
