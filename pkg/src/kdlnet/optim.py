"""Minibatch training with SGD or Adam, and the adaptive-rank controller.

Both optimizers apply the Tikhonov term as a decoupled decay, so one step is
``param -= eta * update(data_grad) + eta * lam * param``.  For SGD this is the
plain gradient step on the regularized loss.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SplitDataset, metrics, split
from .errors import NumericError, ParameterError, ShapeError
from .grad import data_loss, network_backprop
from .net import network_forward, predict, reshape_state

__all__ = [
    "AdaptiveConfig",
    "TrainConfig",
    "EpochRecord",
    "TrainHistory",
    "SGD",
    "Adam",
    "make_optimizer",
    "train",
    "insert_summand",
    "lr_factor_probe",
    "adaptive_rank_train",
]

MACHINE_EPS = float(np.finfo(np.float64).eps)


@dataclass
class AdaptiveConfig:
    val_fraction: float = 0.10
    plateau_window: int = 5
    plateau_tol: float = 0.01
    max_rank: int = 4
    lr_factors: tuple = (0.25, 0.63, 1.26, 2.0)
    probe_epochs: int = 10

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ParameterError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.plateau_window < 1:
            raise ParameterError("plateau_window must be >= 1")
        if self.max_rank < 1:
            raise ParameterError("max_rank must be >= 1")
        if not self.lr_factors or any(f <= 0 for f in self.lr_factors):
            raise ParameterError(f"lr_factors must be non-empty and positive, got {self.lr_factors}")
        if self.probe_epochs < 1:
            raise ParameterError("probe_epochs must be >= 1")


@dataclass
class TrainConfig:
    eta: float = 1e-3
    lam: float = 0.0
    epochs: int = 20
    batch_size: int = 100
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    metric: str = "rel_l2_pct"
    adaptive: AdaptiveConfig = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ParameterError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0:
            raise ParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        if self.optimizer.lower() not in ("sgd", "adam"):
            raise ParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.metric not in ("rel_l2_pct", "class_err_pct", "mse"):
            raise ParameterError(f"unknown metric {self.metric!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    test_error: float
    fwd_s: float
    bwd_s: float
    ranks: tuple
    phase: str = "train"


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)
    probes: list = field(default_factory=list)
    optimizer: object = field(default=None, repr=False)

    HEADER = ("epoch", "train_loss", "val_loss", "test_error", "fwd_s", "bwd_s", "ranks")

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    @property
    def train_loss(self):
        return self.column("train_loss")

    @property
    def val_loss(self):
        return self.column("val_loss")

    @property
    def final_ranks(self):
        return self.records[-1].ranks if self.records else ()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.HEADER)
            for r in self.records:
                w.writerow(
                    [
                        r.epoch,
                        f"{r.train_loss:.17g}",
                        f"{r.val_loss:.17g}",
                        f"{r.test_error:.17g}",
                        f"{r.fwd_s:.6f}",
                        f"{r.bwd_s:.6f}",
                        " ".join(str(k) for k in r.ranks),
                    ]
                )

    @classmethod
    def from_csv(cls, path):
        hist = cls()
        with open(path, newline="") as fh:
            rows = csv.reader(fh)
            next(rows)
            for row in rows:
                hist.records.append(
                    EpochRecord(
                        int(row[0]),
                        float(row[1]),
                        float(row[2]),
                        float(row[3]),
                        float(row[4]),
                        float(row[5]),
                        tuple(int(k) for k in row[6].split()),
                    )
                )
        return hist


# ---------------------------------------------------------------------------
# optimizers


class SGD:
    def __init__(self, eta, lam=0.0):
        self.eta = eta
        self.lam = lam

    def step(self, params, grads):
        for p, g in zip(params, grads):
            if self.lam:
                p -= self.eta * self.lam * p
            p -= self.eta * g


class Adam:
    """Standard bias-corrected moment estimates with decoupled weight decay."""

    def __init__(self, eta, lam=0.0, beta1=0.9, beta2=0.999, eps=1e-8):
        self.eta = eta
        self.lam = lam
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.lam:
                p -= self.eta * self.lam * p
            p -= self.eta * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(config, eta=None):
    eta = config.eta if eta is None else eta
    if config.optimizer.lower() == "sgd":
        return SGD(eta, config.lam)
    return Adam(eta, config.lam, config.beta1, config.beta2, config.adam_eps)


# ---------------------------------------------------------------------------
# training


def _as_split(dataset):
    if isinstance(dataset, SplitDataset):
        return dataset
    if isinstance(dataset, Dataset):
        return SplitDataset(train=dataset)
    raise ParameterError(f"expected a Dataset or SplitDataset, got {type(dataset).__name__}")


def _check_conform(net, ds):
    n_in = int(np.prod(net.in_shape))
    n_out = int(np.prod(net.out_shape))
    if ds.n_in != n_in or ds.n_out != n_out:
        raise ShapeError(
            f"dataset has {ds.n_in} inputs / {ds.n_out} targets, network expects {n_in} / {n_out}"
        )


def _eval(net, ds, metric):
    """``(mean data loss, metric)`` on a dataset, or NaNs when absent."""
    if ds is None or len(ds) == 0:
        return float("nan"), float("nan")
    P = predict(net, ds.X)
    m = metrics(P, ds.Y)
    return 0.5 * m["mse"], m[metric]


def _run_epoch(net, opt, X, Y, config, rng, epoch):
    """One pass over the data; returns ``(mean data loss, fwd_s, bwd_s)``."""
    n = X.shape[0]
    order = rng.permutation(n) if config.shuffle else np.arange(n)
    params = net.params()
    total = 0.0
    fwd = bwd = 0.0
    for b, start in enumerate(range(0, n, config.batch_size)):
        idx = order[start : start + config.batch_size]
        t0 = time.perf_counter()
        Y_hat, records = network_forward(net, X[idx])
        t1 = time.perf_counter()
        T = reshape_state(Y[idx], net.out_shape)
        loss = data_loss(Y_hat, T)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at epoch {epoch}, batch {b}", epoch=epoch, batch=b)
        grads = network_backprop(net, records, Y_hat - T)
        opt.step(params, [g for layer in grads for g in layer])
        t2 = time.perf_counter()
        fwd += t1 - t0
        bwd += t2 - t1
        total += loss
    return total / n, fwd, bwd


def _fit(net, sd, config, opt, rng, epochs, first_epoch=1, history=None, phase="train", on_epoch=None):
    history = history if history is not None else TrainHistory()
    for e in range(first_epoch, first_epoch + epochs):
        tl, fwd, bwd = _run_epoch(net, opt, sd.train.X, sd.train.Y, config, rng, e)
        vl, _ = _eval(net, sd.val, config.metric)
        _, te = _eval(net, sd.test, config.metric)
        rec = EpochRecord(e, tl, vl, te, fwd, bwd, tuple(net.ranks), phase)
        history.records.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
    return history


def train(net, dataset, config, on_epoch=None):
    """Train ``net`` in place for ``config.epochs`` epochs.

    ``dataset`` is a :class:`Dataset` (train only) or a :class:`SplitDataset`
    whose ``val`` and ``test`` parts are evaluated after every epoch.
    """
    sd = _as_split(dataset)
    _check_conform(net, sd.train)
    rng = np.random.default_rng(config.seed)
    return _fit(net, sd, config, make_optimizer(config), rng, config.epochs, on_epoch=on_epoch)


# ---------------------------------------------------------------------------
# adaptive rank


def insert_summand(net, rng, scale=MACHINE_EPS):
    """Append one summand to every KDL layer.

    New weights are standard normal rescaled to Frobenius norm ``scale``;
    new biases are zero.
    """
    for layer in net.layers:
        if layer.family != "kdl":
            raise ParameterError("summand insertion needs a KDL network")
    for layer in net.layers:
        new = []
        for name, arr in zip(layer.names, layer.params()):
            shape = arr.shape[1:]
            if name.startswith("W"):
                M = rng.standard_normal(shape)
                M *= scale / np.linalg.norm(M)
            else:
                M = np.zeros(shape)
            new.append(np.concatenate([arr, M[None]], axis=0))
        layer.set_params(new)
    net.rebuild_spec()


def _plateau(vals, window, tol):
    if len(vals) < window + 1:
        return False
    best = min(vals[-window - 1 : -1])
    if not np.isfinite(best) or best <= 0:
        return False
    return (best - vals[-1]) / best < tol


def lr_factor_probe(net, dataset, eta, factors, probe_epochs, config=None, first_epoch=1):
    """Train one clone per factor at ``eta * f`` and pick the best validation loss.

    Returns ``(best_factor, histories, best_net)``; histories are ordered as
    ``factors``.  Ties go to the smallest factor; diverged clones score
    ``inf``.  If every clone diverges a :class:`NumericError` lists them all.
    """
    factors = list(factors)
    if not factors:
        raise ParameterError("lr_factor_probe needs at least one factor")
    config = config or TrainConfig(eta=eta)
    sd = _as_split(dataset)
    if sd.val is None:
        raise ParameterError("lr_factor_probe needs a validation set")
    outcomes, histories, clones = [], [], []
    for f in factors:
        clone = net.copy()
        rng = np.random.default_rng(config.seed + first_epoch)
        opt = make_optimizer(config, eta * f)
        hist = TrainHistory(optimizer=opt)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                _fit(clone, sd, config, opt, rng, probe_epochs, first_epoch, hist, "probe")
            score = hist.records[-1].val_loss
            if not np.isfinite(score):
                score = float("inf")
        except NumericError as exc:
            score = float("inf")
            hist.events.append(str(exc))
        outcomes.append(score)
        histories.append(hist)
        clones.append(clone)
    if len(factors) == 1:
        return factors[0], histories, clones[0]
    if all(not np.isfinite(s) for s in outcomes):
        report = ", ".join(f"{f}: diverged" for f in factors)
        raise NumericError(f"every learning-rate probe diverged ({report})")
    best = min(range(len(factors)), key=lambda i: (outcomes[i], factors[i]))
    return factors[best], histories, clones[best]


def adaptive_rank_train(net, dataset, config, on_epoch=None):
    """Train with summand insertion on validation plateaus.

    The network is modified in place (layers gain summands).  Probe epochs of
    the adopted factor count toward ``config.epochs`` and appear in the
    history with phase ``"probe"``; every probe history is kept in
    ``history.probes``.
    """
    ac = config.adaptive or AdaptiveConfig()
    sd = _as_split(dataset)
    _check_conform(net, sd.train)
    if sd.val is None:
        parts = split(sd.train, val_fraction=ac.val_fraction, seed=config.seed)
        sd = SplitDataset(parts.train, sd.test, parts.val, parts.indices)
    if net.family != "kdl":
        raise ParameterError("adaptive_rank_train needs a KDL network")
    rng = np.random.default_rng(config.seed)
    ins_rng = np.random.default_rng(config.seed + 1)
    eta = config.eta
    opt = make_optimizer(config, eta)
    history = TrainHistory()
    since = 0
    e = 1
    while e <= config.epochs:
        _fit(net, sd, config, opt, rng, 1, e, history, on_epoch=on_epoch)
        e += 1
        since += 1
        vals = history.val_loss[-since:]
        if min(net.ranks) >= ac.max_rank or not _plateau(vals, ac.plateau_window, ac.plateau_tol):
            continue
        before = predict(net, sd.val.X)
        insert_summand(net, ins_rng)
        after = predict(net, sd.val.X)
        scale = np.maximum(np.linalg.norm(before, axis=1), np.finfo(float).tiny)
        perturb = float(np.max(np.linalg.norm(after - before, axis=1) / scale))
        event = {"epoch": e - 1, "ranks": tuple(net.ranks), "perturbation": perturb}
        n_probe = min(ac.probe_epochs, config.epochs - e + 1)
        if n_probe > 0:
            f, hists, best = lr_factor_probe(net, sd, eta, ac.lr_factors, n_probe, config, e)
            net.set_layers(best.layers)
            eta *= f
            # continue with the winning clone's moment estimates
            opt = hists[list(ac.lr_factors).index(f)].optimizer
            history.probes.append({"epoch": e - 1, "factors": list(ac.lr_factors), "histories": hists})
            for rec in hists[list(ac.lr_factors).index(f)].records:
                history.records.append(rec)
                if on_epoch is not None:
                    on_epoch(rec)
            e += n_probe
            event["factor"] = f
        else:
            opt = make_optimizer(config, eta)
        event["eta"] = eta
        history.events.append(event)
        since = 0
    return history
