"""Benchmark harness: timed training runs with flop tallies, and report emission."""

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import matlin
from .arch import efnn_from_kdl, parse_arch
from .data import gen_synthetic, load_csv, load_idx, split
from .errors import FormatError, KdlError, ParameterError
from .grad import network_backprop
from .net import count_params, init_network, network_forward, reshape_state
from .optim import AdaptiveConfig, TrainConfig, train

__all__ = [
    "BenchConfig",
    "BenchRow",
    "BenchReport",
    "COLUMNS",
    "flop_tally",
    "load_bench_data",
    "run_bench",
    "emit_report",
    "parse_report_csv",
]

COLUMNS = (
    "network",
    "architecture",
    "params_unique",
    "params_connections",
    "fwd_s",
    "bwd_s",
    "total_s",
    "test_metric",
    "fwd_flops",
    "bwd_flops",
)


@dataclass
class BenchConfig:
    """``archs`` maps a display name to an arch string; ``"efnn:<kdl arch>"``
    expands to the E-FNN of that KDL spec."""

    archs: list
    data: dict
    train: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 1
    phi1: str = "tanh"
    phi2: str = "tanh"
    phi_out: str = None
    test_fraction: float = 0.1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ParameterError("repetitions must be >= 1")
        self.archs = [tuple(a) for a in self.archs]

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        tc = dict(d.pop("train", {}))
        if "lambda" in tc:
            tc["lam"] = tc.pop("lambda")
        if tc.get("adaptive") is not None:
            tc["adaptive"] = AdaptiveConfig(**tc["adaptive"])
        return cls(train=TrainConfig(**tc), **d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class BenchRow:
    network: str
    architecture: str
    params_unique: int
    params_connections: int
    fwd_s: float = math.nan
    bwd_s: float = math.nan
    total_s: float = math.nan
    test_metric: float = math.nan
    fwd_flops: int = 0
    bwd_flops: int = 0
    status: str = "ok"
    train_loss: list = field(default_factory=list)


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    metric: str = "rel_l2_pct"


def _resolve_arch(text):
    if text.startswith("efnn:"):
        return efnn_from_kdl(text[5:])
    return parse_arch(text)


def flop_tally(net, X, Y, batch_size=100):
    """Flops of one forward and one backward sweep over ``(X, Y)`` in minibatches."""
    fwd = matlin.FlopCounter()
    bwd = matlin.FlopCounter()
    for start in range(0, X.shape[0], batch_size):
        xb = X[start : start + batch_size]
        Y_hat, records = network_forward(net, xb, fwd)
        T = reshape_state(Y[start : start + batch_size], net.out_shape)
        network_backprop(net, records, Y_hat - T, bwd)
    return fwd.flops, bwd.flops


def load_bench_data(ref):
    kind = ref.get("kind", "synthetic")
    if kind == "synthetic":
        return gen_synthetic(int(ref.get("n1", 8)), int(ref.get("samples", 1000)), int(ref.get("seed", 0)))
    if kind == "csv":
        return load_csv(ref["path"], ref.get("target_cols", [-1]), bool(ref.get("skip_header", False)))
    if kind == "idx":
        return load_idx(ref["images"], ref["labels"], limit=ref.get("limit"))
    raise ParameterError(f"unknown data kind {kind!r}")


def _one_run(spec, sd, config, cfg):
    net = init_network(spec, cfg.phi1, cfg.phi2, seed=config.seed, phi_out=cfg.phi_out)
    t0 = time.perf_counter()
    hist = train(net, sd, config)
    total = time.perf_counter() - t0
    fwd = sum(hist.column("fwd_s"))
    bwd = sum(hist.column("bwd_s"))
    return net, hist, fwd, bwd, total


def run_bench(config, dataset=None):
    """Train every architecture on the same split with the same seed.

    Timings and test metric are averaged over ``repetitions``; flop tallies
    cover all training epochs (forward and backward passes, optimizer updates
    excluded).  Failed runs produce rows with status ``failed: ...``.
    """
    ds = dataset if dataset is not None else load_bench_data(config.data)
    sd = split(ds, test_fraction=config.test_fraction, seed=config.train.seed)
    report = BenchReport(metric=config.train.metric)
    for name, text in config.archs:
        spec = _resolve_arch(text)
        conn = count_params(spec, "connections") if spec.kind != "kml" else count_params(spec)
        row = BenchRow(name, spec.render(), count_params(spec), conn)
        try:
            runs = [_one_run(spec, sd, config.train, config) for _ in range(config.repetitions)]
            net = runs[-1][0]
            hist = runs[-1][1]
            row.fwd_s = float(np.mean([r[2] for r in runs]))
            row.bwd_s = float(np.mean([r[3] for r in runs]))
            row.total_s = float(np.mean([r[4] for r in runs]))
            row.test_metric = float(np.mean([r[1].records[-1].test_error for r in runs]))
            row.train_loss = hist.train_loss
            probe = init_network(spec, config.phi1, config.phi2, seed=config.train.seed, phi_out=config.phi_out)
            f, b = flop_tally(probe, sd.train.X, sd.train.Y, config.train.batch_size)
            row.fwd_flops = f * config.train.epochs
            row.bwd_flops = b * config.train.epochs
        except KdlError as exc:
            row.status = f"failed: {exc}"
        report.rows.append(row)
    return report


def _cell(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value).replace("|", "\\|")  # architecture strings contain pipes


def emit_report(report, path, fmt="csv"):
    """Write ``report`` in ``fmt`` (``csv``, ``json``, ``markdown``); columns follow :data:`COLUMNS`."""
    fmt = fmt.lower()
    cols = COLUMNS + ("status",)
    rows = [[getattr(r, c) for c in cols] for r in report.rows]
    try:
        with open(path, "w", newline="") as fh:
            if fmt == "csv":
                w = csv.writer(fh)
                w.writerow(cols)
                for r in rows:
                    w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in r])
            elif fmt == "json":
                payload = {"metric": report.metric, "columns": list(cols)}
                payload["rows"] = [
                    {c: (None if isinstance(v, float) and math.isnan(v) else v) for c, v in zip(cols, r)}
                    for r in rows
                ]
                json.dump(payload, fh, indent=2)
                fh.write("\n")
            elif fmt in ("markdown", "md"):
                fh.write("| " + " | ".join(cols) + " |\n")
                fh.write("|" + "---|" * len(cols) + "\n")
                for r in rows:
                    fh.write("| " + " | ".join(_cell(v) for v in r) + " |\n")
            else:
                raise ParameterError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise FormatError(f"cannot write report to {path}: {exc.strerror}") from exc


_INT_COLS = {"params_unique", "params_connections", "fwd_flops", "bwd_flops"}
_FLOAT_COLS = {"fwd_s", "bwd_s", "total_s", "test_metric"}


def parse_report_csv(path):
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            for c in _INT_COLS:
                rec[c] = int(rec[c])
            for c in _FLOAT_COLS:
                rec[c] = float(rec[c])
            out.append(rec)
    return out


def report_dict(report):
    return [asdict(r) for r in report.rows]
