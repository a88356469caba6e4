"""Kronecker dual-layer (KDL) neural networks in numpy."""

from .arch import ArchSpec, efnn_from_kdl, parse_arch
from .data import Dataset, SplitDataset, gen_synthetic, load_csv, load_idx, metrics, normalize, split
from .errors import FormatError, KdlError, NumericError, ParameterError, ParseError, ShapeError, StateError
from .grad import finite_diff_grad, loss_and_grad
from .kpd import KpShape, kpd_approx, kp_apply
from .net import Network, count_params, fnn_to_kdl, init_network, load_network, network_forward, predict, save_network
from .optim import AdaptiveConfig, TrainConfig, TrainHistory, adaptive_rank_train, lr_factor_probe, train

__version__ = "0.1.0"
