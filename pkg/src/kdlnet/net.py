"""Layers, networks, forward passes and checkpoints.

States flowing through a network always carry a leading batch axis: dense
layers see ``(B, n)`` arrays, KDL and KML layers ``(B, rows, cols)``.  When
consecutive layers disagree on shape but not on element count the state is
reshaped column-major (``vec`` then ``mat``), the same convention used to
turn an FNN input vector into a KDL input matrix.
"""

from dataclasses import dataclass, field

import numpy as np

from . import matlin
from .arch import ArchSpec, Dense, KdlPair, KmlQuad, parse_arch
from .errors import ParameterError, ParseError, ShapeError
from .kpd import KpShape, epsilon_trunc, kpd_approx

__all__ = [
    "Activation",
    "ACTIVATIONS",
    "get_activation",
    "DenseLayer",
    "KdlLayer",
    "KmlLayer",
    "Network",
    "init_network",
    "dense_forward",
    "kdl_forward",
    "kml_forward",
    "network_forward",
    "predict",
    "count_params",
    "kp_shapes",
    "fnn_to_kdl",
    "save_network",
    "load_network",
]


# ---------------------------------------------------------------------------
# activations


@dataclass(frozen=True)
class Activation:
    name: str
    f: object = field(repr=False, compare=False)
    df: object = field(repr=False, compare=False)

    def __call__(self, x):
        return self.f(x)

    def deriv(self, x):
        return self.df(x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _dsigmoid(x):
    s = _sigmoid(x)
    return s * (1.0 - s)


def _dtanh(x):
    t = np.tanh(x)
    return 1.0 - t * t


ACTIVATIONS = {
    "linear": Activation("linear", lambda x: x, lambda x: np.ones_like(x)),
    # derivative at exactly 0 is taken as 0
    "relu": Activation("relu", lambda x: np.maximum(x, 0.0), lambda x: (x > 0).astype(np.float64)),
    "tanh": Activation("tanh", np.tanh, _dtanh),
    "sigmoid": Activation("sigmoid", _sigmoid, _dsigmoid),
}


def get_activation(name):
    if isinstance(name, Activation):
        return name
    try:
        return ACTIVATIONS[str(name).lower()]
    except KeyError:
        raise ParameterError(
            f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}"
        ) from None


# ---------------------------------------------------------------------------
# layers


@dataclass
class DenseLayer:
    """``a -> phi(W a + b)`` with ``W`` of shape ``(n_out, n_in)``."""

    W: np.ndarray
    b: np.ndarray
    phi: Activation

    family = "dense"
    names = ("W", "b")

    @property
    def in_shape(self):
        return (self.W.shape[1],)

    @property
    def out_shape(self):
        return (self.W.shape[0],)

    def params(self):
        return [self.W, self.b]

    def set_params(self, arrays):
        self.W, self.b = arrays


@dataclass
class KdlLayer:
    """Rank-k Kronecker dual layer mapping ``p x q`` states to ``u x v`` states.

    Per summand ``i``::

        Z_L = A @ W_L[i] + B_L[i];  A_L = phi2(Z_L)
        Z_R = W_R[i] @ A_L + B_R[i]

    and the output is ``sum_i phi1(Z_R[i])``.  With ``phi1_after_sum`` the
    output is ``phi1(sum_i Z_R[i])`` instead, which is the form an FNN layer
    embeds into exactly.
    """

    W_L: np.ndarray  # (k, q, v)
    B_L: np.ndarray  # (k, p, v)
    W_R: np.ndarray  # (k, u, p)
    B_R: np.ndarray  # (k, u, v)
    phi1: Activation
    phi2: Activation
    phi1_after_sum: bool = False

    family = "kdl"
    names = ("W_L", "B_L", "W_R", "B_R")

    @property
    def rank(self):
        return self.W_L.shape[0]

    @property
    def in_shape(self):
        return (self.B_L.shape[1], self.W_L.shape[1])

    @property
    def out_shape(self):
        return self.B_R.shape[1:]

    def params(self):
        return [self.W_L, self.B_L, self.W_R, self.B_R]

    def set_params(self, arrays):
        self.W_L, self.B_L, self.W_R, self.B_R = arrays


@dataclass
class KmlLayer:
    """Kronecker multi-layer: a KDL pair whose two factors are split again.

    The input state is ``P_in x Q_in`` with ``P = r1*c1`` and ``Q = r2*c2``.
    Stages 1-2 act on every input row ``j`` (folded to ``r2_in x c2_in``),
    stages 3-4 on every intermediate column ``j`` (folded to
    ``r1_in x c1_in``); every row/column index has its own weights::

        Z1 = rowmat_j(A) @ W1[i,j] + B1[i,j];   A1 = phi(Z1)
        Z2 = W2[i,j] @ A1 + B2[i,j];            row j of A2[i] = phi(vec(Z2))
        Z3 = colmat_j(A2[i]) @ W3[i,j] + B3[i,j];  A3 = phi(Z3)
        Z4 = W4[i,j] @ A3 + B4[i,j];            column j of out = sum_i phi(vec(Z4))
    """

    W1: np.ndarray  # (k, P_in, c2_in, c2_out)
    B1: np.ndarray  # (k, P_in, r2_in, c2_out)
    W2: np.ndarray  # (k, P_in, r2_out, r2_in)
    B2: np.ndarray  # (k, P_in, r2_out, c2_out)
    W3: np.ndarray  # (k, Q_out, c1_in, c1_out)
    B3: np.ndarray  # (k, Q_out, r1_in, c1_out)
    W4: np.ndarray  # (k, Q_out, r1_out, r1_in)
    B4: np.ndarray  # (k, Q_out, r1_out, c1_out)
    phi: Activation

    family = "kml"
    names = ("W1", "B1", "W2", "B2", "W3", "B3", "W4", "B4")

    @property
    def rank(self):
        return self.W1.shape[0]

    @property
    def in_quad(self):
        r2_in, c2_in = self.B1.shape[2], self.W1.shape[2]
        r1_in, c1_in = self.B3.shape[2], self.W3.shape[2]
        return (r1_in, c1_in, r2_in, c2_in)

    @property
    def out_quad(self):
        r2_out, c2_out = self.B2.shape[2:]
        r1_out, c1_out = self.B4.shape[2:]
        return (r1_out, c1_out, r2_out, c2_out)

    @property
    def in_shape(self):
        r1, c1, r2, c2 = self.in_quad
        return (r1 * c1, r2 * c2)

    @property
    def out_shape(self):
        r1, c1, r2, c2 = self.out_quad
        return (r1 * c1, r2 * c2)

    def params(self):
        return [self.W1, self.B1, self.W2, self.B2, self.W3, self.B3, self.W4, self.B4]

    def set_params(self, arrays):
        (self.W1, self.B1, self.W2, self.B2, self.W3, self.B3, self.W4, self.B4) = arrays


@dataclass
class Network:
    spec: ArchSpec
    layers: list
    phi1: Activation
    phi2: Activation
    seed: int = 0
    info: dict = field(default_factory=dict)

    @property
    def family(self):
        return self.layers[0].family

    @property
    def in_shape(self):
        return self.layers[0].in_shape

    @property
    def out_shape(self):
        return self.layers[-1].out_shape

    @property
    def ranks(self):
        return [getattr(layer, "rank", 1) for layer in self.layers]

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def n_scalars(self):
        return int(sum(p.size for p in self.params()))

    def copy(self):
        layers = []
        for layer in self.layers:
            clone = _copy_layer(layer)
            layers.append(clone)
        return Network(self.spec, layers, self.phi1, self.phi2, self.seed, dict(self.info))

    def set_layers(self, layers):
        self.layers = layers
        self.rebuild_spec()

    def rebuild_spec(self):
        """Refresh ``spec`` after summands were added to the layers."""
        if self.family == "dense":
            return
        items = [self.spec.items[0]]
        for it, layer in zip(self.spec.items[1:], self.layers):
            items.append(type(it)(**{**it.__dict__, "rank": layer.rank}))
        self.spec = ArchSpec(tuple(items))


def _copy_layer(layer):
    clone = type(layer).__new__(type(layer))
    clone.__dict__.update(layer.__dict__)
    clone.set_params([p.copy() for p in layer.params()])
    return clone


# ---------------------------------------------------------------------------
# construction


def _glorot(rng, shape):
    rows, cols = shape[-2:]
    s = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=shape)


def init_network(spec, phi1="tanh", phi2="tanh", seed=0, phi_out=None):
    """Glorot-uniform weights, zero biases, deterministic in ``seed``.

    ``phi1`` is the activation of dense layers and the outer activation of KDL
    layers (and the only one of KML layers); ``phi2`` is the KDL inner
    activation.  ``phi_out`` overrides ``phi1`` on the last layer.
    """
    spec = parse_arch(spec)
    phi1 = get_activation(phi1)
    phi2 = get_activation(phi2)
    last_phi = get_activation(phi_out) if phi_out is not None else phi1
    rng = np.random.default_rng(seed)
    layers = []
    n = spec.n_layers
    for idx, (a, b) in enumerate(spec.transitions()):
        act = last_phi if idx == n - 1 else phi1
        if isinstance(a, Dense):
            W = _glorot(rng, (b.width, a.width))
            layers.append(DenseLayer(W, np.zeros(b.width), act))
        elif isinstance(a, KdlPair):
            k, p, q, u, v = b.rank, a.rows, a.cols, b.rows, b.cols
            layers.append(
                KdlLayer(
                    W_L=_glorot(rng, (k, q, v)),
                    B_L=np.zeros((k, p, v)),
                    W_R=_glorot(rng, (k, u, p)),
                    B_R=np.zeros((k, u, v)),
                    phi1=act,
                    phi2=phi2,
                )
            )
        else:
            layers.append(_init_kml(rng, a, b, act))
    return Network(spec, layers, phi1, phi2, int(seed), {"phi_out": last_phi.name})


def _init_kml(rng, a, b, phi):
    k = b.rank
    P_in = a.r1 * a.c1
    Q_out = b.r2 * b.c2
    return KmlLayer(
        W1=_glorot(rng, (k, P_in, a.c2, b.c2)),
        B1=np.zeros((k, P_in, a.r2, b.c2)),
        W2=_glorot(rng, (k, P_in, b.r2, a.r2)),
        B2=np.zeros((k, P_in, b.r2, b.c2)),
        W3=_glorot(rng, (k, Q_out, a.c1, b.c1)),
        B3=np.zeros((k, Q_out, a.r1, b.c1)),
        W4=_glorot(rng, (k, Q_out, b.r1, a.r1)),
        B4=np.zeros((k, Q_out, b.r1, b.c1)),
        phi=phi,
    )


# ---------------------------------------------------------------------------
# forward passes


@dataclass
class DenseCache:
    A: np.ndarray
    Z: np.ndarray


@dataclass
class KdlCache:
    A: np.ndarray  # (B, p, q)
    Z_L: np.ndarray  # (B, k, p, v)
    A_L: np.ndarray
    Z_R: np.ndarray  # (B, k, u, v)
    S: np.ndarray = None  # sum of Z_R over summands when phi1 acts after the sum


@dataclass
class KmlCache:
    Arows: np.ndarray  # (B, 1, P_in, r2_in, c2_in)
    Z1: np.ndarray
    A1: np.ndarray
    Z2: np.ndarray
    Acols: np.ndarray  # (B, k, Q_out, r1_in, c1_in)
    Z3: np.ndarray
    A3: np.ndarray
    Z4: np.ndarray


@dataclass
class LayerRecord:
    index: int
    prev_shape: tuple  # state shape (with batch axis) before conforming to this layer
    cache: object


def dense_forward(layer, A, counter=None):
    if A.shape[-1] != layer.W.shape[1]:
        raise ShapeError(f"dense layer expects width {layer.W.shape[1]}, got {A.shape[-1]}")
    Z = matlin.add_bias(matlin.matmul(A, layer.W.T, counter), layer.b, counter)
    return layer.phi(Z), DenseCache(A, Z)


def kdl_forward(layer, A, counter=None, index=None):
    """Forward pass of one KDL layer on a ``(B, p, q)`` (or single ``p x q``) state."""
    single = A.ndim == 2
    if single:
        A = A[None]
    if A.shape[1:] != layer.in_shape:
        where = f" (layer {index})" if index is not None else ""
        raise ShapeError(f"KDL layer{where} expects input {layer.in_shape}, got {A.shape[1:]}")
    Z_L = matlin.add_bias(matlin.matmul(A[:, None], layer.W_L, counter), layer.B_L, counter)
    A_L = layer.phi2(Z_L)
    Z_R = matlin.add_bias(matlin.matmul(layer.W_R, A_L, counter), layer.B_R, counter)
    if layer.phi1_after_sum:
        S = Z_R.sum(axis=1)
        out = layer.phi1(S)
    else:
        S = None
        out = layer.phi1(Z_R).sum(axis=1)
    if counter is not None and layer.rank > 1:
        counter.add((layer.rank - 1) * out.size)
    cache = KdlCache(A, Z_L, A_L, Z_R, S)
    return (out[0] if single else out), cache


def kml_forward(layer, A, counter=None, index=None):
    """Forward pass of one KML layer on a ``(B, P, Q)`` (or single) state."""
    single = A.ndim == 2
    if single:
        A = A[None]
    if A.shape[1:] != layer.in_shape:
        where = f" (layer {index})" if index is not None else ""
        raise ShapeError(f"KML layer{where} expects input {layer.in_shape}, got {A.shape[1:]}")
    r1_in, c1_in, r2_in, c2_in = layer.in_quad
    r1_out, c1_out, r2_out, c2_out = layer.out_quad
    phi = layer.phi
    Arows = matlin.mat(A, r2_in, c2_in)[:, None]  # (B, 1, P_in, r2_in, c2_in)
    Z1 = matlin.add_bias(matlin.matmul(Arows, layer.W1, counter), layer.B1, counter)
    A1 = phi(Z1)
    Z2 = matlin.add_bias(matlin.matmul(layer.W2, A1, counter), layer.B2, counter)
    A2 = phi(matlin.vec(Z2))  # (B, k, P_in, Q_out)
    Acols = matlin.mat(np.swapaxes(A2, -1, -2), r1_in, c1_in)  # (B, k, Q_out, r1_in, c1_in)
    Z3 = matlin.add_bias(matlin.matmul(Acols, layer.W3, counter), layer.B3, counter)
    A3 = phi(Z3)
    Z4 = matlin.add_bias(matlin.matmul(layer.W4, A3, counter), layer.B4, counter)
    out = np.swapaxes(phi(matlin.vec(Z4)).sum(axis=1), -1, -2)  # (B, P_out, Q_out)
    cache = KmlCache(Arows, Z1, A1, Z2, Acols, Z3, A3, Z4)
    return (out[0] if single else out), cache


def reshape_state(A, shape):
    """Column-major reshape of a batched state to per-sample ``shape``."""
    if A.shape[1:] == tuple(shape):
        return A
    if int(np.prod(A.shape[1:])) != int(np.prod(shape)):
        raise ShapeError(f"cannot reshape state {A.shape[1:]} to {tuple(shape)}")
    flat = A if A.ndim == 2 else matlin.vec(A)
    if len(shape) == 1:
        return flat
    return matlin.mat(flat, *shape)


def layer_forward(layer, A, counter=None, index=None):
    if layer.family == "dense":
        return dense_forward(layer, A, counter)
    if layer.family == "kdl":
        return kdl_forward(layer, A, counter, index)
    return kml_forward(layer, A, counter, index)


def network_forward(net, X, counter=None):
    """Run a batch through the network.

    ``X`` has a leading batch axis; each sample may be flat or already shaped,
    as long as its element count matches the input layer.  Returns the output
    states ``(B, *out_shape)`` and one cache record per layer.
    """
    A = np.asarray(X, dtype=np.float64)
    if A.ndim < 2:
        raise ShapeError(f"network_forward expects a batch, got shape {A.shape}")
    records = []
    for idx, layer in enumerate(net.layers):
        prev = A.shape
        try:
            A = reshape_state(A, layer.in_shape)
        except ShapeError as exc:
            raise ShapeError(f"layer {idx}: {exc}") from None
        A, cache = layer_forward(layer, A, counter, idx)
        records.append(LayerRecord(idx, prev, cache))
    return A, records


def predict(net, X, counter=None):
    """Network outputs flattened column-major to ``(B, n_out)`` rows."""
    Y, _ = network_forward(net, X, counter)
    return reshape_state(Y, (int(np.prod(Y.shape[1:])),))


# ---------------------------------------------------------------------------
# parameter counting


def count_params(spec, convention="unique"):
    """Trainable-parameter count of an architecture.

    ``"unique"`` counts every stored weight and bias entry.  ``"connections"``
    counts, per KDL layer ``(p,q) -> (u,v)`` of rank ``k``, the edges
    ``k*(p*q*v + u*p*v)`` plus ``k*p*v`` intermediate biases and one ``u*v``
    output bias.  Dense layers count identically under both; KML layers only
    have the unique convention.
    """
    spec = parse_arch(spec)
    if convention not in ("unique", "connections"):
        raise ParameterError(f"unknown counting convention {convention!r}")
    total = 0
    for a, b in spec.transitions():
        k = b.rank
        if isinstance(a, Dense):
            total += a.width * b.width + b.width
        elif isinstance(a, KdlPair):
            p, q, u, v = a.rows, a.cols, b.rows, b.cols
            if convention == "unique":
                total += k * (q * v + p * v + u * p + u * v)
            else:
                total += k * (p * q * v + u * p * v + p * v) + u * v
        else:
            P_in = a.r1 * a.c1
            Q_out = b.r2 * b.c2
            stage12 = a.c2 * b.c2 + a.r2 * b.c2 + b.r2 * a.r2 + b.r2 * b.c2
            stage34 = a.c1 * b.c1 + a.r1 * b.c1 + b.r1 * a.r1 + b.r1 * b.c1
            total += k * (P_in * stage12 + Q_out * stage34)
    return total


# ---------------------------------------------------------------------------
# FNN -> KDL embedding


def kp_shapes(spec):
    """KPD factorizations induced by a KDL spec.

    A KDL layer ``(p,q) -> (u,v)`` computes ``vec(W_R A W_L) = kron(W_L^T, W_R) vec(A)``,
    so the dense weight it replaces factors with ``KpShape(v, q, u, p)``.
    """
    spec = parse_arch(spec)
    if spec.kind != "kdl":
        raise ParseError(f"KPD shapes need a KDL spec, got {spec.kind}")
    return [KpShape(b.cols, a.cols, b.rows, a.rows) for a, b in spec.transitions()]


def fnn_to_kdl(fnn, shapes, k=None, phi2="linear"):
    """Embed a dense network into a KDL network via rank-``k`` KPDs of its weights.

    Layer ``l`` gets ``W_L[i] = Left_i^T``, ``W_R[i] = Right_i``, ``B_L = 0``,
    ``B_R[0] = mat(b)`` and ``B_R[i>0] = 0``, with the outer activation applied
    after the summation.  ``k=None`` (or any ``k`` above a layer's rank bound)
    keeps the full rank of that layer.  The truncation tails are stored in
    ``info["epsilon"]`` and the spectra in ``info["sigma"]``.
    """
    if fnn.family != "dense":
        raise ShapeError("fnn_to_kdl needs a dense network")
    if isinstance(shapes, (str, ArchSpec)):
        shapes = kp_shapes(shapes)
    if len(shapes) != len(fnn.layers):
        raise ShapeError(f"{len(shapes)} KPD shapes for {len(fnn.layers)} layers")
    phi2 = get_activation(phi2)
    layers, eps, sigmas, items = [], [], [], []
    for idx, (layer, s) in enumerate(zip(fnn.layers, shapes)):
        if layer.W.shape != (s.rows, s.cols):
            raise ShapeError(
                f"layer {idx}: weight {layer.W.shape} does not factor as shape {s}"
            )
        kk = s.max_rank if k is None else min(int(k), s.max_rank)
        fac = kpd_approx(layer.W, s, kk)
        u, p, v, q = s.m2, s.n2, s.m1, s.n1
        B_R = np.zeros((kk, u, v))
        B_R[0] = matlin.mat(layer.b, u, v)
        layers.append(
            KdlLayer(
                W_L=np.swapaxes(fac.left, -1, -2).copy(),
                B_L=np.zeros((kk, p, v)),
                W_R=fac.right.copy(),
                B_R=B_R,
                phi1=layer.phi,
                phi2=phi2,
                phi1_after_sum=True,
            )
        )
        eps.append(epsilon_trunc(fac.sigma, kk))
        sigmas.append(fac.sigma)
        if idx == 0:
            items.append(KdlPair(p, q))
        items.append(KdlPair(u, v, kk))
    net = Network(ArchSpec(tuple(items)), layers, fnn.phi1, phi2, fnn.seed)
    net.info.update(epsilon=eps, sigma=sigmas, shapes=list(shapes), phi_out=fnn.layers[-1].phi.name)
    return net


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = "kdlnet-v1"


def _fmt(values):
    return " ".join(f"{x:.17g}" for x in values)


def save_network(net, path):
    """Write the self-describing text checkpoint.

    Header lines give the magic, architecture, activations, summation order
    and seed; each parameter matrix follows as a tag line
    ``NAME layer summand rows cols`` (KML tags add the split index after the
    summand) and one line of column-major entries.
    """
    last = net.layers[-1]
    phi_out = getattr(last, "phi", None) or getattr(last, "phi1", None)
    order = "after_sum" if any(getattr(l, "phi1_after_sum", False) for l in net.layers) else "per_summand"
    lines = [
        MAGIC,
        f"arch {net.spec.render()}",
        f"phi1 {net.phi1.name}",
        f"phi2 {net.phi2.name}",
        f"phi_out {phi_out.name}",
        f"order {order}",
        f"seed {net.seed}",
    ]
    for li, layer in enumerate(net.layers, start=1):
        for name, arr in zip(layer.names, layer.params()):
            if layer.family == "dense":
                M = arr if arr.ndim == 2 else arr.reshape(-1, 1)
                lines.append(f"{name} {li} 1 {M.shape[0]} {M.shape[1]}")
                lines.append(_fmt(matlin.vec(M)))
            elif layer.family == "kdl":
                for i, M in enumerate(arr, start=1):
                    lines.append(f"{name} {li} {i} {M.shape[0]} {M.shape[1]}")
                    lines.append(_fmt(matlin.vec(M)))
            else:
                for i, per_j in enumerate(arr, start=1):
                    for j, M in enumerate(per_j, start=1):
                        lines.append(f"{name} {li} {i} {j} {M.shape[0]} {M.shape[1]}")
                        lines.append(_fmt(matlin.vec(M)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ParseError(f"{path}: missing '{MAGIC}' header", offset=0)
    header = {}
    pos = 1
    for key in ("arch", "phi1", "phi2", "phi_out", "order", "seed"):
        if pos >= len(lines) or not lines[pos].startswith(key + " "):
            raise ParseError(f"{path}: expected '{key}' header on line {pos + 1}")
        header[key] = lines[pos][len(key) + 1 :].strip()
        pos += 1
    spec = parse_arch(header["arch"])
    net = init_network(spec, header["phi1"], header["phi2"], int(header["seed"]), phi_out=header["phi_out"])
    after_sum = header["order"] == "after_sum"
    for layer in net.layers:
        if layer.family == "kdl":
            layer.phi1_after_sum = after_sum
        for arr in layer.params():
            arr[...] = np.nan
    while pos < len(lines):
        if not lines[pos].strip():
            pos += 1
            continue
        tag = lines[pos].split()
        if pos + 1 >= len(lines):
            raise ParseError(f"{path}: tag on line {pos + 1} has no data line")
        try:
            data = np.array([float(x) for x in lines[pos + 1].split()])
            name, li = tag[0], int(tag[1])
            layer = net.layers[li - 1]
            arr = layer.params()[layer.names.index(name)]
            idx = tuple(int(t) - 1 for t in tag[2:-2])
            rows, cols = int(tag[-2]), int(tag[-1])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"{path}: bad parameter record on line {pos + 1} ({exc})") from None
        M = matlin.mat(data, rows, cols) if data.size == rows * cols else None
        if M is None:
            raise ParseError(f"{path}: line {pos + 2} has {data.size} entries, expected {rows * cols}")
        if layer.family == "dense":
            target = arr if arr.ndim == 2 else arr.reshape(-1, 1)
            if target.shape != M.shape:
                raise ParseError(f"{path}: {name} of layer {li} has shape {target.shape}, file says {M.shape}")
            target[...] = M
        else:
            if arr[idx].shape != M.shape:
                raise ParseError(f"{path}: {name} of layer {li} has shape {arr[idx].shape}, file says {M.shape}")
            arr[idx] = M
        pos += 2
    for li, layer in enumerate(net.layers, start=1):
        for name, arr in zip(layer.names, layer.params()):
            if not np.all(np.isfinite(arr)):
                raise ParseError(f"{path}: {name} of layer {li} missing or non-finite")
    return net
