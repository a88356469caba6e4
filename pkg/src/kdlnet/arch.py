"""Architecture notation.

Grammar (whitespace ignored)::

    spec  := item (sep item)+
    item  := INT | '(' INT ',' INT ')' | '((' INT ',' INT '),(' INT ',' INT '))'
    sep   := '|' | '|^' INT

``4|9|9|4`` is a dense network, ``(2,2)|^2(3,3)|^2(2,2)`` a rank-2 KDL
network on matrix-shaped states and ``((7,4),(7,4))|((5,1),(2,1))`` a KML
network.  The rank after ``^`` belongs to the layer ending at the item it
precedes.  Families cannot be mixed within one spec.
"""

from dataclasses import dataclass

from .errors import ParseError

__all__ = [
    "Dense",
    "KdlPair",
    "KmlQuad",
    "ArchSpec",
    "UnsupportedMixError",
    "parse_arch",
    "efnn_from_kdl",
]


class UnsupportedMixError(ParseError):
    """Items of different layer families were combined in one spec."""


@dataclass(frozen=True)
class Dense:
    width: int
    rank: int = 1

    @property
    def size(self):
        return self.width

    def render(self):
        return str(self.width)


@dataclass(frozen=True)
class KdlPair:
    rows: int
    cols: int
    rank: int = 1

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def size(self):
        return self.rows * self.cols

    def render(self):
        return f"({self.rows},{self.cols})"


@dataclass(frozen=True)
class KmlQuad:
    """State of ``(r1*c1) x (r2*c2)``; rows fold to ``r2 x c2``, columns to ``r1 x c1``."""

    r1: int
    c1: int
    r2: int
    c2: int
    rank: int = 1

    @property
    def shape(self):
        return (self.r1 * self.c1, self.r2 * self.c2)

    @property
    def size(self):
        return self.r1 * self.c1 * self.r2 * self.c2

    def render(self):
        return f"(({self.r1},{self.c1}),({self.r2},{self.c2}))"


@dataclass(frozen=True)
class ArchSpec:
    items: tuple

    @property
    def kind(self):
        first = self.items[0]
        if isinstance(first, Dense):
            return "fnn"
        if isinstance(first, KdlPair):
            return "kdl"
        return "kml"

    @property
    def n_layers(self):
        return len(self.items) - 1

    @property
    def ranks(self):
        return [it.rank for it in self.items[1:]]

    @property
    def input_shape(self):
        first = self.items[0]
        return (first.width,) if isinstance(first, Dense) else first.shape

    @property
    def output_shape(self):
        last = self.items[-1]
        return (last.width,) if isinstance(last, Dense) else last.shape

    @property
    def input_size(self):
        return self.items[0].size

    @property
    def output_size(self):
        return self.items[-1].size

    def transitions(self):
        return list(zip(self.items[:-1], self.items[1:]))

    def with_rank(self, rank):
        """Same node shapes with every layer set to ``rank``."""
        items = [self.items[0]] + [type(it)(**{**it.__dict__, "rank": rank}) for it in self.items[1:]]
        return ArchSpec(tuple(items))

    def render(self):
        parts = [self.items[0].render()]
        for it in self.items[1:]:
            parts.append("|" if it.rank == 1 else f"|^{it.rank}")
            parts.append(it.render())
        return "".join(parts)

    def __str__(self):
        return self.render()


class _Parser:
    def __init__(self, text):
        # keep byte offsets of the original text while skipping whitespace
        self.text = text
        self.toks = [(i, ch) for i, ch in enumerate(text) if not ch.isspace()]
        self.pos = 0

    def offset(self):
        if self.pos < len(self.toks):
            return self.toks[self.pos][0]
        return len(self.text.encode("utf-8"))

    def peek(self, n=0):
        j = self.pos + n
        return self.toks[j][1] if j < len(self.toks) else ""

    def fail(self, expected, what=None):
        got = self.peek() or "end of input"
        raise ParseError(what or f"unexpected {got!r}", offset=self.offset(), expected=expected)

    def expect(self, ch):
        if self.peek() != ch:
            self.fail([repr(ch)])
        self.pos += 1

    def integer(self):
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        if self.pos == start:
            self.fail(["INT"])
        digits = "".join(ch for _, ch in self.toks[start : self.pos])
        value = int(digits)
        if value < 1:
            self.pos = start
            self.fail(["positive INT"], what=f"non-positive integer {digits}")
        return value

    def pair(self):
        self.expect("(")
        a = self.integer()
        self.expect(",")
        b = self.integer()
        self.expect(")")
        return a, b

    def item(self, rank):
        if self.peek().isdigit():
            return Dense(self.integer(), rank)
        if self.peek() == "(":
            if self.peek(1) == "(":
                self.expect("(")
                r1, c1 = self.pair()
                self.expect(",")
                r2, c2 = self.pair()
                self.expect(")")
                return KmlQuad(r1, c1, r2, c2, rank)
            r, c = self.pair()
            return KdlPair(r, c, rank)
        self.fail(["INT", "'('", "'(('"])

    def spec(self):
        items = [(self.offset(), self.item(1))]
        while self.peek() == "|":
            self.pos += 1
            rank = 1
            if self.peek() == "^":
                self.pos += 1
                rank = self.integer()
            items.append((self.offset(), self.item(rank)))
        if self.pos != len(self.toks):
            self.fail(["'|'", "end of input"])
        if len(items) < 2:
            self.fail(["'|'"], what="a spec needs at least two items")
        kind = type(items[0][1])
        for off, it in items[1:]:
            if type(it) is not kind:
                raise UnsupportedMixError(
                    f"cannot mix {kind.__name__} and {type(it).__name__} items; "
                    "convert networks explicitly",
                    offset=off,
                )
            if isinstance(it, Dense) and it.rank != 1:
                raise ParseError("rank superscript is only meaningful for KDL/KML items", offset=off)
        return ArchSpec(tuple(it for _, it in items))


def parse_arch(text):
    """Parse the architecture notation into an :class:`ArchSpec`."""
    if isinstance(text, ArchSpec):
        return text
    return _Parser(text).spec()


def efnn_from_kdl(spec):
    """Dense network with the node counts of a KDL spec, intermediate layers included.

    Each KDL layer ``(p,q) -> (u,v)`` of rank ``k`` contributes an
    intermediate width ``k*p*v`` between the node counts ``p*q`` and ``u*v``.
    """
    spec = parse_arch(spec)
    if spec.kind != "kdl":
        raise ParseError(f"E-FNN construction needs a KDL spec, got {spec.kind}")
    widths = [spec.items[0].size]
    for a, b in spec.transitions():
        widths.append(b.rank * a.rows * b.cols)
        widths.append(b.size)
    return ArchSpec(tuple(Dense(w) for w in widths))
