"""Loop patterns on the square lattice: tracing, boundary indexing, enumeration.

A pattern assigns one of two arc-tiles to every site of an n_v x n_h grid.
Tile 0 carries the arcs (up,left) and (down,right); tile 1 carries (up,right)
and (down,left).  Concatenating arcs across tile edges produces open paths
(terminating on the patch boundary) and closed loops.  Everything downstream
-- matchings, surgery moves, state vectors, the random-cluster mapping --
consumes the primitives defined here.

Grid convention: rows r = 1..n_v top to bottom, columns c = 1..n_h left to
right; ``tiles[r-1][c-1]`` is the tile at (r, c).  Pattern indices pack tiles
little-endian by site s = (r-1)*n_h + (c-1).

Boundary stubs of an open patch are numbered clockwise from the top-left:
top row left->right = 1..n_h, right column top->bottom, bottom row
right->left, left column bottom->top (2N points total, N = n_h + n_v).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterator

OPEN = "open"
TORUS = "torus"

_DEFAULT_MAX_BITS = 24


def max_enumeration_bits() -> int:
    """Enumeration guard; override with the LOOPKIT_MAX_BITS env variable."""
    return int(os.environ.get("LOOPKIT_MAX_BITS", _DEFAULT_MAX_BITS))


@dataclass(frozen=True)
class Dims:
    n_h: int
    n_v: int
    topology: str = OPEN

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError("n_h and n_v must be >= 1")
        if self.topology not in (OPEN, TORUS):
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.topology == TORUS and (self.n_h % 2 or self.n_v % 2):
            raise ValueError("torus requires even n_h and n_v")

    @property
    def n_sites(self) -> int:
        return self.n_h * self.n_v

    @property
    def n_boundary(self) -> int:
        return 2 * (self.n_h + self.n_v) if self.topology == OPEN else 0


@dataclass(frozen=True)
class LoopPattern:
    dims: Dims
    tiles: tuple  # tuple of row-tuples of 0/1

    def __post_init__(self):
        if len(self.tiles) != self.dims.n_v:
            raise ValueError("wrong number of rows")
        for row in self.tiles:
            if len(row) != self.dims.n_h:
                raise ValueError("wrong row length")
            if any(t not in (0, 1) for t in row):
                raise ValueError("tiles must be 0 or 1")

    def tile(self, r: int, c: int) -> int:
        """Tile value at 1-based (row, column); wraps on the torus."""
        if self.dims.topology == TORUS:
            r = (r - 1) % self.dims.n_v + 1
            c = (c - 1) % self.dims.n_h + 1
        return self.tiles[r - 1][c - 1]

    @property
    def index(self) -> int:
        idx = 0
        for s, t in enumerate(t for row in self.tiles for t in row):
            idx |= t << s
        return idx

    def n_zero_tiles(self) -> int:
        return sum(1 for row in self.tiles for t in row if t == 0)

    def with_tile(self, r: int, c: int, value: int) -> "LoopPattern":
        rows = [list(row) for row in self.tiles]
        rows[r - 1][c - 1] = value
        return LoopPattern(self.dims, tuple(tuple(row) for row in rows))


def pattern_from_index(dims: Dims, index: int) -> LoopPattern:
    if not 0 <= index < (1 << dims.n_sites):
        raise ValueError("index out of range")
    bits = [(index >> s) & 1 for s in range(dims.n_sites)]
    rows = tuple(
        tuple(bits[r * dims.n_h : (r + 1) * dims.n_h]) for r in range(dims.n_v)
    )
    return LoopPattern(dims, rows)


@dataclass(frozen=True)
class LoopStats:
    n_closed: int
    n_zero_tiles: int


@dataclass(frozen=True)
class LoopDecomposition:
    open_paths: tuple  # ((start, end, trail), ...) sorted by smaller endpoint
    closed_loops: tuple  # (trail, ...) each a cyclic tuple of edges
    windings: tuple = field(default=())  # per closed loop: (w_h, w_v), torus only


# --- boundary indexing ----------------------------------------------------

SIDES = ("top", "right", "bottom", "left")


def boundary_index(dims: Dims, side: str, offset: int) -> int:
    """Clockwise boundary number of the stub at 0-based ``offset`` along ``side``.

    Offsets run left->right on top, top->bottom on right, right->left on
    bottom and bottom->top on left, matching the clockwise numbering.
    """
    if dims.topology != OPEN:
        raise ValueError("boundary indexing requires an open patch")
    n_h, n_v = dims.n_h, dims.n_v
    length = n_h if side in ("top", "bottom") else n_v
    if not 0 <= offset < length:
        raise ValueError(f"offset {offset} out of range for side {side!r}")
    if side == "top":
        return 1 + offset
    if side == "right":
        return n_h + 1 + offset
    if side == "bottom":
        return n_h + n_v + 1 + offset
    if side == "left":
        return 2 * n_h + n_v + 1 + offset
    raise ValueError(f"unknown side {side!r}")


def boundary_side_offset(dims: Dims, index: int) -> tuple:
    """Inverse of :func:`boundary_index`."""
    n_h, n_v = dims.n_h, dims.n_v
    if not 1 <= index <= 2 * (n_h + n_v):
        raise ValueError("boundary index out of range")
    if index <= n_h:
        return ("top", index - 1)
    if index <= n_h + n_v:
        return ("right", index - n_h - 1)
    if index <= 2 * n_h + n_v:
        return ("bottom", index - n_h - n_v - 1)
    return ("left", index - 2 * n_h - n_v - 1)


# --- edges and arcs -------------------------------------------------------
#
# Edges carry the arc endpoints.  ('h', r, c) is the edge above tile (r, c),
# i.e. between rows r-1 and r; ('v', r, c) is the edge left of tile (r, c).
# On the open patch r runs 1..n_v+1 ('h') and c runs 1..n_h+1 ('v'); on the
# torus both wrap.


def _tile_edges(dims: Dims, r: int, c: int):
    n_h, n_v = dims.n_h, dims.n_v
    if dims.topology == TORUS:
        up = ("h", r, c)
        down = ("h", r % n_v + 1, c)
        left = ("v", r, c)
        right = ("v", r, c % n_h + 1)
    else:
        up = ("h", r, c)
        down = ("h", r + 1, c)
        left = ("v", r, c)
        right = ("v", r, c + 1)
    return up, down, left, right


def _tile_arcs(dims: Dims, r: int, c: int, t: int):
    up, down, left, right = _tile_edges(dims, r, c)
    if t == 0:
        return ((up, left), (down, right))
    return ((up, right), (down, left))


def _boundary_edge(dims: Dims, index: int):
    side, off = boundary_side_offset(dims, index)
    n_h, n_v = dims.n_h, dims.n_v
    if side == "top":
        return ("h", 1, 1 + off)
    if side == "right":
        return ("v", 1 + off, n_h + 1)
    if side == "bottom":
        return ("h", n_v + 1, n_h - off)
    return ("v", n_v - off, 1)


def _edge_midpoint(dims: Dims, edge, r: int, c: int):
    """Doubled (x, y) midpoint of ``edge`` seen from tile (r, c), unwrapped.

    Used to accumulate torus windings; (r, c) fixes which periodic image the
    edge belongs to.  y grows downward, x rightward.
    """
    kind = edge[0]
    up, down, left, right = _tile_edges(dims, r, c)
    if edge == up:
        return (2 * c - 1, 2 * (r - 1))
    if edge == down:
        return (2 * c - 1, 2 * r)
    if edge == left:
        return (2 * (c - 1), 2 * r - 1)
    if edge == right:
        return (2 * c, 2 * r - 1)
    raise ValueError(f"edge {edge} does not touch tile ({r},{c})")


def _build_adjacency(pattern: LoopPattern):
    """edge -> list of (other_edge, tile (r, c)) via the tile arcs."""
    dims = pattern.dims
    adj: dict = {}
    for r in range(1, dims.n_v + 1):
        for c in range(1, dims.n_h + 1):
            for (p, q) in _tile_arcs(dims, r, c, pattern.tiles[r - 1][c - 1]):
                adj.setdefault(p, []).append((q, (r, c)))
                adj.setdefault(q, []).append((p, (r, c)))
    return adj


def trace_loops(pattern: LoopPattern) -> LoopDecomposition:
    """Decompose the pattern into open paths and closed loops.

    Open paths are reported as (start, end, trail) with start < end and
    sorted by start; closed loops as edge trails.  On the torus the winding
    (w_h, w_v) of every closed loop is recorded (sign is that of the
    traversal, so only +-(w_h, w_v) is meaningful).
    """
    dims = pattern.dims
    adj = _build_adjacency(pattern)
    visited_arcs = set()

    def walk(start_edge):
        """Walk until returning to start (loop) or hitting a boundary edge."""
        trail = [start_edge]
        cur = start_edge
        prev = None
        disp = (0, 0)
        while True:
            advanced = False
            for (q, tile) in adj.get(cur, []):
                key = frozenset((cur, q)), tile
                if key in visited_arcs:
                    continue
                visited_arcs.add(key)
                p_mid = _edge_midpoint(dims, cur, *tile)
                q_mid = _edge_midpoint(dims, q, *tile)
                disp = (disp[0] + q_mid[0] - p_mid[0], disp[1] + q_mid[1] - p_mid[1])
                cur = q
                trail.append(cur)
                advanced = True
                break
            if not advanced:
                return trail, disp

    open_paths = []
    if dims.topology == OPEN:
        bedges = {
            _boundary_edge(dims, i): i for i in range(1, dims.n_boundary + 1)
        }
        done = set()
        for bidx in sorted(bedges.values()):
            if bidx in done:
                continue
            start_edge = _boundary_edge(dims, bidx)
            trail, _ = walk(start_edge)
            end_idx = bedges[trail[-1]]
            done.add(bidx)
            done.add(end_idx)
            a, b = min(bidx, end_idx), max(bidx, end_idx)
            open_paths.append((a, b, tuple(trail if a == bidx else trail[::-1])))
        open_paths.sort()

    # closed loops: arcs not yet visited
    closed = []
    windings = []
    for edge in sorted(adj):
        for (q, tile) in adj[edge]:
            key = frozenset((edge, q)), tile
            if key not in visited_arcs:
                trail, disp = walk(edge)
                assert trail[0] == trail[-1], "closed walk must return"
                closed.append(tuple(trail[:-1]))
                if dims.topology == TORUS:
                    wh, rem_h = divmod(disp[0], 2 * dims.n_h)
                    wv, rem_v = divmod(disp[1], 2 * dims.n_v)
                    assert rem_h == 0 and rem_v == 0
                    windings.append((wh, wv))
    return LoopDecomposition(tuple(open_paths), tuple(closed), tuple(windings))


def loop_stats(pattern: LoopPattern) -> LoopStats:
    dec = trace_loops(pattern)
    return LoopStats(n_closed=len(dec.closed_loops), n_zero_tiles=pattern.n_zero_tiles())


def connectivity_of(pattern: LoopPattern):
    """Boundary pairing read off the open paths (open patch only)."""
    if pattern.dims.topology != OPEN:
        raise ValueError("connectivity patterns require an open patch")
    dec = trace_loops(pattern)
    return tuple((a, b) for (a, b, _) in dec.open_paths)


def enumerate_patterns(dims: Dims) -> Iterator[LoopPattern]:
    """All 2^(n_h*n_v) patterns in lexicographic tile order."""
    bits = dims.n_sites
    if bits > max_enumeration_bits():
        raise ValueError(
            f"{bits} tiles exceeds the enumeration cap of {max_enumeration_bits()} bits"
        )
    for idx in range(1 << bits):
        yield pattern_from_index(dims, idx)


def closed_loop_counts(dims: Dims) -> list:
    """n_closed for every pattern index; cached per dims.

    The torus state amplitudes, the random-cluster checks and the Schmidt
    oracle all need this table, so compute it once.
    """
    key = (dims.n_h, dims.n_v, dims.topology)
    if key not in _LOOP_COUNT_CACHE:
        _LOOP_COUNT_CACHE[key] = [
            len(trace_loops(p).closed_loops) for p in enumerate_patterns(dims)
        ]
    return _LOOP_COUNT_CACHE[key]


_LOOP_COUNT_CACHE: dict = {}


# --- text / JSON codecs ---------------------------------------------------


def encode_pattern(pattern: LoopPattern) -> str:
    return "\n".join("".join(str(t) for t in row) for row in pattern.tiles)


def decode_pattern(text: str, topology: str = OPEN) -> LoopPattern:
    rows = text.strip().split("\n")
    if not rows or not rows[0]:
        raise ValueError("empty pattern text")
    width = len(rows[0])
    tiles = []
    for row in rows:
        if len(row) != width:
            raise ValueError("ragged pattern text")
        if any(ch not in "01" for ch in row):
            raise ValueError(f"invalid tile characters in {row!r}")
        tiles.append(tuple(int(ch) for ch in row))
    dims = Dims(n_h=width, n_v=len(rows), topology=topology)
    return LoopPattern(dims, tuple(tiles))


def pattern_to_json(pattern: LoopPattern) -> dict:
    return {
        "n_h": pattern.dims.n_h,
        "n_v": pattern.dims.n_v,
        "topology": pattern.dims.topology,
        "rows": ["".join(str(t) for t in row) for row in pattern.tiles],
    }


def pattern_from_json(obj: dict) -> LoopPattern:
    text = "\n".join(obj["rows"])
    pat = decode_pattern(text, topology=obj.get("topology", OPEN))
    if pat.dims.n_h != obj["n_h"] or pat.dims.n_v != obj["n_v"]:
        raise ValueError("JSON dims do not match rows")
    return pat
