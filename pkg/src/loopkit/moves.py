"""Surgery-move dynamics on loop patterns.

The parent Hamiltonian's plaquette term couples the bubble window B to the
four tadpole windows E1..E4 (ground-state weights 2:1:1:1:1); every other
2x2 window is inert.  Boundary dominoes of the gapped Hamiltonian couple
three of the four domino states on each side.  This module classifies
windows, generates bulk and boundary moves, checks ergodicity of the move
graphs, lists the isolated torus configurations, and assigns torus winding
sectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from typing import Iterator

from .lattice import (
    OPEN,
    TORUS,
    Dims,
    LoopPattern,
    enumerate_patterns,
    connectivity_of,
    pattern_from_index,
    trace_loops,
)

# 2x2 window states keyed as (top-left, top-right, bottom-left, bottom-right).
# B and the tadpoles E1..E4 follow the in-text matrix identifications; the
# bubble-free states O1..O11 follow the display order of the shorthand list.
_WINDOW_CLASSES = {
    (0, 1, 1, 0): "B",
    (0, 0, 1, 0): "E1",
    (0, 1, 0, 0): "E2",
    (1, 1, 1, 0): "E3",
    (0, 1, 1, 1): "E4",
    (1, 0, 0, 1): "O1",
    (1, 0, 0, 0): "O2",
    (1, 0, 1, 1): "O3",
    (1, 1, 0, 1): "O4",
    (0, 0, 0, 1): "O5",
    (0, 1, 0, 1): "O6",
    (1, 0, 1, 0): "O7",
    (0, 0, 1, 1): "O8",
    (1, 1, 0, 0): "O9",
    (0, 0, 0, 0): "O10",
    (1, 1, 1, 1): "O11",
}

MOVER_CLASSES = ("B", "E1", "E2", "E3", "E4")
_MOVER_WINDOWS = {name: w for w, name in _WINDOW_CLASSES.items() if name in MOVER_CLASSES}
MOVE_WEIGHT = {"B": 2, "E1": 1, "E2": 1, "E3": 1, "E4": 1}

# Boundary-domino orbits per side, derived numerically from the kernel of the
# gapped boundary term h' (see quantum.boundary_term and the test suite):
# the kernel is spanned by one product state (the fixed domino) and one
# weight-(1,1,2) superposition of the remaining three states (the orbit).
# Dominoes read left->right on horizontal sides and top->bottom on vertical
# sides.  The weight-2 member is listed last.
BOUNDARY_ORBITS = {
    "top": ((0, 0), (1, 1), (1, 0)),
    "bottom": ((0, 0), (1, 1), (0, 1)),
    "left": ((0, 0), (1, 1), (1, 0)),
    "right": ((0, 0), (1, 1), (0, 1)),
}
BOUNDARY_FIXED = {
    "top": (0, 1),
    "bottom": (1, 0),
    "left": (0, 1),
    "right": (1, 0),
}
BOUNDARY_WEIGHT = {side: {orbit[0]: 1, orbit[1]: 1, orbit[2]: 2} for side, orbit in BOUNDARY_ORBITS.items()}


def classify_plaquette(window) -> str:
    """Class name for a 2x2 window given as (tl, tr, bl, br)."""
    return _WINDOW_CLASSES[tuple(window)]


def _window_at(pattern: LoopPattern, r: int, c: int):
    return (
        pattern.tile(r, c),
        pattern.tile(r, c + 1),
        pattern.tile(r + 1, c),
        pattern.tile(r + 1, c + 1),
    )


def window_positions(dims: Dims):
    if dims.topology == TORUS:
        return [(r, c) for r in range(1, dims.n_v + 1) for c in range(1, dims.n_h + 1)]
    return [(r, c) for r in range(1, dims.n_v) for c in range(1, dims.n_h)]


def _set_window(pattern: LoopPattern, r: int, c: int, window) -> LoopPattern:
    dims = pattern.dims
    rows = [list(row) for row in pattern.tiles]

    def put(rr, cc, val):
        if dims.topology == TORUS:
            rr = (rr - 1) % dims.n_v + 1
            cc = (cc - 1) % dims.n_h + 1
        rows[rr - 1][cc - 1] = val

    put(r, c, window[0])
    put(r, c + 1, window[1])
    put(r + 1, c, window[2])
    put(r + 1, c + 1, window[3])
    return LoopPattern(dims, tuple(tuple(row) for row in rows))


def bulk_neighbors(pattern: LoopPattern):
    """All single-window surgery moves: ((r, c), new_pattern, weight).

    The weight metadata is the target class's ground-state amplitude factor
    (B carries 2, tadpoles 1) for lambda = 1.
    """
    out = []
    for (r, c) in window_positions(pattern.dims):
        w = _window_at(pattern, r, c)
        name = _WINDOW_CLASSES[w]
        if name not in MOVER_CLASSES:
            continue
        for other, target in _MOVER_WINDOWS.items():
            if other == name:
                continue
            out.append(((r, c), _set_window(pattern, r, c, target), MOVE_WEIGHT[other]))
    return out


def boundary_dominoes(dims: Dims):
    """Domino positions of the gapped boundary terms: (side, (r1,c1), (r2,c2)).

    Horizontal sides pair columns (2n-1, 2n) on rows 1 and n_v; vertical
    sides pair rows (2n-1, 2n) on columns 1 and n_h.
    """
    if dims.topology != OPEN:
        raise ValueError("boundary dominoes require an open patch")
    if dims.n_h % 2 or dims.n_v % 2:
        raise ValueError("boundary dominoes require even n_h and n_v")
    out = []
    for n in range(1, dims.n_h // 2 + 1):
        out.append(("top", (1, 2 * n - 1), (1, 2 * n)))
        out.append(("bottom", (dims.n_v, 2 * n - 1), (dims.n_v, 2 * n)))
    for n in range(1, dims.n_v // 2 + 1):
        out.append(("left", (2 * n - 1, 1), (2 * n, 1)))
        out.append(("right", (2 * n - 1, dims.n_h), (2 * n, dims.n_h)))
    return out


def boundary_neighbors(pattern: LoopPattern):
    """Boundary surgery moves: ((side, pos1, pos2), new_pattern, weight)."""
    dims = pattern.dims
    out = []
    for (side, (r1, c1), (r2, c2)) in boundary_dominoes(dims):
        state = (pattern.tile(r1, c1), pattern.tile(r2, c2))
        orbit = BOUNDARY_ORBITS[side]
        if state not in orbit:
            continue
        for other in orbit:
            if other == state:
                continue
            new = pattern.with_tile(r1, c1, other[0]).with_tile(r2, c2, other[1])
            out.append(((side, (r1, c1), (r2, c2)), new, BOUNDARY_WEIGHT[side][other]))
    return out


# --- ergodicity checks -----------------------------------------------------


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb
            return True
        return False


def class_graph_connected(p, dims: Dims) -> bool:
    """Is the bulk-move graph connected on the connectivity class of p?"""
    from .matchings import ForbiddenMatchingError, is_allowed, violated_cut

    if not is_allowed(p, dims):
        raise ForbiddenMatchingError(
            "class graph undefined for a forbidden matching",
            witness=violated_cut(p, dims),
        )
    members = [
        pat.index for pat in enumerate_patterns(dims) if connectivity_of(pat) == p.pairs
    ]
    if len(members) <= 1:
        return True
    pos = {idx: i for i, idx in enumerate(members)}
    uf = _UnionFind(len(members))
    for idx in members:
        pat = pattern_from_index(dims, idx)
        for (_, nb, _) in bulk_neighbors(pat):
            j = pos.get(nb.index)
            if j is not None:
                uf.union(pos[idx], j)
    root = uf.find(0)
    return all(uf.find(i) == root for i in range(len(members)))


def full_graph_connected(dims: Dims) -> bool:
    """Is the combined bulk+boundary move graph connected on all patterns?"""
    n = dims.n_sites
    uf = _UnionFind(1 << n)
    for pat in enumerate_patterns(dims):
        idx = pat.index
        for (_, nb, _) in bulk_neighbors(pat):
            uf.union(idx, nb.index)
        if dims.topology == OPEN:
            for (_, nb, _) in boundary_neighbors(pat):
                uf.union(idx, nb.index)
    root = uf.find(0)
    return all(uf.find(i) == root for i in range(1 << n))


def class_sizes(dims: Dims) -> dict:
    """Connectivity pattern -> number of compatible loop patterns."""
    sizes: dict = {}
    for pat in enumerate_patterns(dims):
        key = connectivity_of(pat)
        sizes[key] = sizes.get(key, 0) + 1
    return sizes


# --- isolated torus states and winding sectors ------------------------------


def isolated_states(dims: Dims) -> list:
    """Row- and column-stacked product patterns with no mover window.

    There are 2^{n_h} + 2^{n_v} - 2 of them (the two constant patterns are
    both row- and column-stacked).
    """
    if dims.topology != TORUS:
        raise ValueError("isolated states live on the torus")
    seen = {}
    for b in range(1 << dims.n_h):
        bits = [(b >> c) & 1 for c in range(dims.n_h)]
        rows = tuple(tuple(bits) for _ in range(dims.n_v))
        pat = LoopPattern(dims, rows)
        seen[pat.index] = pat
    for b in range(1 << dims.n_v):
        bits = [(b >> r) & 1 for r in range(dims.n_v)]
        rows = tuple(tuple(bits[r] for _ in range(dims.n_h)) for r in range(dims.n_v))
        pat = LoopPattern(dims, rows)
        seen[pat.index] = pat
    out = [seen[k] for k in sorted(seen)]
    for pat in out:
        if bulk_neighbors(pat):
            raise AssertionError("isolated state has a mover window")
    return out


@dataclass(frozen=True)
class WindingSector:
    j: int  # horizontal component, j >= 0 after normalization
    k: int

    def as_tuple(self):
        return (self.j, self.k)


def g_of(j: int, k: int) -> int:
    """gcd convention: g(0,0)=1, g(j,0)=|j|, g(0,k)=|k|, else gcd."""
    if j == 0 and k == 0:
        return 1
    if k == 0:
        return abs(j)
    if j == 0:
        return abs(k)
    return gcd(abs(j), abs(k))


def winding_sector(pattern: LoopPattern) -> WindingSector:
    """Torus winding sector (j, k), rescaled by half the number of
    non-trivial loops; (0, 0) when all loops are contractible.

    j counts rightward wraps and k upward wraps (the sign pair is fixed by
    j >= 0, and k >= 0 when j = 0); with this orientation the sector couples
    to the string angles as cos(pi j l / (n_v+1) + pi k m / (n_h+1)).
    """
    if pattern.dims.topology != TORUS:
        raise ValueError("winding sectors require a torus")
    dec = trace_loops(pattern)
    nontrivial = [w for w in dec.windings if w != (0, 0)]
    if not nontrivial:
        return WindingSector(0, 0)
    # all non-trivial loops share the same primitive winding up to sign;
    # trace displacements are (rightward, downward), so flip the second
    def normalize(w):
        wh, wv = w[0], -w[1]
        if wh < 0 or (wh == 0 and wv < 0):
            wh, wv = -wh, -wv
        return (wh, wv)

    prim = {normalize(w) for w in nontrivial}
    if len(prim) != 1:
        raise AssertionError(f"mixed windings {prim} in one pattern")
    (wh, wv) = prim.pop()
    half = len(nontrivial) // 2
    if len(nontrivial) % 2:
        raise AssertionError("odd number of non-trivial loops")
    return WindingSector(wh * half, wv * half)


def sector_histogram(dims: Dims) -> dict:
    """(j, k) -> number of patterns in that winding sector."""
    out: dict = {}
    for pat in enumerate_patterns(dims):
        key = winding_sector(pat).as_tuple()
        out[key] = out.get(key, 0) + 1
    return out
