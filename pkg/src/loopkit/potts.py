"""Random-cluster mapping: net lattice, bond-loop bijection, exact sums, and
a Swendsen-Wang sampler.

Potts spins live on one parity class of tile corners of an even torus (the
net lattice); each tile contributes the edge joining its two same-parity
corners, so bond configurations are in bijection with loop patterns.  At the
self-dual coupling v = sqrt(Q) the random-cluster weights match the squared
loop-state amplitudes, tying classical link observables to the staggered-sz
expectations of the torus state at lambda = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import (
    TORUS,
    Dims,
    LoopPattern,
    closed_loop_counts,
    pattern_from_index,
)


@dataclass(frozen=True)
class PottsParams:
    q: int = 16
    beta: float | None = None  # None -> self-dual log(1 + sqrt(Q))

    def __post_init__(self):
        if self.q < 2:
            raise ValueError("Q must be >= 2")

    @property
    def beta_value(self) -> float:
        if self.beta is None:
            return math.log(1.0 + math.sqrt(self.q))
        return self.beta

    @property
    def v_value(self) -> float:
        return math.exp(self.beta_value) - 1.0

    @property
    def is_self_dual(self) -> bool:
        return self.beta is None or abs(self.v_value - math.sqrt(self.q)) < 1e-12


@dataclass(frozen=True)
class NetLattice:
    dims: Dims
    vertices: tuple  # (x, y) corner coordinates, one parity class
    edges: tuple  # per tile, (vertex_index_a, vertex_index_b)
    tile_of_edge: tuple  # per edge, the (r, c) tile

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def net_lattice(dims: Dims) -> NetLattice:
    """Spins on the even-parity tile corners; one edge per tile (its
    same-parity diagonal)."""
    if dims.topology != TORUS or dims.n_h % 2 or dims.n_v % 2:
        raise ValueError("the net lattice needs an even torus")
    verts = [
        (x, y)
        for y in range(dims.n_v)
        for x in range(dims.n_h)
        if (x + y) % 2 == 0
    ]
    vid = {v: i for i, v in enumerate(verts)}
    edges = []
    tiles = []
    for r in range(1, dims.n_v + 1):
        for c in range(1, dims.n_h + 1):
            if (r + c) % 2 == 0:
                a = ((c - 1) % dims.n_h, (r - 1) % dims.n_v)
                b = (c % dims.n_h, r % dims.n_v)
            else:
                a = (c % dims.n_h, (r - 1) % dims.n_v)
                b = ((c - 1) % dims.n_h, r % dims.n_v)
            edges.append((vid[a], vid[b]))
            tiles.append((r, c))
    return NetLattice(dims, tuple(verts), tuple(edges), tuple(tiles))


# --- the bond <-> loop-pattern bijection -------------------------------------


def tile_parity(r: int, c: int) -> int:
    """0 on the even sublattice (top-left tile (1,1) is even)."""
    return (r + c) % 2


def bonds_to_pattern(net: NetLattice, bonds: int) -> LoopPattern:
    """Loop pattern of a bond configuration (bit e = edge e occupied).

    Convention (fixed by the exhaustive Euler calibration): an even-sublattice
    tile carries tile 0 exactly when its bond is present; an odd tile carries
    tile 1 when its bond is present.
    """
    dims = net.dims
    rows = [[0] * dims.n_h for _ in range(dims.n_v)]
    for e, (r, c) in enumerate(net.tile_of_edge):
        present = (bonds >> e) & 1
        if tile_parity(r, c) == 0:
            rows[r - 1][c - 1] = 0 if present else 1
        else:
            rows[r - 1][c - 1] = 1 if present else 0
    return LoopPattern(dims, tuple(tuple(row) for row in rows))


def pattern_to_bonds(net: NetLattice, pattern: LoopPattern) -> int:
    bonds = 0
    for e, (r, c) in enumerate(net.tile_of_edge):
        t = pattern.tiles[r - 1][c - 1]
        present = (t == 0) if tile_parity(r, c) == 0 else (t == 1)
        if present:
            bonds |= 1 << e
    return bonds


def count_components(net: NetLattice, bonds: int) -> int:
    parent = list(range(net.n_vertices))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for e, (a, b) in enumerate(net.edges):
        if (bonds >> e) & 1:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    return len({find(i) for i in range(net.n_vertices)})


# --- exact enumeration checks -------------------------------------------------


def euler_partition_check(dims: Dims, q: int = 16) -> dict:
    """Exhaustive bijection, Euler-relation and partition-identity checks.

    For every bond configuration G': n_{L(G')} = n(G') + c(G') with
    c = b - V + n, and (exactly, in integers, when sqrt(Q) is integral)
    sum_G' Q^n v^b = sqrt(Q)^V sum_L sqrt(Q)^{n_L} at the self-dual point.
    """
    net = net_lattice(dims)
    root_q = math.isqrt(q)
    if root_q * root_q != q:
        raise ValueError("exact partition identity needs a square Q")
    loops = closed_loop_counts(dims)
    n_edges = net.n_edges
    seen = set()
    euler_failures = 0
    lhs = 0
    rhs_loopsum = 0
    for bonds in range(1 << n_edges):
        pat = bonds_to_pattern(net, bonds)
        idx = pat.index
        seen.add(idx)
        n = count_components(net, bonds)
        b = bin(bonds).count("1")
        c = b - net.n_vertices + n
        n_l = loops[idx]
        if n_l != n + c:
            euler_failures += 1
        lhs += q**n * root_q**b
        rhs_loopsum += root_q ** loops[idx]
    bijective = len(seen) == (1 << n_edges)
    rhs = root_q**net.n_vertices * rhs_loopsum
    return {
        "bijective": bijective,
        "euler_failures": euler_failures,
        "partition_lhs": lhs,
        "partition_rhs": rhs,
        "partition_identity": lhs == rhs,
        "loop_sum": rhs_loopsum,
        "n_vertices": net.n_vertices,
    }


def link_observable(q: int, equal: bool) -> Fraction:
    return Fraction(1) if equal else Fraction(1 + q, 1 - q)


def exact_fk_expectation(dims: Dims, q: int, x, y=None) -> Fraction:
    """Exact <O_x> (or <O_x O_y>) at the self-dual point by enumeration.

    O is the link observable; at the self-dual point its expectation reduces
    to the +-1 bond-indicator weighted by sqrt(Q)^{n_L}.
    """
    net = net_lattice(dims)
    root_q = math.isqrt(q)
    if root_q * root_q != q:
        raise ValueError("exact expectations need a square Q")
    loops = closed_loop_counts(dims)
    tile_index = {t: e for e, t in enumerate(net.tile_of_edge)}
    ex = tile_index[tuple(x)]
    ey = tile_index[tuple(y)] if y is not None else None
    num = 0
    den = 0
    for bonds in range(1 << net.n_edges):
        pat = bonds_to_pattern(net, bonds)
        n = count_components(net, bonds)
        b = bin(bonds).count("1")
        w = q**n * root_q**b
        o = 1 if (bonds >> ex) & 1 else -1
        if ey is not None:
            o *= 1 if (bonds >> ey) & 1 else -1
        num += w * o
        den += w
    return Fraction(num, den)


def exact_fk_expectation_cluster(dims: Dims, q: int, x) -> Fraction:
    """Same expectation via the conditional-cluster rule: +1 when the two
    spins adjacent to x sit in one cluster, else -1."""
    net = net_lattice(dims)
    root_q = math.isqrt(q)
    tile_index = {t: e for e, t in enumerate(net.tile_of_edge)}
    ex = tile_index[tuple(x)]
    va, vb = net.edges[ex]
    num = 0
    den = 0
    for bonds in range(1 << net.n_edges):
        n = count_components(net, bonds)
        b = bin(bonds).count("1")
        w = q**n * root_q**b
        parent = list(range(net.n_vertices))

        def find(z):
            while parent[z] != z:
                parent[z] = parent[parent[z]]
                z = parent[z]
            return z

        for e, (p1, p2) in enumerate(net.edges):
            if (bonds >> e) & 1:
                r1, r2 = find(p1), find(p2)
                if r1 != r2:
                    parent[r1] = r2
        o = 1 if find(va) == find(vb) else -1
        num += w * o
        den += w
    return Fraction(num, den)


# --- Swendsen-Wang sampling -----------------------------------------------------


@dataclass
class ChainSummary:
    dims: Dims
    params: PottsParams
    sweeps: int
    burn_in: int
    seed: int
    mean_o: dict  # tile -> mean of O_x
    stderr_o: dict
    mean_oo: dict  # (tile, tile) -> mean of O_x O_y
    stderr_oo: dict


N_BATCHES = 32


def _batch_stats(values: np.ndarray):
    n = len(values)
    k = max(n // N_BATCHES, 1)
    usable = (n // k) * k
    batches = values[:usable].reshape(-1, k).mean(axis=1)
    mean = float(values.mean())
    if len(batches) > 1:
        err = float(batches.std(ddof=1) / math.sqrt(len(batches)))
    else:
        err = float("nan")
    return mean, err


def sw_sample(
    dims: Dims,
    params: PottsParams,
    sweeps: int,
    burn_in: int = 0,
    seed: int = 0,
    observables=None,
    pairs=None,
) -> ChainSummary:
    """Swendsen-Wang chain for the Q-state model on the net lattice.

    Every sweep activates bonds on equal-spin edges with probability
    1 - e^{-beta}, then recolors each cluster uniformly.  Estimates carry
    32-batch standard errors and are reproducible per seed.
    """
    net = net_lattice(dims)
    rng = np.random.default_rng(seed)
    q, beta = params.q, params.beta_value
    p_bond = 1.0 - math.exp(-beta)
    spins = rng.integers(0, q, size=net.n_vertices)
    if observables is None:
        observables = [net.tile_of_edge[0]]
    observables = [tuple(t) for t in observables]
    if pairs is None:
        pairs = []
    pairs = [(tuple(a), tuple(b)) for (a, b) in pairs]
    tile_index = {t: e for e, t in enumerate(net.tile_of_edge)}
    o_bad = (1 + q) / (1 - q)

    edges_a = np.array([a for a, _ in net.edges])
    edges_b = np.array([b for _, b in net.edges])

    samples = {t: [] for t in observables}
    pair_samples = {p: [] for p in pairs}

    for sweep in range(burn_in + sweeps):
        equal = spins[edges_a] == spins[edges_b]
        active = equal & (rng.random(net.n_edges) < p_bond)
        parent = np.arange(net.n_vertices)

        def find(z):
            while parent[z] != z:
                parent[z] = parent[parent[z]]
                z = parent[z]
            return z

        for e in np.nonzero(active)[0]:
            ra, rb = find(edges_a[e]), find(edges_b[e])
            if ra != rb:
                parent[ra] = rb
        roots = np.array([find(i) for i in range(net.n_vertices)])
        colors = rng.integers(0, q, size=net.n_vertices)
        spins = colors[roots]
        if sweep < burn_in:
            continue

        def o_val(tile):
            e = tile_index[tile]
            return 1.0 if spins[edges_a[e]] == spins[edges_b[e]] else o_bad

        for t in observables:
            samples[t].append(o_val(t))
        for (ta, tb) in pairs:
            pair_samples[(ta, tb)].append(o_val(ta) * o_val(tb))

    mean_o, err_o = {}, {}
    for t, vals in samples.items():
        mean_o[t], err_o[t] = _batch_stats(np.array(vals))
    mean_oo, err_oo = {}, {}
    for p, vals in pair_samples.items():
        mean_oo[p], err_oo[p] = _batch_stats(np.array(vals))
    return ChainSummary(
        dims, params, sweeps, burn_in, seed, mean_o, err_o, mean_oo, err_oo
    )


@dataclass
class CorrelatorEstimate:
    distances: list
    means: list
    errors: list
    xi: float
    slope: float
    slope_err: float
    n_sweeps: int


def correlation_estimate(
    dims: Dims, params: PottsParams, sweeps: int, seed: int = 0
) -> CorrelatorEstimate:
    """Connected correlator along a row of tiles, with a log-linear fit of
    the decay window and the implied correlation length."""
    base = (1, 1)
    max_d = dims.n_h // 2
    others = [(1, 1 + d) for d in range(1, max_d + 1)]
    summary = sw_sample(
        dims,
        params,
        sweeps,
        burn_in=max(sweeps // 10, 100),
        seed=seed,
        observables=[base] + others,
        pairs=[(base, o) for o in others],
    )
    distances, means, errors = [], [], []
    for d, o in enumerate(others, start=1):
        conn = summary.mean_oo[(base, o)] - summary.mean_o[base] * summary.mean_o[o]
        var = (
            summary.stderr_oo[(base, o)] ** 2
            + (summary.mean_o[o] * summary.stderr_o[base]) ** 2
            + (summary.mean_o[base] * summary.stderr_o[o]) ** 2
        )
        distances.append(d)
        means.append(conn)
        errors.append(math.sqrt(var))
    # least-squares slope of log|C| over the decaying window
    xs, ys = [], []
    for d, c in zip(distances, means):
        if abs(c) > 1e-12:
            xs.append(d)
            ys.append(math.log(abs(c)))
    if len(xs) >= 2:
        coeffs, cov = np.polyfit(xs, ys, 1, cov=True)
        slope = float(coeffs[0])
        slope_err = float(math.sqrt(max(cov[0][0], 0.0)))
    else:
        slope, slope_err = float("nan"), float("nan")
    xi = -1.0 / slope if slope < 0 else float("inf")
    return CorrelatorEstimate(distances, means, errors, xi, slope, slope_err, sweeps)


def beta_zero_closed_form(q: int) -> float:
    """<O_x> for independent spins: 1/Q + (1 - 1/Q)(1+Q)/(1-Q) = -1."""
    return 1.0 / q + (1.0 - 1.0 / q) * (1 + q) / (1 - q)
