"""Non-crossing matchings of the patch boundary and their combinatorics.

Covers: enumeration, the flow criterion for realizability, the two mountain
path bijections and bounded-height path counting (three exact methods), the
allowed-matching counters (brute force, cut-step DP, and the printed closed
forms kept behind a discrepancy report), canonical loop patterns, and the
filling of a torus exterior around a rectangular hole.

Geometry note: flow computations and the canonical construction use the
half-integer edge-midpoint coordinates with x growing rightward from the left
edge (x = 0) and y growing DOWNWARD from the top edge (y = 0).  "Upper"
tuples therefore have small y-sum.  Coordinates are doubled internally so all
arithmetic stays integral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Sequence

from .lattice import (
    OPEN,
    TORUS,
    Dims,
    LoopPattern,
    connectivity_of,
    trace_loops,
)

MAX_MATCHING_N = 16
MAX_BRUTE_N = 14


class ForbiddenMatchingError(ValueError):
    """Raised when an operation requires an allowed matching.

    Carries a witness (cut index, orientation, flow value) of the violated
    cut when available.
    """

    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


@dataclass(frozen=True)
class ConnectivityPattern:
    pairs: tuple  # sorted tuple of (a, b) with a < b, disjoint over 1..2N

    def __post_init__(self):
        pts = [p for pair in self.pairs for p in pair]
        n = len(self.pairs)
        if sorted(pts) != list(range(1, 2 * n + 1)):
            raise ValueError("pairs must form a perfect matching of 1..2N")
        for (a, b) in self.pairs:
            if a >= b:
                raise ValueError("each pair must be (small, large)")
        if not _noncrossing(self.pairs):
            raise ValueError("matching is crossing")

    @property
    def n(self) -> int:
        return len(self.pairs)

    def partner(self, i: int) -> int:
        for (a, b) in self.pairs:
            if a == i:
                return b
            if b == i:
                return a
        raise KeyError(i)

    def __str__(self) -> str:
        return ",".join(f"{a}-{b}" for (a, b) in self.pairs)


def matching(pairs) -> ConnectivityPattern:
    """Normalize an iterable of 2-element pairs into a ConnectivityPattern."""
    norm = tuple(sorted((min(a, b), max(a, b)) for (a, b) in pairs))
    return ConnectivityPattern(norm)


def parse_matching(text: str) -> ConnectivityPattern:
    pairs = []
    for chunk in text.split(","):
        a, b = chunk.strip().split("-")
        pairs.append((int(a), int(b)))
    return matching(pairs)


def _noncrossing(pairs) -> bool:
    for i, (a, b) in enumerate(pairs):
        for (c, d) in pairs[i + 1 :]:
            if (a < c < b) != (a < d < b):
                return False
    return True


def enumerate_matchings(n: int) -> Iterator[ConnectivityPattern]:
    """All C_n non-crossing perfect matchings of 1..2n."""
    if n > MAX_MATCHING_N:
        raise ValueError(f"n={n} exceeds the Catalan guard {MAX_MATCHING_N}")

    def rec(points):
        if not points:
            yield []
            return
        a = points[0]
        for k in range(1, len(points), 2):
            b = points[k]
            for left in rec(points[1:k]):
                for right in rec(points[k + 1 :]):
                    yield [(a, b)] + left + right

    for raw in rec(list(range(1, 2 * n + 1))):
        yield matching(raw)


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


# --- boundary coordinates and flow ---------------------------------------


@dataclass(frozen=True)
class BoundaryPoint:
    index: int
    x2: int  # doubled x coordinate, 0..2*n_h
    y2: int  # doubled y coordinate, 0..2*n_v, y grows downward

    @property
    def coord(self):
        return (self.x2 / 2, self.y2 / 2)


def boundary_point(dims: Dims, index: int) -> BoundaryPoint:
    n_h, n_v = dims.n_h, dims.n_v
    if not 1 <= index <= 2 * (n_h + n_v):
        raise ValueError("boundary index out of range")
    if index <= n_h:  # top, left->right
        return BoundaryPoint(index, 2 * index - 1, 0)
    if index <= n_h + n_v:  # right, top->bottom
        r = index - n_h
        return BoundaryPoint(index, 2 * n_h, 2 * r - 1)
    if index <= 2 * n_h + n_v:  # bottom, right->left
        c = 2 * n_h + n_v + 1 - index
        return BoundaryPoint(index, 2 * c - 1, 2 * n_v)
    r = 2 * (n_h + n_v) + 1 - index  # left, bottom->top
    return BoundaryPoint(index, 0, 2 * r - 1)


def tuple_class(dims: Dims, a: int, b: int) -> str:
    """'horizontal', 'vertical' or 'diagonal' by |dx| vs |dy|."""
    pa, pb = boundary_point(dims, a), boundary_point(dims, b)
    dx, dy = abs(pb.x2 - pa.x2), abs(pb.y2 - pa.y2)
    if dx > dy:
        return "horizontal"
    if dx < dy:
        return "vertical"
    return "diagonal"


def flow(p: ConnectivityPattern, dims: Dims, cut_index: int, orientation: str) -> int:
    """Number of horizontal (vertical) tuples through vertical (horizontal) cut.

    Vertical cut i is the line x = i, i in 1..n_h-1; horizontal cut j is the
    line y = j (counted from the top), j in 1..n_v-1.  Diagonal tuples never
    count.
    """
    if orientation not in ("vertical", "horizontal"):
        raise ValueError("orientation must be 'vertical' or 'horizontal'")
    limit = dims.n_h if orientation == "vertical" else dims.n_v
    if not 1 <= cut_index <= limit - 1:
        raise ValueError(f"cut index {cut_index} out of range")
    cut2 = 2 * cut_index
    count = 0
    for (a, b) in p.pairs:
        cls = tuple_class(dims, a, b)
        pa, pb = boundary_point(dims, a), boundary_point(dims, b)
        if orientation == "vertical":
            if cls == "horizontal" and min(pa.x2, pb.x2) < cut2 < max(pa.x2, pb.x2):
                count += 1
        else:
            if cls == "vertical" and min(pa.y2, pb.y2) < cut2 < max(pa.y2, pb.y2):
                count += 1
    return count


def crossing_count(p: ConnectivityPattern, dims: Dims, cut_index: int, orientation: str) -> int:
    """Tuples of any class whose chord crosses the cut line geometrically."""
    cut2 = 2 * cut_index
    count = 0
    for (a, b) in p.pairs:
        pa, pb = boundary_point(dims, a), boundary_point(dims, b)
        if orientation == "vertical":
            if min(pa.x2, pb.x2) < cut2 < max(pa.x2, pb.x2):
                count += 1
        else:
            if min(pa.y2, pb.y2) < cut2 < max(pa.y2, pb.y2):
                count += 1
    return count


def violated_cut(p: ConnectivityPattern, dims: Dims):
    """First (cut, orientation, flow) exceeding its threshold, or None."""
    for i in range(1, dims.n_h):
        f = flow(p, dims, i, "vertical")
        if f >= dims.n_v + 1:
            return (i, "vertical", f)
    for j in range(1, dims.n_v):
        f = flow(p, dims, j, "horizontal")
        if f >= dims.n_h + 1:
            return (j, "horizontal", f)
    return None


def is_allowed(p: ConnectivityPattern, dims: Dims) -> bool:
    if 2 * p.n != dims.n_boundary:
        raise ValueError("matching size does not fit the patch boundary")
    return violated_cut(p, dims) is None


# --- mountain-path bijections ---------------------------------------------


@dataclass(frozen=True)
class DyckPath:
    steps: tuple  # +-1 entries, balanced, prefix sums >= 0

    def __post_init__(self):
        h = 0
        for s in self.steps:
            if s not in (1, -1):
                raise ValueError("steps must be +-1")
            h += s
            if h < 0:
                raise ValueError("path dips below zero")
        if h != 0:
            raise ValueError("path does not return to zero")

    @property
    def half_length(self) -> int:
        return len(self.steps) // 2

    def heights(self) -> tuple:
        out = [0]
        for s in self.steps:
            out.append(out[-1] + s)
        return tuple(out)

    def max_height(self) -> int:
        return max(self.heights())


def _reading_order_h(dims: Dims) -> list:
    """Bottom-left stub, left side bottom->top, then top[i]/bottom[i+1]
    alternating left->right, then the right side top->bottom."""
    n_h, n_v = dims.n_h, dims.n_v
    top = list(range(1, n_h + 1))
    right = list(range(n_h + 1, n_h + n_v + 1))
    bottom = [2 * n_h + n_v + 1 - c for c in range(1, n_h + 1)]  # by column
    left_bt = list(range(2 * n_h + n_v + 1, 2 * (n_h + n_v) + 1))
    order = [bottom[0]] + left_bt
    for i in range(n_h):
        order.append(top[i])
        if i + 1 < n_h:
            order.append(bottom[i + 1])
    return order + right


def _reading_order_v(dims: Dims) -> list:
    """Top-left stub, top row, then right[j]/left[j+1] alternating downward,
    then the bottom row right->left."""
    n_h, n_v = dims.n_h, dims.n_v
    top = list(range(1, n_h + 1))
    right = list(range(n_h + 1, n_h + n_v + 1))
    bottom_rl = list(range(n_h + n_v + 1, 2 * n_h + n_v + 1))
    left_tb = [2 * (n_h + n_v) + 1 - r for r in range(1, n_v + 1)]
    order = [left_tb[0]] + top
    for j in range(n_v):
        order.append(right[j])
        if j + 1 < n_v:
            order.append(left_tb[j + 1])
    return order + bottom_rl


def reading_order(dims: Dims, direction: str) -> list:
    if direction == "h":
        return _reading_order_h(dims)
    if direction == "v":
        return _reading_order_v(dims)
    raise ValueError("direction must be 'h' or 'v'")


def dyck_map(p: ConnectivityPattern, dims: Dims, direction: str) -> DyckPath:
    order = reading_order(dims, direction)
    partner = {}
    for (a, b) in p.pairs:
        partner[a] = b
        partner[b] = a
    seen = set()
    steps = []
    for pt in order:
        steps.append(-1 if partner[pt] in seen else 1)
        seen.add(pt)
    return DyckPath(tuple(steps))


def dyck_unmap(path: DyckPath, dims: Dims, direction: str) -> ConnectivityPattern:
    """Inverse of :func:`dyck_map`.

    A down-step closes one of the currently open boundary points, but not
    necessarily the last-opened one (the reading orders interleave opposite
    sides of the patch).  The unique preimage is reconstructed by
    backtracking over the open points, pruned by pair parity and by
    non-crossing against the pairs already fixed.
    """
    order = reading_order(dims, direction)
    if len(path.steps) != len(order):
        raise ValueError("path length does not match the boundary size")

    def compatible(a, b, fixed):
        if (max(a, b) - min(a, b)) % 2 == 0:
            return False  # interval between endpoints must have even size
        lo, hi = min(a, b), max(a, b)
        for (c, d) in fixed:
            if (lo < c < hi) != (lo < d < hi):
                return False
        return True

    def solve(k, open_pts, fixed):
        if k == len(order):
            return fixed if not open_pts else None
        pt = order[k]
        if path.steps[k] == 1:
            return solve(k + 1, open_pts + [pt], fixed)
        for i in range(len(open_pts) - 1, -1, -1):
            y = open_pts[i]
            if not compatible(y, pt, fixed):
                continue
            result = solve(
                k + 1, open_pts[:i] + open_pts[i + 1 :], fixed + [(y, pt)]
            )
            if result is not None:
                return result
        return None

    result = solve(0, [], [])
    if result is None:
        raise ValueError("path is not in the image of the matching map")
    return matching(result)


# --- bounded-height path counting (three exact methods) -------------------


def _count_paths_transfer(n: int, hmax: int) -> int:
    """(M^{2n})_{00} for the (hmax+1)-dim 0/1 tridiagonal matrix, exact ints."""
    dim = hmax + 1

    def matmul(a, b):
        return [
            [sum(a[i][k] * b[k][j] for k in range(dim)) for j in range(dim)]
            for i in range(dim)
        ]

    m = [[1 if abs(i - j) == 1 else 0 for j in range(dim)] for i in range(dim)]
    result = [[1 if i == j else 0 for j in range(dim)] for i in range(dim)]
    power = 2 * n
    while power:
        if power & 1:
            result = matmul(result, m)
        m = matmul(m, m)
        power >>= 1
    return result[0][0]


def _binom(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)


def _count_paths_reflection(n: int, hmax: int) -> int:
    """Reflection-principle double sum for walks confined to [0, hmax]."""
    period = hmax + 2
    total = 0
    k = -(2 * n) // period - 2
    while k * period <= 2 * n + period:
        total += _binom(2 * n, n + k * period) - _binom(2 * n, n + k * period + hmax + 1)
        k += 1
    return total


def _count_paths_contfrac(n: int, hmax: int) -> int:
    """Coefficient of z^{2n} in the depth-hmax continued fraction.

    D_0 = 1 and D_h = 1 / (1 - z^2 D_{h-1}); series arithmetic is exact over
    the rationals (coefficients come out integral).
    """
    terms = 2 * n + 1
    series = [Fraction(1)] + [Fraction(0)] * (terms - 1)  # D_0
    for _ in range(hmax):
        #  denom = 1 - z^2 * series
        denom = [Fraction(0)] * terms
        denom[0] = Fraction(1)
        for i in range(2, terms):
            denom[i] = -series[i - 2]
        inv = [Fraction(0)] * terms
        inv[0] = Fraction(1)
        for i in range(1, terms):
            inv[i] = -sum(denom[j] * inv[i - j] for j in range(1, i + 1))
        series = inv
    coeff = series[2 * n]
    assert coeff.denominator == 1
    return int(coeff)


def dyck_height_count(n: int, hmax: int, method: str = "all") -> int:
    """Number of balanced nonnegative paths of half-length n with max height
    <= hmax.  With method='all' the transfer-matrix, reflection and
    continued-fraction routes are computed and must agree exactly."""
    if n < 0 or hmax < 0:
        raise ValueError("n and hmax must be nonnegative")
    if method == "transfer":
        return _count_paths_transfer(n, hmax)
    if method == "reflection":
        return _count_paths_reflection(n, hmax)
    if method == "contfrac":
        return _count_paths_contfrac(n, hmax)
    if method != "all":
        raise ValueError(f"unknown method {method!r}")
    a = _count_paths_transfer(n, hmax)
    b = _count_paths_reflection(n, hmax)
    c = _count_paths_contfrac(n, hmax)
    if not (a == b == c):
        raise AssertionError(f"count methods disagree: {a}, {b}, {c}")
    return a


# --- allowed-matching counting --------------------------------------------


@dataclass(frozen=True)
class CountResult:
    value: int
    strategy: str
    dims: Dims


def _cut_capped_path_count(n: int, caps: dict) -> int:
    """Balanced nonnegative paths of length 2n with height(step) <= caps[step].

    Heights are only constrained at the listed steps; this is the DP that
    mirrors the flow criterion, which bounds chord crossings cut by cut.
    """
    heights = {0: 1}
    for step in range(1, 2 * n + 1):
        nxt: dict = {}
        for h, ways in heights.items():
            for h2 in (h - 1, h + 1):
                if h2 < 0:
                    continue
                nxt[h2] = nxt.get(h2, 0) + ways
        if step in caps:
            cap = caps[step]
            nxt = {h: w for h, w in nxt.items() if h <= cap}
        heights = nxt
    return heights.get(0, 0)


def count_not_vertically_forbidden(dims: Dims) -> int:
    n = dims.n_h + dims.n_v
    caps = {dims.n_v + 2 * i: dims.n_v for i in range(1, dims.n_h)}
    return _cut_capped_path_count(n, caps)


def count_not_horizontally_forbidden(dims: Dims) -> int:
    n = dims.n_h + dims.n_v
    caps = {dims.n_h + 2 * j: dims.n_h for j in range(1, dims.n_v)}
    return _cut_capped_path_count(n, caps)


def count_allowed(dims: Dims, strategy: str = "dp") -> CountResult:
    """Exact number of allowed matchings on the open patch."""
    n = dims.n_h + dims.n_v
    if strategy == "brute":
        if n > MAX_BRUTE_N:
            raise ValueError(f"brute force limited to N <= {MAX_BRUTE_N}")
        value = sum(1 for p in enumerate_matchings(n) if is_allowed(p, dims))
        return CountResult(value, "brute", dims)
    if strategy == "dp":
        value = (
            count_not_vertically_forbidden(dims)
            + count_not_horizontally_forbidden(dims)
            - catalan(n)
        )
        return CountResult(value, "dp", dims)
    if strategy == "paper_closed_forms":
        raise ValueError(
            "the printed closed forms are not trusted as a counter; "
            "use closed_forms_report() for the comparison table"
        )
    raise ValueError(f"unknown strategy {strategy!r}")


# --- printed closed forms, kept for the discrepancy report ----------------


def _printed_trig_sum(nh: int, n: int, sin_power: int) -> float:
    """4^N / (1 + nh/2) * sum_j sin^k(pi j/(nh+2)) cos^{2N}(pi j/(nh+2)).

    The printed line has k = 1; the derivation that precedes it squares the
    eigenvector entries, i.e. k = 2.  Both readings are evaluated.
    """
    total = 0.0
    for j in range(1, nh + 3):
        ang = math.pi * j / (nh + 2)
        total += math.sin(ang) ** sin_power * math.cos(ang) ** (2 * n)
    return 4**n / (1 + nh / 2) * total


def _printed_binomial_sum(nh: int, n: int) -> int:
    """The k >= 1 second-difference binomial sum exactly as printed."""
    total = 0
    period = nh + 2
    k = 1
    while n - k * period + 1 >= 0:
        m = n - k * period
        total += _binom(2 * n, m - 1) - 2 * _binom(2 * n, m) + _binom(2 * n, m + 1)
        k += 1
    return total


@dataclass(frozen=True)
class ClosedFormReport:
    dims: Dims
    rows: tuple  # of dicts, one per direction
    notes: tuple


def closed_forms_report(dims: Dims) -> ClosedFormReport:
    """Evaluate the printed bounded-height expressions next to ground truth.

    Ground truth is the brute/DP count of per-direction unforbidden
    matchings.  The report is generated, never asserted equal.
    """
    n = dims.n_h + dims.n_v
    rows = []
    for direction, nh_bound, dp_value in (
        ("horizontal-unforbidden f(N_h,N_v)", dims.n_h, count_not_horizontally_forbidden(dims)),
        ("vertical-unforbidden f(N_v,N_h)", dims.n_v, count_not_vertically_forbidden(dims)),
    ):
        global_height = dyck_height_count(n, nh_bound)
        rows.append(
            {
                "direction": direction,
                "cut_criterion_dp": dp_value,
                "global_height_paths": global_height,
                "printed_trig_sin1": _printed_trig_sum(nh_bound, n, 1),
                "trig_sin_squared": _printed_trig_sum(nh_bound, n, 2),
                "printed_binomial_k_ge_1": _printed_binomial_sum(nh_bound, n),
                "contfrac_coefficient": dyck_height_count(n, nh_bound, "contfrac"),
            }
        )
    notes = (
        "cut_criterion_dp matches the flow definition and brute force;",
        "global_height_paths bounds the path height everywhere, which is "
        "strictly stronger than bounding it at the cut steps;",
        "printed_trig_sin1 uses sin to the first power as printed and is "
        "generally non-integral; trig_sin_squared is the squared-eigenvector "
        "reading and equals global_height_paths up to roundoff;",
        "printed_binomial_k_ge_1 equals the complement count "
        "C_N - global_height_paths (paths exceeding the height bound);",
        "contfrac_coefficient reads the z^{2N} series coefficient of the "
        "depth-bound continued fraction (the printed derivative form differs "
        "by the factorial normalization).",
    )
    return ClosedFormReport(dims, tuple(rows), notes)


def k_paper(alpha: float) -> float:
    """sqrt(pi)/2 + sqrt(pi)/2 (alpha-1)^{3/2} - 1/sqrt(pi), as printed."""
    return (
        math.sqrt(math.pi) / 2
        + math.sqrt(math.pi) / 2 * (alpha - 1) ** 1.5
        - 1 / math.sqrt(math.pi)
    )


def asymptotic_ratio(alpha: float, n_list: Sequence[int]):
    """Rows of (N, n_h, n_v, allowed*N^{3/2}/4^N) from DP counts.

    alpha = N / N_h must make N_h integral for every requested N.  The
    reference value k_paper(alpha) is reported alongside, not asserted.
    """
    rows = []
    for n in n_list:
        nh = n / alpha
        if abs(nh - round(nh)) > 1e-9:
            raise ValueError(f"alpha*N_h integrality fails for N={n}")
        nh = round(nh)
        nv = n - nh
        dims = Dims(nh, nv)
        count = count_allowed(dims, "dp").value
        # exact-int scaling, then one float division
        ratio = float(Fraction(count * round(n**1.5 * 10**9), 4**n * 10**9))
        rows.append({"N": n, "n_h": nh, "n_v": nv, "ratio": ratio})
    return {"alpha": alpha, "k_paper": k_paper(alpha), "rows": rows}


# --- canonical loop pattern ------------------------------------------------


def _nesting_order(pairs):
    """Innermost-first processing order (fewest strictly nested bonds)."""
    allb = list(pairs)

    def inside_count(t):
        a, b = t
        return sum(1 for (c, d) in allb if a < c and d < b)

    return sorted(allb, key=lambda t: (inside_count(t), t[0]))


def canonical_pattern(p: ConnectivityPattern, dims: Dims) -> LoopPattern:
    """Deterministic loop pattern realizing an allowed matching.

    Walks every bond monotonically from its shifted start to its shifted end,
    extending diagonally when the remainder is diagonal and otherwise probing
    the side of the bond's nested boundary arc first (two half-steps at a
    time, bouncing outward when the probe is occupied or in the boundary).
    Leftover edge midpoints are covered by unit bubbles.
    """
    if dims.topology != OPEN:
        raise ValueError("canonical patterns live on open patches")
    witness = violated_cut(p, dims)
    if witness is not None:
        raise ForbiddenMatchingError(
            f"matching is forbidden: flow {witness[2]} through {witness[1]} cut "
            f"{witness[0]}",
            witness=witness,
        )

    nh, nv = dims.n_h, dims.n_v
    bpos = {
        i: (boundary_point(dims, i).x2, boundary_point(dims, i).y2)
        for i in range(1, 2 * (nh + nv) + 1)
    }
    bset = set(bpos.values())
    occupied: set = set()
    arcs = []

    def classify(a, b):
        dx, dy = abs(b[0] - a[0]), abs(b[1] - a[1])
        return "h" if dx > dy else ("v" if dx < dy else "d")

    for (ia, ib) in _nesting_order(p.pairs):
        A, B = bpos[ia], bpos[ib]
        cls = classify(A, B)
        if cls in ("h", "d"):
            if A[0] > B[0]:
                A, B, ia, ib = B, A, ib, ia
        else:
            if A[1] > B[1]:
                A, B, ia, ib = B, A, ib, ia

        def shift_start(pt):
            x, y = pt
            if cls in ("h", "d"):
                if y == 0:
                    return (x + 1, y + 1)
                if y == 2 * nv:
                    return (x + 1, y - 1)
            else:
                if x == 0:
                    return (x + 1, y + 1)
                if x == 2 * nh:
                    return (x - 1, y + 1)
            return pt

        def shift_end(pt):
            x, y = pt
            if cls in ("h", "d"):
                if y == 0:
                    return (x - 1, y + 1)
                if y == 2 * nv:
                    return (x - 1, y - 1)
            else:
                if x == 0:
                    return (x + 1, y - 1)
                if x == 2 * nh:
                    return (x - 1, y - 1)
            return pt

        a_bar = shift_start(A)
        b_bar = shift_end(B)
        path = [A]
        if a_bar != A:
            path.append(a_bar)
        v = a_bar
        # The boundary arc strictly between the endpoint indices holds this
        # bond's nested bonds; walking A->B it lies on the walker's left iff
        # index(A) < index(B).
        inside_left = ia < ib

        def is_free(pt):
            return (
                pt not in occupied
                and pt not in bset
                and 0 <= pt[0] <= 2 * nh
                and 0 <= pt[1] <= 2 * nv
            )

        guard = 0
        while v != b_bar:
            guard += 1
            if guard > 4 * nh * nv + 8:
                raise AssertionError("canonical walk failed to terminate")
            dx, dy = b_bar[0] - v[0], b_bar[1] - v[1]
            if abs(dx) == abs(dy):
                w = (v[0] + (1 if dx > 0 else -1), v[1] + (1 if dy > 0 else -1))
                if w != b_bar and not is_free(w):
                    raise AssertionError("diagonal extension blocked")
                path.append(w)
                occupied.add(w)
                v = w
                continue
            if cls == "h":
                sgn = -1 if inside_left else 1  # walking +x: left is -y
                cand_in = ((v[0] + 1, v[1] + sgn), (v[0] + 2, v[1] + 2 * sgn))
                cand_out = ((v[0] + 1, v[1] - sgn), (v[0] + 2, v[1] - 2 * sgn))
            else:
                sgn = 1 if inside_left else -1  # walking +y: left is +x
                cand_in = ((v[0] + sgn, v[1] + 1), (v[0] + 2 * sgn, v[1] + 2))
                cand_out = ((v[0] - sgn, v[1] + 1), (v[0] - 2 * sgn, v[1] + 2))
            if is_free(cand_in[0]) and (is_free(cand_in[1]) or cand_in[1] == b_bar):
                w1, w2 = cand_in
            else:
                w1, w2 = cand_out
                if not ((is_free(w1) or w1 == b_bar) and (is_free(w2) or w2 == b_bar)):
                    raise AssertionError(
                        f"both detours blocked at {v} for bond ({ia},{ib})"
                    )
            path.extend((w1, w2))
            occupied.add(w1)
            occupied.add(w2)
            v = w2
        if b_bar != B:
            path.append(B)
        for pt in path:
            if pt not in bset:
                occupied.add(pt)
        arcs.extend(zip(path, path[1:]))

    # bubble filling: scan top-to-bottom; the first uncovered point is always
    # the top vertex of its bubble
    all_interior = set()
    for r in range(1, nv + 1):
        for c in range(1, nh + 1):
            for pt in (
                (2 * c - 1, 2 * (r - 1)),
                (2 * c - 1, 2 * r),
                (2 * (c - 1), 2 * r - 1),
                (2 * c, 2 * r - 1),
            ):
                if pt not in bset:
                    all_interior.add(pt)
    remaining = all_interior - occupied
    while remaining:
        top = min(remaining, key=lambda pt: (pt[1], pt[0]))
        vx, vy = top[0], top[1] + 1
        quad = [(vx, vy - 1), (vx + 1, vy), (vx, vy + 1), (vx - 1, vy)]
        if not all(q in remaining for q in quad):
            raise AssertionError("bubble filling failed")
        arcs.extend(zip(quad, quad[1:] + quad[:1]))
        remaining -= set(quad)

    return _tiles_from_arcs(dims, arcs, p)


def _tiles_from_arcs(dims: Dims, arcs, p) -> LoopPattern:
    nh, nv = dims.n_h, dims.n_v

    def touching(pt):
        x, y = pt
        out = []
        if x % 2 == 1:  # up/down edge midpoint
            c = (x + 1) // 2
            m = y // 2
            if m + 1 <= nv:
                out.append((m + 1, c))
            if m >= 1:
                out.append((m, c))
        else:  # left/right edge midpoint
            r = (y + 1) // 2
            m = x // 2
            if m + 1 <= nh:
                out.append((r, m + 1))
            if m >= 1:
                out.append((r, m))
        return out

    def midpoints(r, c):
        return {
            "u": (2 * c - 1, 2 * (r - 1)),
            "d": (2 * c - 1, 2 * r),
            "l": (2 * (c - 1), 2 * r - 1),
            "r": (2 * c, 2 * r - 1),
        }

    tiles = [[None] * nh for _ in range(nv)]
    for (P, Q) in arcs:
        common = set(touching(P)) & set(touching(Q))
        if len(common) != 1:
            raise AssertionError(f"arc {P}-{Q} has no unique tile")
        r, c = common.pop()
        mids = midpoints(r, c)
        ends = {P, Q}
        if ends in ({mids["u"], mids["l"]}, {mids["d"], mids["r"]}):
            t = 0
        elif ends in ({mids["u"], mids["r"]}, {mids["d"], mids["l"]}):
            t = 1
        else:
            raise AssertionError(f"arc {P}-{Q} is not a tile arc")
        if tiles[r - 1][c - 1] is None:
            tiles[r - 1][c - 1] = t
        elif tiles[r - 1][c - 1] != t:
            raise AssertionError(f"conflicting tile at ({r},{c}) for {p}")
    if any(t is None for row in tiles for t in row):
        raise AssertionError("canonical pattern left tiles unset")
    return LoopPattern(dims, tuple(tuple(row) for row in tiles))


# --- filling the exterior of a hole on the torus ---------------------------


@dataclass(frozen=True)
class HoleFilling:
    torus: Dims
    hole: Dims
    origin: tuple  # 1-based (row, col) of the hole's top-left tile
    pattern: LoopPattern  # full torus pattern; hole tiles set to 0 but unused
    exterior: dict  # (r, c) -> tile for tiles outside the hole


def hole_feasible(hole: Dims, torus: Dims) -> bool:
    return min(torus.n_h, torus.n_v) > 1.5 * (hole.n_h + hole.n_v)


def _hole_boundary_edges(torus: Dims, hole: Dims, origin):
    """Hole-boundary edges indexed clockwise from the hole's top-left."""
    r0, c0 = origin
    lh, lv = hole.n_h, hole.n_v
    edges = []
    for c in range(c0, c0 + lh):  # top, left->right
        edges.append(("h", r0, c))
    for r in range(r0, r0 + lv):  # right, top->bottom
        edges.append(("v", r, c0 + lh))
    for c in range(c0 + lh - 1, c0 - 1, -1):  # bottom, right->left
        edges.append(("h", r0 + lv, c))
    for r in range(r0 + lv - 1, r0 - 1, -1):  # left, bottom->top
        edges.append(("v", r, c0))
    return edges


def fill_exterior(
    hole: Dims, torus: Dims, p_on_hole: ConnectivityPattern
) -> HoleFilling:
    """Tile the torus outside a centered rectangular hole so the traced
    exterior paths connect exactly the pairs of ``p_on_hole``.

    Matched stubs that are cyclically adjacent are closed by a minimal path
    hugging the hole; peeling them repeatedly exposes the remaining pairs,
    which close one collar further out.  Each closure is found as a shortest
    consistent arc path (breadth-first), and the final tiling is verified by
    tracing the punctured torus.
    """
    if torus.topology != TORUS:
        raise ValueError("fill_exterior requires a torus")
    if 2 * p_on_hole.n != 2 * (hole.n_h + hole.n_v):
        raise ValueError("matching does not fit the hole boundary")
    if not hole_feasible(hole, torus):
        raise ValueError(
            f"need min(N_h, N_v) > 3/2 (L_h + L_v): "
            f"{min(torus.n_h, torus.n_v)} <= {1.5 * (hole.n_h + hole.n_v)}"
        )
    origin = ((torus.n_v - hole.n_v) // 2 + 1, (torus.n_h - hole.n_h) // 2 + 1)
    r0, c0 = origin
    hole_tiles = {
        (r, c)
        for r in range(r0, r0 + hole.n_v)
        for c in range(c0, c0 + hole.n_h)
    }
    stub_edges = _hole_boundary_edges(torus, hole, origin)
    stub_of = {i + 1: e for i, e in enumerate(stub_edges)}
    forbidden_edges = set(stub_edges)

    # tile arcs on the torus, exterior tiles only
    def tile_arcs(r, c, t):
        up = ("h", r, c)
        down = ("h", r % torus.n_v + 1, c)
        left = ("v", r, c)
        right = ("v", r, c % torus.n_h + 1)
        if t == 0:
            return ((up, left), (down, right))
        return ((up, right), (down, left))

    tile_value: dict = {}
    used_edges: set = set()

    def _arc_options(edge):
        """(r, c, tile_value, other_edge) reachable from ``edge`` by one arc."""
        out = []
        kind, a, b = edge
        if kind == "h":
            candidates = [((a - 2) % torus.n_v + 1, b), (a, b)]  # tile above, below
        else:
            candidates = [(a, (b - 2) % torus.n_h + 1), (a, b)]  # tile left, right
        for (r, c) in candidates:
            if (r, c) in hole_tiles:
                continue
            allowed_vals = (
                (tile_value[(r, c)],) if (r, c) in tile_value else (0, 1)
            )
            for t in allowed_vals:
                for (p, q) in tile_arcs(r, c, t):
                    if edge == p:
                        other = q
                    elif edge == q:
                        other = p
                    else:
                        continue
                    if other not in used_edges:
                        out.append((r, c, t, other))
        return out

    def route(start_idx, end_idx):
        """Shortest arc path between two stubs; fixes tile values on use."""
        start, goal = stub_of[start_idx], stub_of[end_idx]
        from collections import deque

        prev: dict = {start: None}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            if cur == goal:
                break
            for (r, c, t, other) in _arc_options(cur):
                if other in prev:
                    continue
                # stub edges may only terminate a path
                if other in forbidden_edges and other != goal:
                    continue
                prev[other] = (cur, (r, c), t)
                queue.append(other)
        if goal not in prev:
            raise AssertionError(
                f"no route for stubs {start_idx}-{end_idx}; hole too crowded"
            )
        steps = []
        node = goal
        while prev[node] is not None:
            cur, tile, t = prev[node]
            steps.append((cur, node, tile, t))
            node = cur
        for (e1, e2, tile, t) in steps:
            if tile in tile_value and tile_value[tile] != t:
                raise AssertionError(f"inconsistent tile value at {tile}")
            tile_value[tile] = t
            used_edges.add(e1)
            used_edges.add(e2)

    # peel cyclically adjacent matched pairs, innermost collar first
    alive = list(range(1, 2 * p_on_hole.n + 1))
    partner = {}
    for (a, b) in p_on_hole.pairs:
        partner[a] = b
        partner[b] = a
    remaining = set(alive)
    while remaining:
        order = [s for s in alive if s in remaining]
        adjacent = []
        m = len(order)
        taken = set()
        for i in range(m):
            a, b = order[i], order[(i + 1) % m]
            if partner[a] == b and a not in taken and b not in taken:
                adjacent.append((a, b))
                taken.add(a)
                taken.add(b)
        if not adjacent:
            raise AssertionError("no adjacent pair found; matching not non-crossing?")
        for (a, b) in sorted(adjacent):
            route(a, b)
        remaining -= {s for pair in adjacent for s in pair}

    # fill untouched exterior tiles with disjoint bubbles
    exterior = {}
    for r in range(1, torus.n_v + 1):
        for c in range(1, torus.n_h + 1):
            if (r, c) in hole_tiles:
                continue
            if (r, c) in tile_value:
                exterior[(r, c)] = tile_value[(r, c)]
            else:
                exterior[(r, c)] = (r + c + 1) % 2  # B on each aligned 2x2 block
    rows = [
        tuple(exterior.get((r, c), 0) for c in range(1, torus.n_h + 1))
        for r in range(1, torus.n_v + 1)
    ]
    pattern = LoopPattern(torus, tuple(rows))
    filling = HoleFilling(torus, hole, origin, pattern, exterior)
    traced = trace_punctured(filling)
    if traced != p_on_hole.pairs:
        raise AssertionError(
            f"verification failed: traced {traced}, wanted {p_on_hole.pairs}"
        )
    return filling


def trace_punctured(filling: HoleFilling):
    """Pairing of the hole-boundary stubs induced by the exterior tiling."""
    torus, hole, origin = filling.torus, filling.hole, filling.origin
    stub_edges = _hole_boundary_edges(torus, hole, origin)
    stub_index = {e: i + 1 for i, e in enumerate(stub_edges)}
    r0, c0 = origin
    hole_tiles = {
        (r, c)
        for r in range(r0, r0 + hole.n_v)
        for c in range(c0, c0 + hole.n_h)
    }

    adj: dict = {}
    for (r, c), t in filling.exterior.items():
        if (r, c) in hole_tiles:
            continue
        up = ("h", r, c)
        down = ("h", r % torus.n_v + 1, c)
        left = ("v", r, c)
        right = ("v", r, c % torus.n_h + 1)
        arcs = ((up, left), (down, right)) if t == 0 else ((up, right), (down, left))
        for (p, q) in arcs:
            adj.setdefault(p, []).append((q, (r, c)))
            adj.setdefault(q, []).append((p, (r, c)))

    pairs = []
    seen = set()
    for edge in stub_edges:
        if edge in seen:
            continue
        seen.add(edge)
        visited_arcs = set()
        cur = edge
        while True:
            moved = False
            for (q, tile) in adj.get(cur, []):
                key = (frozenset((cur, q)), tile)
                if key in visited_arcs:
                    continue
                visited_arcs.add(key)
                cur = q
                moved = True
                break
            if not moved or cur in stub_index:
                break
        if cur not in stub_index or cur == edge:
            raise AssertionError(f"stub {stub_index[edge]} does not terminate")
        seen.add(cur)
        a, b = stub_index[edge], stub_index[cur]
        pairs.append((min(a, b), max(a, b)))
    return tuple(sorted(pairs))
