"""Nested crooked chains of discs in the plane, their checker, rasters, and embedding into R^{2n}.

A level-(v+1) chain is laid out as a ribbon along the level-v chain: its parent-index walk
is split into monotone runs, each run travels along its own lane (lateral offset from the
parent's spine), and consecutive runs are joined by U-turns. Child link centers sit at
equal arclength along the resulting curve, which becomes the spine for the next level.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .geometry import DomainError, Punctured, RasterObstacle

MAX_LINKS = 2**12
OVERLAP_RADIUS = 0.75  # radius / spacing: neighbors overlap, next-but-one are disjoint
LANE_SEP = 2.6  # lane separation in child radii
MAX_RAMP_SLOPE = math.tan(math.radians(70))
MODES = ("strict_crooked", "paper_literal")


class PackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Link:
    center: tuple
    radius: float

    @property
    def diameter(self):
        return 2 * self.radius


@dataclass
class Chain:
    centers: np.ndarray
    radii: np.ndarray
    level: int
    spine: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, float)
        self.radii = np.broadcast_to(np.asarray(self.radii, float), (len(self.centers),)).copy()
        if self.spine is None:
            self.spine = self.centers.copy()

    def __len__(self):
        return len(self.centers)

    @property
    def links(self):
        return [Link(tuple(c), float(r)) for c, r in zip(self.centers, self.radii)]

    @property
    def spacing(self):
        return float(np.mean(np.linalg.norm(np.diff(self.centers, axis=0), axis=1)))


@dataclass
class ChainSequence:
    chains: list
    parents: list  # parents[i][j]: index in chains[i] of the link containing chains[i+1] link j
    x: np.ndarray
    y: np.ndarray
    mode: str = "paper_literal"

    @property
    def levels(self):
        return len(self.chains)

    def chain(self, level):
        return self.chains[level - 1]

    def parent_map(self, level):
        """Parent indices of the level+1 links in the level chain."""
        return self.parents[level - 1]

    def to_json(self):
        return json.dumps({
            "schema_version": 1,
            "mode": self.mode,
            "x": self.x.tolist(), "y": self.y.tolist(),
            "levels": [{"level": c.level, "centers": c.centers.tolist(), "radii": c.radii.tolist()}
                       for c in self.chains],
            "parents": [p.tolist() for p in self.parents],
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        chains = [Chain(np.array(c["centers"]), np.array(c["radii"]), c["level"]) for c in d["levels"]]
        return cls(chains, [np.array(p) for p in d["parents"]], np.array(d["x"]), np.array(d["y"]), d["mode"])


# --- index walks -----------------------------------------------------------


@lru_cache(maxsize=None)
def _strict_len(d):
    """Length of the minimal strict walk over a span of d + 1 parent links."""
    if d <= 2:
        return d + 1
    return _strict_len(d - 1) + _strict_len(d - 2) + _strict_len(d - 1) - 2


def strict_walk(a, b, cap=MAX_LINKS):
    """Walk a -> b where every pair more than 2 apart is split by a fold back.

    C(a, b) = C(a, b-1) + C(b-1, a+1) + C(a+1, b): go to the link before the target,
    return to the link after the origin, then finish.
    """
    d = abs(b - a)
    if _strict_len(d) > cap:
        raise PackingError(f"strict walk over {d + 1} links needs {float(_strict_len(d)):.3g} > {cap} links")
    if d <= 2:
        step = 1 if b >= a else -1
        return list(range(a, b + step, step))
    s = 1 if b > a else -1
    w1 = strict_walk(a, b - s, cap)
    w2 = strict_walk(b - s, a + s, cap)
    w3 = strict_walk(a + s, b, cap)
    return w1 + w2[1:] + w3[1:]


def straight_walk(M):
    """Monotone walk: the cheapest refinement meeting the crookedness condition as printed."""
    return list(range(M))


def make_walk(M, mode):
    if mode == "strict_crooked":
        return strict_walk(0, M - 1)
    if mode == "paper_literal":
        return straight_walk(M)
    raise ValueError(f"unknown mode {mode!r}")


def runs_of(walk):
    """Maximal monotone runs as (first position, last position) in the walk."""
    out, start = [], 0
    for i in range(1, len(walk) - 1):
        if (walk[i] - walk[i - 1]) * (walk[i + 1] - walk[i]) < 0:
            out.append((start, i))
            start = i
    out.append((start, len(walk) - 1))
    return out


# --- geometry --------------------------------------------------------------


def initial_chain(x, y, m) -> Chain:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if np.array_equal(x, y):
        raise DomainError("x and y must differ")
    if m < 3:
        raise DomainError("need m >= 3 links")
    s = float(np.linalg.norm(y - x)) / (m - 1)
    r = OVERLAP_RADIUS * s
    if 2 * r >= 1:
        raise DomainError(f"m = {m} gives link diameter {2 * r:.3g} >= 1; use more links")
    t = np.linspace(0, 1, m)[:, None]
    return Chain(x + t * (y - x), np.full(m, r), 1, np.vstack([x, y]))


def _arclength(P):
    return np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=1))]


class _Spine:
    """Arclength-parametrized polyline with smoothed unit normals."""

    def __init__(self, P, smooth):
        self.P = P
        self.s = _arclength(P)
        self.L = self.s[-1]
        self.smooth = smooth

    def point(self, a):
        a = np.asarray(a, float)
        x = np.interp(a, self.s, self.P[:, 0])
        y = np.interp(a, self.s, self.P[:, 1])
        # linear extension past the ends
        t0 = self.P[1] - self.P[0]
        t1 = self.P[-1] - self.P[-2]
        t0, t1 = t0 / np.linalg.norm(t0), t1 / np.linalg.norm(t1)
        out = np.stack([x, y], axis=-1)
        lo, hi = a < 0, a > self.L
        out[lo] = self.P[0] + a[lo][:, None] * t0
        out[hi] = self.P[-1] + (a[hi] - self.L)[:, None] * t1
        return out

    def normal(self, a):
        d = self.point(np.asarray(a) + self.smooth) - self.point(np.asarray(a) - self.smooth)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        return np.stack([-d[:, 1], d[:, 0]], axis=1)


def _lanes(runs_a, sep, margin):
    """Lane numbers per run: a staircase, with each run jogging back to the base lane where
    it is alone. Returns (entry, exit, jog interval or None) per run; falls back to the
    plain staircase if jogging would put two overlapping runs on the same lane."""
    R = len(runs_a)
    ext = []
    for k, (A, B, d) in enumerate(runs_a):
        lo_b = sep / 2 if (k > 0 and d > 0) or (k < R - 1 and d < 0) else 0.0
        hi_b = sep / 2 if (k > 0 and d < 0) or (k < R - 1 and d > 0) else 0.0
        ext.append((A - lo_b, B + hi_b))

    def alone(k):
        A, B, d = runs_a[k]
        free = [(A, B)]
        for j in range(R):
            if j == k:
                continue
            lo, hi = ext[j][0] - margin, ext[j][1] + margin
            nxt = []
            for a0, a1 in free:
                if hi <= a0 or lo >= a1:
                    nxt.append((a0, a1))
                    continue
                if lo > a0:
                    nxt.append((a0, lo))
                if hi < a1:
                    nxt.append((hi, a1))
            free = nxt
        return free

    stair = [(k, k, None) for k in range(R)]
    plan, base = [], 0
    for k in range(R):
        entry = 0 if k == 0 else plan[-1][1] + 1
        jog = None
        if entry != base and k < R - 1:
            need = abs(entry - base) * sep / MAX_RAMP_SLOPE + 2 * margin
            d = runs_a[k][2]
            cands = [iv for iv in alone(k) if iv[1] - iv[0] >= need]
            if cands:
                iv = max(cands, key=lambda iv: iv[1]) if d > 0 else min(cands, key=lambda iv: iv[0])
                jog = iv
        plan.append((entry, base if jog else entry, jog))

    # overlapping runs must use different lanes wherever both are present
    def lane_at(k, a):
        e, x, jog = plan[k]
        if jog is None:
            return {e}
        A, B, d = runs_a[k]
        before = a < jog[0] if d > 0 else a > jog[1]
        after = a > jog[1] if d > 0 else a < jog[0]
        return {e} if before else {x} if after else {e, x}

    for j in range(R):
        for k in range(j + 1, R):
            lo, hi = max(ext[j][0], ext[k][0]) - margin, min(ext[j][1], ext[k][1]) + margin
            if lo > hi:
                continue
            for a in np.linspace(lo, hi, 9):
                if lane_at(j, a) & lane_at(k, a):
                    return stair, alone
    return plan, alone


def _ribbon_path(parent_spine, a_par, walk, r_c, step):
    """Dense child curve in (a, l) ribbon coordinates, mapped into the plane."""
    sep = LANE_SEP * r_c
    margin = 2.5 * r_c
    runs = runs_of(walk)
    runs_a = []
    for i0, i1 in runs:
        A, B = a_par[walk[i0]], a_par[walk[i1]]
        d = 1 if B > A else -1
        runs_a.append((min(A, B), max(A, B), d))
    plan, alone = _lanes(runs_a, sep, margin)
    lanes = [p[0] for p in plan] + [p[1] for p in plan]
    mid = 0.5 * (min(lanes) + max(lanes))

    def off(lane):
        return (lane - mid) * sep

    pts = []

    def seg(p, q):
        n = max(2, int(math.ceil(math.dist(p, q) / step)) + 1)
        t = np.linspace(0, 1, n)[:, None]
        pts.append(np.asarray(p) + t * (np.asarray(q) - np.asarray(p)))

    def ramp(p, q):
        # smooth lane change: l follows a half cosine, so the curve has no corners
        n = max(8, int(math.ceil(2 * math.dist(p, q) / step)) + 1)
        t = np.linspace(0, 1, n)
        a = p[0] + t * (q[0] - p[0])
        l = p[1] + 0.5 * (1 - np.cos(np.pi * t)) * (q[1] - p[1])
        pts.append(np.stack([a, l], axis=1))

    def ramp_len(dl, room):
        return max(min(2 * abs(dl), room), 1e-3 * step)

    def room_at(k, a0):
        for lo, hi in alone(k):
            if lo - 1e-12 <= a0 <= hi + 1e-12:
                return max(hi - a0 if a0 - lo < 1e-12 else a0 - lo, 0.0) - margin
        return 0.25 * sep

    a_end = a_par[walk[-1]]
    for k, (A, B, d) in enumerate(runs_a):
        e, x, jog = plan[k]
        start, stop = (A, B) if d > 0 else (B, A)
        cur = (start, off(e))
        if k == 0:
            # from x (lateral offset 0) onto the first lane
            L = ramp_len(off(e), max(room_at(0, start), 0.25 * sep))
            cur = (start + d * L, off(e))
            ramp((start, 0.0), cur)
        if jog is not None:
            j0, j1 = (jog[0] + margin, jog[1] - margin)
            L = ramp_len(off(x) - off(e), j1 - j0)
            if d > 0:
                p, q = (j1 - L, off(e)), (j1, off(x))
            else:
                p, q = (j0 + L, off(e)), (j0, off(x))
            seg(cur, p)
            ramp(p, q)
            cur = q
        lane_end = off(x)
        if k == len(runs_a) - 1:
            L = ramp_len(lane_end, max(room_at(k, stop), 0.25 * sep))
            p = (stop - d * L, lane_end)
            seg(cur, p)
            ramp(p, (a_end, 0.0))
            break
        seg(cur, (stop, lane_end))
        # U-turn onto the next run's entry lane, bulging past the turning link
        nxt = off(plan[k + 1][0])
        c, rad = 0.5 * (lane_end + nxt), 0.5 * abs(nxt - lane_end)
        n = max(8, int(math.ceil(math.pi * rad / step)))
        th = np.linspace(-math.pi / 2, math.pi / 2, n)
        sgn = 1 if nxt > lane_end else -1
        arc = np.stack([stop + d * rad * np.cos(th), c + sgn * rad * np.sin(th)], axis=1)
        pts.append(arc)
    al = np.vstack(pts)
    keep = np.r_[True, np.linalg.norm(np.diff(al, axis=0), axis=1) > 1e-15]
    al = al[keep]
    P = parent_spine.point(al[:, 0]) + al[:, 1:2] * parent_spine.normal(al[:, 0])
    return al, P


def _check_level(parent, child, p, nu_child):
    """Adjacency, diameter and containment for a freshly laid-out child chain."""
    C, r = child.centers, child.radii
    if np.any(2 * r >= 1.0 / nu_child):
        return "diameter"
    d = np.linalg.norm(C - parent.centers[p], axis=1)
    if np.any(d + r > parent.radii[p] + 1e-12):
        return "containment"
    if np.any(np.abs(np.diff(p)) > 1):
        return "walk"
    if np.any(np.linalg.norm(np.diff(C, axis=0), axis=1) >= r[:-1] + r[1:]):
        return "adjacency"
    tree = cKDTree(C)
    for i, j in tree.query_pairs(2 * r.max()):
        if abs(i - j) > 1 and math.dist(C[i], C[j]) < r[i] + r[j]:
            return "adjacency"
    return None


def refine_chain(parent: Chain, mode: str = "paper_literal", x=None, y=None, budget=12):
    """Level-(v+1) chain inside ``parent``; returns (chain, parent index per child link)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    M = len(parent)
    nu = parent.level + 1
    try:
        walk = make_walk(M, mode)
    except PackingError as e:
        raise PackingError(f"level {nu}: {e}") from None
    e_p = parent.spacing
    r_p = float(parent.radii.min())
    a_par = np.arange(M) * e_p
    spine = _Spine(_resample(parent.spine, e_p / 16), smooth=0.5 * e_p)
    lanes_guess = len(runs_of(walk))
    # lateral room inside a parent link after allowing half a spacing along the spine
    W = math.sqrt(max((r_p - 0.1 * e_p) ** 2 - (0.5 * e_p) ** 2, 0.0))
    r_c = min(0.17 * e_p, 0.45 / nu, W / (0.5 * LANE_SEP * max(lanes_guess - 1, 0) + 1.5))
    fail = None
    for _ in range(budget):
        al, P = _ribbon_path(spine, a_par, walk, r_c, step=r_c / 8)
        s = _arclength(P)
        e_c = r_c / OVERLAP_RADIUS
        m = int(math.ceil(s[-1] / e_c)) + 1
        if m > MAX_LINKS:
            raise PackingError(f"level {nu}: {m} links exceed the {MAX_LINKS} cap ({fail or 'size'})")
        t = np.linspace(0, s[-1], m)
        C = np.stack([np.interp(t, s, P[:, 0]), np.interp(t, s, P[:, 1])], axis=1)
        a = np.interp(t, s, al[:, 0])
        p = np.clip(np.rint(a / e_p).astype(int), 0, M - 1)
        rc = OVERLAP_RADIUS * t[1]
        child = Chain(C, np.full(m, rc), nu, P)
        fail = _check_level(parent, child, p, nu)
        if fail is None:
            return child, p
        r_c *= 0.8
    raise PackingError(f"level {nu}: packing failed ({fail}) after {budget} retries")


def _resample(P, step):
    s = _arclength(P)
    n = max(2, int(math.ceil(s[-1] / step)) + 1)
    t = np.linspace(0, s[-1], n)
    return np.stack([np.interp(t, s, P[:, 0]), np.interp(t, s, P[:, 1])], axis=1)


def build_sequence(x=(0.0, 0.0), y=(1.0, 0.0), m=5, levels=5, mode="paper_literal") -> ChainSequence:
    x, y = np.asarray(x, float), np.asarray(y, float)
    chains, parents = [initial_chain(x, y, m)], []
    for _ in range(levels - 1):
        c, p = refine_chain(chains[-1], mode, x, y)
        chains.append(c)
        parents.append(p)
    return ChainSequence(chains, parents, x, y, mode)


# --- checker ---------------------------------------------------------------


def _crooked_witness(p, mode):
    """First (j, k) with |p(j) - p(k)| > 2 violating the crookedness condition, or None.

    strict: some j < s < t < k has p(s) within 1 of p(k) and p(t) within 1 of p(j).
    literal: some j < s < t < k has p(s) within 1 of p(j) and p(t) within 1 of p(k).
    """
    p = np.asarray(p, int)
    M = len(p)
    V = int(p.max()) + 3
    first = np.full(V, M, dtype=np.int64)  # first position > j holding each value
    idx = np.arange(M)
    for j in range(M - 2, -1, -1):
        first[p[j + 1] + 1] = j + 1
        ks = idx[j + 1:]
        far = np.abs(p[ks] - p[j]) > 2
        if not np.any(far):
            continue
        near_j = np.abs(p[j + 1:] - p[j]) <= 1
        # last position t < k (and > j) near p(j)
        pos = np.where(near_j, ks, -1)
        last_near_j = np.r_[-1, np.maximum.accumulate(pos)[:-1]]
        if mode == "strict_crooked":
            vk = p[ks] + 1
            s_first = np.minimum(np.minimum(first[vk - 1], first[vk]), first[vk + 1])
            ok = s_first < last_near_j
        else:
            # s: first position > j near p(j); t: last position < k near p(k)
            s_first = ks[near_j][0] if np.any(near_j) else M
            t_last = _last_near_before(p, j, ks)
            ok = s_first < t_last
        bad = far & ~ok
        if np.any(bad):
            return int(j), int(ks[np.argmax(bad)])
    return None


def _last_near_before(p, j, ks):
    out = np.full(len(ks), -1)
    vals = p[ks]
    last = {}
    for n, k in enumerate(ks):
        v = vals[n]
        best = max(last.get(v - 1, -1), last.get(v, -1), last.get(v + 1, -1))
        out[n] = best
        last[v] = k
    return out


def crooked_ok(p, mode):
    return _crooked_witness(p, mode) is None


@dataclass
class ConditionReport:
    level: int
    mode: str
    checks: dict

    @property
    def passed(self):
        return all(v["pass"] for v in self.checks.values())

    def to_dict(self):
        return {"schema_version": 1, "level": self.level, "mode": self.mode, "passed": self.passed,
                "checks": self.checks}


def verify_chain_conditions(seq: ChainSequence, level: int, mode: str = "strict_crooked") -> ConditionReport:
    if level < 1 or level + 1 > seq.levels:
        raise DomainError("level and level+1 must exist")
    P, C, p = seq.chain(level), seq.chain(level + 1), np.asarray(seq.parent_map(level))
    checks = {}
    # diameters below 1/nu on both levels
    bad = [(lv, int(i)) for lv, ch in ((level, P), (level + 1, C)) for i in np.flatnonzero(2 * ch.radii >= 1 / lv)]
    checks["diameter"] = {"pass": not bad, "witness": bad[:1]}
    # closure of each child inside its parent link
    d = np.linalg.norm(C.centers - P.centers[p], axis=1) + C.radii - P.radii[p]
    bad = np.flatnonzero(d > 1e-12)
    checks["containment"] = {"pass": len(bad) == 0, "witness": bad[:1].tolist()}
    w = _crooked_witness(p, mode)
    checks["crooked"] = {"pass": w is None, "witness": list(w) if w else []}
    bad = []
    for lv, ch in ((level, P), (level + 1, C)):
        if math.dist(ch.centers[0], seq.x) >= ch.radii[0]:
            bad.append((lv, "x"))
        if math.dist(ch.centers[-1], seq.y) >= ch.radii[-1]:
            bad.append((lv, "y"))
    checks["endpoints"] = {"pass": not bad, "witness": bad[:1]}
    wit = []
    for lv, ch in ((level, P), (level + 1, C)):
        w2 = _adjacency_witness(ch)
        if w2:
            wit.append((lv,) + w2)
    checks["adjacency"] = {"pass": not wit, "witness": wit[:1]}
    return ConditionReport(level, mode, checks)


def _adjacency_witness(ch: Chain):
    C, r = ch.centers, ch.radii
    gaps = np.linalg.norm(np.diff(C, axis=0), axis=1) >= r[:-1] + r[1:]
    if np.any(gaps):
        i = int(np.argmax(gaps))
        return (i, i + 1)
    tree = cKDTree(C)
    for i, j in sorted(tree.query_pairs(2 * r.max())):
        if abs(i - j) > 1 and math.dist(C[i], C[j]) < r[i] + r[j]:
            return (i, j)
    return None


def intrinsic_diameter_growth(seq: ChainSequence):
    """Links an index walk from the x-link to the y-link must traverse, per level.

    ``growth`` is the link-count ratio to the previous level; ``fold_factor`` removes the
    subdivision by counting parent links visited (with repetition) per parent link.
    """
    if seq.levels < 2:
        raise DomainError("need at least two levels")
    out = []
    for lv in range(1, seq.levels + 1):
        M = len(seq.chain(lv))
        row = {"level": lv, "min_links_traversed": M}
        if lv > 1:
            p = np.asarray(seq.parent_map(lv - 1))
            collapsed = p[np.r_[True, np.diff(p) != 0]]
            row["growth"] = M / len(seq.chain(lv - 1))
            row["fold_factor"] = len(collapsed) / len(seq.chain(lv - 1))
        out.append(row)
    return out


# --- rasters ---------------------------------------------------------------


def rasterize_arc(seq: ChainSequence, depth: int, h: float, origin=(0.0, 0.0)) -> RasterObstacle:
    """Lattice cells (centers origin + h*index) whose centers lie in the closed union of the
    level-``depth`` links. The same (h, origin) at every depth gives nested rasters."""
    if depth < 1 or depth > seq.levels:
        raise DomainError("depth out of range")
    ch = seq.chain(depth)
    if h > ch.radii.min() / 4:
        raise DomainError(f"h = {h} is coarser than a quarter of the smallest link radius")
    origin = np.asarray(origin, float)
    cells = set()
    for c, r in zip(ch.centers, ch.radii):
        lo = np.floor((c - r - origin) / h).astype(int)
        hi = np.ceil((c + r - origin) / h).astype(int)
        I, J = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
        I, J = I.ravel(), J.ravel()
        pts = origin + h * np.stack([I, J], axis=1)
        inside = np.sum((pts - c) ** 2, axis=1) <= r * r
        cells.update(zip(I[inside].tolist(), J[inside].tolist()))
    idx = np.array(sorted(cells), dtype=np.int64)
    return RasterObstacle.from_index(h, idx, origin)


def coarsen(raster: RasterObstacle, factor: int) -> RasterObstacle:
    """Box cover at cell size factor*h (boxes aligned with the lattice)."""
    idx = np.unique(np.floor_divide(raster.index, factor), axis=0)
    return RasterObstacle.from_index(raster.h * factor, idx, raster.origin + 0.5 * (factor - 1) * raster.h)


def box_dimension(rasters):
    """Slope of log(count) against log(1/h) over the given rasters."""
    if len(rasters) < 4:
        raise DomainError("need at least 4 scales")
    h = np.array([r.h for r in rasters])
    N = np.array([len(r.cells) for r in rasters], float)
    if len(np.unique(h)) < len(h) or np.any(N < 1):
        raise DomainError("degenerate box-counting data")
    X, Y = np.log(1 / h), np.log(N)
    slope, icpt = np.polyfit(X, Y, 1)
    res = Y - (slope * X + icpt)
    ss = np.sum((Y - Y.mean()) ** 2)
    if ss == 0:
        raise DomainError("degenerate fit")
    return {"dimension": float(slope), "r2": float(1 - np.sum(res**2) / ss)}


# --- embedding ---------------------------------------------------------------


def embed_bilipschitz(raster: RasterObstacle, n: int, origin, e_a, e_b, scale=1.0, base=None) -> RasterObstacle:
    """Similarity map (u, v) -> origin + scale (u e_a + v e_b) of a planar raster into R^{2n}.

    Distances scale by exactly ``scale``, recorded as the obstacle's Lipschitz constant.
    If ``base`` is given the image must clear its boundary by 10 cell sizes.
    """
    if n < 3:
        raise DomainError("the embedding needs n >= 3")
    origin, e_a, e_b = (np.asarray(v, float) for v in (origin, e_a, e_b))
    if origin.shape != (2 * n,) or e_a.shape != (2 * n,) or e_b.shape != (2 * n,):
        raise DomainError("plane vectors must live in R^(2n)")
    G = np.array([[e_a @ e_a, e_a @ e_b], [e_b @ e_a, e_b @ e_b]])
    if not np.allclose(G, np.eye(2), atol=1e-12):
        raise DomainError("e_a, e_b must be orthonormal")
    if scale <= 0:
        raise DomainError("scale must be positive")
    E = np.vstack([e_a, e_b])
    cells = origin + scale * raster.cells @ E
    index, org = None, None
    axes = [np.flatnonzero(np.abs(e) > 0.5) for e in (e_a, e_b)]
    if all(len(a) == 1 and np.isclose(np.abs(e[a[0]]), 1.0) for a, e in zip(axes, (e_a, e_b))):
        # coordinate-aligned plane: keep an integer lattice so the obstacle can be written
        index = np.zeros((len(cells), 2 * n), np.int64)
        index[:, axes[0][0]] = raster.index[:, 0] * int(np.sign(e_a[axes[0][0]]))
        index[:, axes[1][0]] = raster.index[:, 1] * int(np.sign(e_b[axes[1][0]]))
        org = origin + scale * (raster.origin @ E)
        h2 = scale * raster.h
        cells = org + h2 * index
    ob = RasterObstacle(scale * raster.h, cells, index, org, lipschitz=scale)
    if base is not None:
        Punctured(base, ob)  # raises on clearance or containment failure
    return ob


# --- rendering -------------------------------------------------------------


def chain_svg(seq: ChainSequence, level: int, path, size=600):
    ch = seq.chain(level)
    allc = np.vstack([c.centers for c in seq.chains])
    lo = allc.min(axis=0) - seq.chain(1).radii.max()
    hi = allc.max(axis=0) + seq.chain(1).radii.max()
    s = size / float(max(hi - lo))

    def tx(p):
        return (p[0] - lo[0]) * s, size - (p[1] - lo[1]) * s

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">']
    if level > 1:
        for c, r in zip(seq.chain(level - 1).centers, seq.chain(level - 1).radii):
            X, Y = tx(c)
            out.append(f'<circle cx="{X:.2f}" cy="{Y:.2f}" r="{r * s:.2f}" fill="#eee" stroke="#ccc"/>')
    for c, r in zip(ch.centers, ch.radii):
        X, Y = tx(c)
        out.append(f'<circle cx="{X:.2f}" cy="{Y:.2f}" r="{r * s:.2f}" fill="none" stroke="#36c" stroke-width="0.5"/>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
