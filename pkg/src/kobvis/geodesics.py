"""Grid-graph Kobayashi distances, shortest paths, and almost-geodesic certificates.

A graph lives on a *frame*: an origin plus k orthonormal real directions in R^{2n}.
The full frame (k = 2n) grids the whole domain; a complex-line frame (k = 2) grids the
slice {o + zeta u} through two points, which is where ball geodesics live and keeps
desk-scale runs at h = 0.02 feasible in C^2 and C^3.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from .geometry import (
    DomainError, FinitePoints, Punctured, RasterObstacle, as_point, contains,
    delta_batch, domain_to_config, to_complex, to_real,
)
from .metric import estimate_batch, midpoint_metric

# additive distance error per unit h on the ball, max over 20 pairs at h = 0.04
# (scripts/measure_cdisc.py); the grid error is mostly relative, so this is only a floor
C_DISC = 3.0
QUAD = np.array([1.0, 3.0, 5.0]) / 6.0
SNAP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Frame:
    origin: np.ndarray
    basis: np.ndarray  # (k, 2n), orthonormal rows

    @property
    def k(self):
        return self.basis.shape[0]

    @classmethod
    def full(cls, domain):
        return cls(np.asarray(domain.center, float), np.eye(domain.dim))

    def key(self):
        return np.round(self.origin, 12).tobytes() + np.round(self.basis, 12).tobytes()


def line_frame(domain, z, w) -> Frame:
    """Real 2-plane of the complex line through z and w, origin at the foot from the center.

    For n = 1 the complex line is the whole domain, so the axis-aligned full frame is used.
    """
    z, w = as_point(z, domain.dim), as_point(w, domain.dim)
    if domain.n == 1:
        return Frame.full(domain)
    u = to_complex(w - z)
    nu = np.linalg.norm(u)
    if nu == 0:
        raise DomainError("z and w coincide")
    u = u / nu
    zc, cc = to_complex(z), to_complex(domain.center)
    o = zc + np.vdot(u, cc - zc) * u
    return Frame(to_real(o), np.vstack([to_real(u), to_real(1j * u)]))


@dataclass(eq=False)
class GridGraph:
    domain: object
    h: float
    frame: Frame
    nodes: np.ndarray  # (N, 2n)
    index: np.ndarray  # (N, k) integer lattice coordinates
    adj: csr_matrix
    components: np.ndarray
    _tree: cKDTree = field(repr=False, default=None)

    def __post_init__(self):
        self._tree = cKDTree(self.nodes)

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_components(self):
        return int(self.components.max()) + 1

    def snap(self, z):
        d, i = self._tree.query(np.asarray(z, float))
        if d > self.h:
            raise DomainError(f"point is {d:.3g} from the nearest node (h = {self.h})")
        return int(i)

    def node_ids(self, pts):
        d, i = self._tree.query(np.atleast_2d(pts))
        if np.any(d > SNAP_TOL):
            raise DomainError("path samples are not graph nodes")
        return i

    def weight(self, i, j):
        row = slice(self.adj.indptr[i], self.adj.indptr[i + 1])
        hit = np.flatnonzero(self.adj.indices[row] == j)
        return float(self.adj.data[row][hit[0]]) if len(hit) else None


def segment_length(domain, a, b):
    """Kobayashi length of straight segments a->b: 3-point midpoint rule on the midpoint metric."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    d = b - a
    X = (a[:, None, :] + QUAD[None, :, None] * d[:, None, :]).reshape(-1, a.shape[1])
    V = np.repeat(d, 3, axis=0)
    return midpoint_metric(domain, X, V).reshape(-1, 3).mean(axis=1)


def _segments_clear(domain, a, b):
    """Segments that stay off the obstacle (the base domains used here are convex)."""
    if not isinstance(domain, Punctured):
        return np.ones(len(a), bool)
    ob = domain.obstacle
    d = b - a
    L2 = np.sum(d * d, axis=1)

    def seg_dist(P, rows):
        s = np.clip(np.sum((P - a[rows]) * d[rows], axis=1) / L2[rows], 0, 1)
        return np.linalg.norm(a[rows] + s[:, None] * d[rows] - P, axis=1)

    ok = np.ones(len(a), bool)
    if isinstance(ob, FinitePoints):
        for p in ob.points:
            ok &= seg_dist(p[None, :], np.arange(len(a))) > 0
        return ok
    mid = 0.5 * (a + b)
    half = 0.5 * np.sqrt(L2)
    dn, _ = ob._tree.query(mid)
    for e in np.flatnonzero(dn <= half + ob.radius):
        cells = ob.cells[ob.near_cells(mid[e], half[e] + ob.radius)]
        rows = np.full(len(cells), e)
        ok[e] = bool(np.all(seg_dist(cells, rows) > ob.radius))
    return ok


def build_grid_graph(domain, h: float, frame: Frame | None = None, max_cells: int = 5_000_000,
                     extent: float | None = None) -> GridGraph:
    """``extent`` limits the grid to a cube of that half-width about the frame origin."""
    if h <= 0 or h > domain.diameter / 16:
        raise DomainError("need 0 < h <= diameter/16")
    frame = frame or Frame.full(domain)
    k, o, B = frame.k, frame.origin, frame.basis
    lo, hi = domain.bbox()
    R = float(np.linalg.norm(np.maximum(np.abs(lo - o), np.abs(hi - o))))
    if extent is not None:
        R = min(R, extent)
    m = int(math.ceil(R / h))
    side = 2 * m
    if side**k > max_cells:
        raise DomainError(f"grid of {side}^{k} cells exceeds the budget; use a line frame or larger h")
    idx = np.indices((side,) * k).reshape(k, -1).T - m
    pts = o + (h * (idx + 0.5)) @ B
    keep = domain._inside(pts)
    keep[keep] = delta_batch(domain, pts[keep]) >= 0.5 * h
    if not np.any(keep):
        raise DomainError("empty node set")
    flat = np.flatnonzero(keep)
    nodes, index = pts[keep], idx[keep]
    lookup = np.full(side**k, -1, dtype=np.int64)
    lookup[flat] = np.arange(len(flat))

    I, J = [], []
    for off in np.ndindex(*(3,) * k):
        off = np.array(off) - 1
        nz = off[off != 0]
        if len(nz) == 0 or nz[0] < 0:
            continue  # one orientation per undirected edge
        nb = index + off
        inside = np.all((nb >= -m) & (nb < m), axis=1)
        j = np.full(len(index), -1)
        j[inside] = lookup[np.ravel_multi_index((nb[inside] + m).T, (side,) * k)]
        ok = j >= 0
        I.append(np.flatnonzero(ok))
        J.append(j[ok])
    I, J = np.concatenate(I), np.concatenate(J)
    a, b = nodes[I], nodes[J]
    # every quadrature point must lie in the domain
    X = (a[:, None, :] + QUAD[None, :, None] * (b - a)[:, None, :]).reshape(-1, a.shape[1])
    good = domain._inside(X).reshape(-1, 3).all(axis=1) & _segments_clear(domain, a, b)
    I, J, a, b = I[good], J[good], a[good], b[good]
    w = segment_length(domain, a, b)
    fin = np.isfinite(w) & (w > 0)
    I, J, w = I[fin], J[fin], w[fin]
    N = len(nodes)
    adj = csr_matrix((np.concatenate([w, w]), (np.concatenate([I, J]), np.concatenate([J, I]))), shape=(N, N))
    adj.sort_indices()
    _, comp = connected_components(adj, directed=False)
    return GridGraph(domain, h, frame, nodes, index, adj, comp)


# --- shortest paths --------------------------------------------------------


def _dijkstra(adj, src, target=None):
    """Heap Dijkstra; equal tentative distances keep the smaller predecessor index."""
    indptr, indices, data = adj.indptr.tolist(), adj.indices.tolist(), adj.data.tolist()
    N = adj.shape[0]
    dist = [math.inf] * N
    pred = [-1] * N
    done = [False] * N
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == target:
            break
        for e in range(indptr[u], indptr[u + 1]):
            v = indices[e]
            if done[v]:
                continue
            nd = d + data[e]
            if nd < dist[v] or (nd == dist[v] and u < pred[v]):
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    return np.array(dist), np.array(pred)


def _cache_key(graph, src):
    base = graph.domain.base if isinstance(graph.domain, Punctured) else graph.domain
    try:
        cfg = domain_to_config(graph.domain)
    except DomainError:
        cfg = repr(base)
    if isinstance(graph.domain, Punctured) and isinstance(graph.domain.obstacle, RasterObstacle):
        cfg += hashlib.sha256(graph.domain.obstacle.cells.tobytes()).hexdigest()
    hsh = hashlib.sha256()
    hsh.update(cfg.encode())
    hsh.update(repr(float(graph.h)).encode())
    hsh.update(graph.frame.key())
    hsh.update(str(int(src)).encode())
    return hsh.hexdigest()


def distance_field(graph: GridGraph, src: int, cache_dir=None):
    """(dist, pred) from node src over the whole graph, optionally memoized on disk."""
    if cache_dir is not None:
        path = Path(cache_dir) / f"{_cache_key(graph, src)}.npz"
        if path.exists():
            f = np.load(path)
            return f["dist"], f["pred"]
    dist, pred = _dijkstra(graph.adj, src)
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        np.savez(path, dist=dist, pred=pred)
    return dist, pred


def _walk(pred, a, b):
    out = [b]
    while out[-1] != a:
        out.append(int(pred[out[-1]]))
    return out[::-1]


def shortest_node_path(graph: GridGraph, i: int, j: int, cache_dir=None):
    """(distance, node ids) between nodes; always searched from the smaller index."""
    if graph.components[i] != graph.components[j]:
        raise DomainError("endpoints lie in different graph components")
    if i == j:
        return 0.0, [i]
    a, b = min(i, j), max(i, j)
    if cache_dir is None:
        dist, pred = _dijkstra(graph.adj, a, b)
    else:
        dist, pred = distance_field(graph, a, cache_dir)
    ids = _walk(pred, a, b)
    return float(dist[b]), ids if a == i else ids[::-1]


def kob_distance_graph(graph: GridGraph, z, w, cache_dir=None):
    z = as_point(z, graph.domain.dim)
    w = as_point(w, graph.domain.dim)
    if np.array_equal(z, w):
        return 0.0, [z]
    d, ids = shortest_node_path(graph, graph.snap(z), graph.snap(w), cache_dir)
    return d, [graph.nodes[i] for i in ids]


# --- certified paths -------------------------------------------------------


@dataclass
class CertifiedPath:
    t: np.ndarray
    z: np.ndarray
    lam: float = 1.0
    kappa: float = 0.0
    kappa_eff: float = 0.0
    residuals: np.ndarray | None = None
    speed_violations: int = 0
    sandwich_violations: int = 0
    certified: bool = False

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.z))

    @property
    def passed(self):
        return self.certified and self.speed_violations == 0 and self.sandwich_violations == 0

    def to_csv(self, path):
        cols = ["t"] + [f"x{i}" for i in range(self.z.shape[1])]
        data = np.column_stack([self.t, self.z])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")


def reparametrize_unit_speed(path, graph: GridGraph) -> CertifiedPath:
    pts = np.atleast_2d(np.asarray(path, float))
    if len(pts) > 1:
        keep = np.r_[True, np.any(np.diff(pts, axis=0) != 0, axis=1)]
        pts = pts[keep]
    if len(pts) == 1:
        return CertifiedPath(np.zeros(1), pts)
    ids = graph.node_ids(pts)
    steps = np.empty(len(pts) - 1)
    for e in range(len(steps)):
        w = graph.weight(ids[e], ids[e + 1])
        steps[e] = w if w is not None else segment_length(graph.domain, pts[e], pts[e + 1])[0]
    return CertifiedPath(np.r_[0.0, np.cumsum(steps)], pts)


def kappa_effective(kappa, h):
    return kappa + 2.0 * C_DISC * h


def decimate(m, cap=200):
    return np.unique(np.round(np.linspace(0, m - 1, min(m, cap))).astype(int))


def certify_almost_geodesic(domain, path: CertifiedPath, graph: GridGraph, lam: float, kappa: float) -> CertifiedPath:
    """Check the (lam, kappa_eff) distance sandwich on decimated pairs and the speed bound per edge."""
    if lam < 1 or kappa < 0:
        raise DomainError("need lambda >= 1 and kappa >= 0")
    keff = kappa_effective(kappa, graph.h)
    if len(path.t) == 1:
        return replace(path, lam=lam, kappa=kappa, kappa_eff=keff, residuals=np.zeros(0), certified=True)
    sel = decimate(len(path.t))
    ids = graph.node_ids(path.z[sel])
    K = dijkstra(graph.adj, directed=False, indices=ids)[:, ids]
    ts = path.t[sel]
    s, t = np.triu_indices(len(sel), 1)
    dt = np.abs(ts[t] - ts[s])
    Kst = K[s, t]
    slack = np.minimum(Kst - (dt / lam - keff), lam * dt + keff - Kst)
    # speed: Kobayashi length of each chord over its parameter increment
    a, b = path.z[:-1], path.z[1:]
    L = segment_length(domain, a, b)
    dtt = np.diff(path.t)
    mid, d = 0.5 * (a + b), b - a
    _, up = estimate_batch(domain, mid, d / np.linalg.norm(d, axis=1, keepdims=True))
    speed_bad = int(np.sum(L / dtt > lam + 2 * graph.h * up))
    return replace(path, lam=lam, kappa=kappa, kappa_eff=keff, residuals=slack,
                   speed_violations=speed_bad, sandwich_violations=int(np.sum(slack < 0)),
                   certified=True)


def lipschitz_constant(path: CertifiedPath) -> float:
    """Max Euclidean speed; for piecewise-linear paths the max over pairs is attained on edges."""
    if len(path.t) < 2:
        raise DomainError("need at least two samples")
    dt = np.diff(path.t)
    if np.any(dt <= 0):
        raise DomainError("duplicate parameters")
    return float(np.max(np.linalg.norm(np.diff(path.z, axis=0), axis=1) / dt))


def detour_path(graph: GridGraph, i: int, j: int, extra: float):
    """Node path i -> d -> j whose length exceeds the shortest by at least ``extra``
    (the smallest such excess over all detour nodes d)."""
    D = dijkstra(graph.adj, directed=False, indices=[i, j])
    excess = D[0] + D[1] - D[0, j]
    cand = np.flatnonzero(np.isfinite(excess) & (excess >= extra))
    if len(cand) == 0:
        raise DomainError("no detour node with the requested excess")
    d = int(cand[np.argmin(excess[cand])])
    _, p1 = shortest_node_path(graph, i, d)
    _, p2 = shortest_node_path(graph, d, j)
    return p1 + p2[1:], float(excess[d])


# --- experiments -----------------------------------------------------------


def random_interior_points(domain, rng, size, min_delta, avoid=0.0, budget=100_000):
    lo, hi = domain.bbox()
    out = []
    for _ in range(budget):
        x = rng.uniform(lo, hi, size=(max(4 * size, 64), domain.dim))
        ok = domain._inside(x)
        x = x[ok]
        if len(x):
            ok = delta_batch(domain, x) >= min_delta
            if isinstance(domain, Punctured) and avoid > 0:
                ok &= domain.obstacle.distance(x) >= avoid
            out.extend(x[ok])
        if len(out) >= size:
            return np.array(out[:size])
    raise DomainError("could not sample interior points")


@dataclass
class EqualityReport:
    max_gap: float
    gaps: list
    through_obstacle: list
    h: float


def distance_equality_check(punctured, base, pairs: int, h: float, seed: int, min_delta=0.05) -> EqualityReport:
    """Graph distances in the punctured domain vs the base on identical frames and h.

    Odd-numbered pairs are chosen so the straight segment z -> w passes through an
    obstacle point.
    """
    if punctured is not base and not (isinstance(punctured, Punctured) and punctured.base is base):
        raise DomainError("grid misalignment: punctured domain is not built on this base")
    rng = np.random.default_rng(seed)
    avoid = 2 * h
    gaps, through = [], []
    for k in range(pairs):
        z = random_interior_points(punctured, rng, 1, min_delta, avoid)[0]
        if k % 2 and isinstance(punctured, Punctured):
            p = punctured.obstacle.centers()[rng.integers(len(punctured.obstacle.centers()))]
            u = (p - z) / np.linalg.norm(p - z)
            for _ in range(1000):
                w = p + rng.uniform(0.05, 1.0) * punctured.diameter / 2 * u
                if contains(punctured, w) and delta_batch(punctured, w)[0] >= max(min_delta, avoid):
                    break
            else:
                w = random_interior_points(punctured, rng, 1, min_delta, avoid)[0]
            through.append(True)
        else:
            w = random_interior_points(punctured, rng, 1, min_delta, avoid)[0]
            through.append(False)
        fr = line_frame(base, z, w)
        gp = build_grid_graph(punctured, h, fr)
        gb = gp if punctured is base else build_grid_graph(base, h, fr)
        dp, _ = kob_distance_graph(gp, z, w)
        db, _ = kob_distance_graph(gb, z, w)
        gaps.append(abs(dp - db) / db)
    return EqualityReport(float(max(gaps)), gaps, through, h)


@dataclass
class LogBoundFit:
    C: float
    alpha: float
    violations: int
    log_inv_delta: np.ndarray
    distance: np.ndarray


def log_bound_fit(domain, z0, samples: int, h: float, seed: int, dmin=None, dmax=0.3) -> LogBoundFit:
    """Fit K(z, z0) <= C + alpha log(1/delta(z)) for z approaching the outer boundary.

    delta and K are evaluated at the snapped grid node so both sides refer to the same point.
    """
    z0 = as_point(z0, domain.dim)
    if not contains(domain, z0):
        raise DomainError("z0 outside the domain")
    dmin = 2 * h if dmin is None else dmin
    rng = np.random.default_rng(seed)
    base = domain.base if isinstance(domain, Punctured) else domain
    X, Y = [], []
    for _ in range(samples):
        xi = base.sample_boundary(rng, 1)[0]
        d = math.exp(rng.uniform(math.log(dmin), math.log(dmax)))
        z = xi + d * base.inward_normal(xi)
        if not contains(domain, z):
            continue
        if isinstance(domain, Punctured) and domain.obstacle.distance(z[None])[0] < 2 * h:
            continue
        g = build_grid_graph(domain, h, line_frame(domain, z, z0))
        try:
            i, j = g.snap(z), g.snap(z0)
            K, _ = shortest_node_path(g, i, j)
        except DomainError:
            continue
        X.append(math.log(1.0 / delta_batch(domain, g.nodes[i])[0]))
        Y.append(K)
    if len(X) < 8:
        raise DomainError("fewer than 8 usable samples")
    X, Y = np.array(X), np.array(Y)
    alpha, _ = np.polyfit(X, Y, 1)
    shifted = Y - alpha * X
    C = float(np.max(shifted))
    return LogBoundFit(C, float(alpha), int(np.sum(shifted - C > 0)), X, Y)


def paths_to_svg(paths, path_out, plane=(0, 1), size=400, outline=True):
    """Polyline SVG of the (plane[0], plane[1]) coordinates of each path; unit circle for reference."""
    s = size / 2.4

    def px(p):
        return f"{size / 2 + s * p[plane[0]]:.2f},{size / 2 - s * p[plane[1]]:.2f}"

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">']
    if outline:
        lines.append(f'<circle cx="{size / 2}" cy="{size / 2}" r="{s:.2f}" fill="none" stroke="#999"/>')
    for p in paths:
        pts = " ".join(px(q) for q in np.atleast_2d(p))
        lines.append(f'<polyline points="{pts}" fill="none" stroke="#c33" stroke-width="1"/>')
    lines.append("</svg>")
    Path(path_out).write_text("\n".join(lines) + "\n")
