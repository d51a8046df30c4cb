"""Bounded domains in C^n = R^{2n}, boundary distance, and punctured domains.

Points are real arrays of length 2n laid out as (Re z1, Im z1, Re z2, Im z2, ...).
All batch helpers accept arrays of shape (..., 2n).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

BOUNDARY_TOL = 1e-9


class DomainError(ValueError):
    pass


def to_complex(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def to_real(z):
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def as_point(z, dim: int | None = None) -> np.ndarray:
    p = np.asarray(z, dtype=float)
    if p.ndim != 1 or p.size % 2 or not np.all(np.isfinite(p)):
        raise DomainError(f"not a point of R^(2n): {z!r}")
    if dim is not None and p.size != dim:
        raise DomainError(f"dimension mismatch: expected {dim}, got {p.size}")
    return p


# --- obstacles -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FinitePoints:
    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise DomainError("obstacle must be nonempty")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_tree", cKDTree(pts))

    @property
    def dim(self):
        return self.points.shape[1]

    def distance(self, x):
        """Euclidean distance to the point set."""
        d, _ = self._tree.query(np.asarray(x, dtype=float))
        return d

    def centers(self):
        return self.points

    @property
    def radius(self):
        return 0.0


@dataclass(frozen=True, eq=False)
class RasterObstacle:
    """Occupied cells of size h; each cell is the closed ball of radius h/2 about its center.

    ``index``/``origin`` are kept when the cells sit on an axis-aligned lattice
    (centers = origin + index * h) so the set can be written to a cell file.
    """

    h: float
    cells: np.ndarray
    index: np.ndarray | None = None
    origin: np.ndarray | None = None
    lipschitz: float = 1.0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.cells, dtype=float))
        if c.shape[0] == 0:
            raise DomainError("obstacle must be nonempty")
        if self.h <= 0:
            raise DomainError("cell size must be positive")
        object.__setattr__(self, "cells", c)
        object.__setattr__(self, "_tree", cKDTree(c))

    @classmethod
    def from_index(cls, h, index, origin=None, lipschitz=1.0):
        index = np.atleast_2d(np.asarray(index, dtype=np.int64))
        origin = np.zeros(index.shape[1]) if origin is None else np.asarray(origin, float)
        return cls(h, origin + index * h, index=index, origin=origin, lipschitz=lipschitz)

    @property
    def dim(self):
        return self.cells.shape[1]

    @property
    def radius(self):
        return 0.5 * self.h

    def centers(self):
        return self.cells

    def distance(self, x):
        d, _ = self._tree.query(np.asarray(x, dtype=float))
        return np.maximum(d - self.radius, 0.0)

    def near_cells(self, x, r):
        return self._tree.query_ball_point(np.asarray(x, dtype=float), r)


ObstacleSet = FinitePoints | RasterObstacle


# --- domains ---------------------------------------------------------------


class Domain:
    """Base class. Subclasses implement the batch primitives ``_inside`` and ``_delta``."""

    n: int
    pseudoconvex = False
    visibility_expected = True

    @property
    def dim(self):
        return 2 * self.n

    @property
    def center(self):
        return np.zeros(self.dim)

    def _inside(self, x):
        raise NotImplementedError

    def _delta(self, x):
        raise NotImplementedError

    def bbox(self):
        raise NotImplementedError

    def sample_boundary(self, rng, size):
        raise NotImplementedError

    def inward_normal(self, xi):
        g = self.center - xi
        return g / np.linalg.norm(g)


@dataclass(frozen=True, eq=False)
class UnitBall(Domain):
    n: int = 1
    pseudoconvex = True

    @property
    def diameter(self):
        return 2.0

    def _inside(self, x):
        return np.sum(x * x, axis=-1) < 1.0

    def _delta(self, x):
        return 1.0 - np.linalg.norm(x, axis=-1)

    def bbox(self):
        return -np.ones(self.dim), np.ones(self.dim)

    def sample_boundary(self, rng, size):
        v = rng.normal(size=(size, self.dim))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def inward_normal(self, xi):
        return -xi / np.linalg.norm(xi)


@dataclass(frozen=True, eq=False)
class Ellipsoid(Domain):
    """sum_j |z_j|^2 / a_j^2 < 1 with one semi-axis per complex coordinate."""

    n: int
    axes: tuple

    pseudoconvex = True

    def __post_init__(self):
        axes = tuple(float(a) for a in self.axes)
        if len(axes) != self.n or min(axes) <= 0:
            raise DomainError("ellipsoid needs n positive semi-axes")
        object.__setattr__(self, "axes", axes)

    @property
    def real_axes(self):
        return np.repeat(np.asarray(self.axes), 2)

    @property
    def diameter(self):
        return 2.0 * max(self.axes)

    def gauge(self, x):
        return np.sqrt(np.sum((x / self.real_axes) ** 2, axis=-1))

    def _inside(self, x):
        return self.gauge(x) < 1.0

    def _delta(self, x):
        # closest point y_i = b_i^2 x_i / (b_i^2 + t), root of sum b_i^2 x_i^2/(b_i^2+t)^2 = 1
        b2 = self.real_axes**2
        x = np.atleast_2d(x)
        lo = np.full(x.shape[0], -b2.min() * (1 - 1e-15))
        hi = np.zeros(x.shape[0])

        def f(t):
            return np.sum(b2 * x**2 / (b2 + t[:, None]) ** 2, axis=1) - 1.0

        # f is decreasing; f(0) < 0 inside, f -> +inf at -b_min^2
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            pos = f(mid) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
        t = 0.5 * (lo + hi)
        y = b2 * x / (b2 + t[:, None])
        d = np.linalg.norm(x - y, axis=1)
        # no root when x vanishes on the shortest axes: t sits at -b_min^2 and the
        # closest point fills the remaining gauge along a shortest axis
        bmin = b2.min()
        short = np.isclose(b2, bmin)
        deg = np.all(x[:, short] == 0, axis=1) & (f(np.full(len(x), -bmin * (1 - 1e-15))) <= 0)
        if np.any(deg):
            xs = x[deg][:, ~short]
            ys = b2[~short] * xs / (b2[~short] - bmin)
            fill = bmin * (1.0 - np.sum(ys**2 / b2[~short], axis=1))
            d[deg] = np.sqrt(np.sum((xs - ys) ** 2, axis=1) + np.maximum(fill, 0.0))
        return d

    def bbox(self):
        return -self.real_axes, self.real_axes

    def sample_boundary(self, rng, size):
        v = rng.normal(size=(size, self.dim))
        return v / self.gauge(v)[:, None]

    def inward_normal(self, xi):
        g = -xi / self.real_axes**2
        return g / np.linalg.norm(g)


@dataclass(frozen=True, eq=False)
class Bidisc(Domain):
    n: int = 2
    visibility_expected = False

    @property
    def diameter(self):
        return 2.0 * math.sqrt(2.0)

    def _moduli(self, x):
        return np.stack([np.hypot(x[..., 0], x[..., 1]), np.hypot(x[..., 2], x[..., 3])], axis=-1)

    def _inside(self, x):
        return np.all(self._moduli(x) < 1.0, axis=-1)

    def _delta(self, x):
        return 1.0 - np.max(self._moduli(x), axis=-1)

    def bbox(self):
        return -np.ones(4), np.ones(4)

    def sample_boundary(self, rng, size, face=None, unimodular=None):
        out = np.empty((size, 4))
        for k in range(size):
            j = rng.integers(2) if face is None else face
            th = rng.uniform(0, 2 * np.pi) if unimodular is None else unimodular
            r, ph = math.sqrt(rng.uniform()), rng.uniform(0, 2 * np.pi)
            z = [0j, 0j]
            z[j] = complex(math.cos(th), math.sin(th))
            z[1 - j] = r * complex(math.cos(ph), math.sin(ph))
            out[k] = to_real(np.array(z))
        return out

    def face_of(self, xi):
        m = self._moduli(xi)
        return int(np.argmax(m))

    def inward_normal(self, xi):
        j = self.face_of(xi)
        g = np.zeros(4)
        g[2 * j : 2 * j + 2] = -xi[2 * j : 2 * j + 2]
        return g / np.linalg.norm(g)


@dataclass(frozen=True, eq=False)
class DefiningFunction(Domain):
    """{rho < 0} inside a bounding box; ``grad`` is the gradient oracle of rho."""

    n: int
    rho: Callable
    grad: Callable
    box: tuple
    pseudoconvex: bool = False
    expr: str | None = None
    interior_point: np.ndarray | None = None

    @classmethod
    def from_expression(cls, n, expr, box, pseudoconvex=False, interior_point=None):
        import sympy

        syms = sympy.symbols(f"x0:{2 * n}")
        e = sympy.sympify(expr, locals={f"x{i}": s for i, s in enumerate(syms)})
        f = sympy.lambdify(syms, e, "numpy")
        gs = [sympy.lambdify(syms, sympy.diff(e, s), "numpy") for s in syms]

        def rho(x):
            x = np.asarray(x, float)
            return np.asarray(f(*np.moveaxis(x, -1, 0)), float) + 0 * x[..., 0]

        def grad(x):
            x = np.asarray(x, float)
            cols = [np.asarray(g(*np.moveaxis(x, -1, 0)), float) + 0 * x[..., 0] for g in gs]
            return np.stack(cols, axis=-1)

        lo, hi = box
        return cls(n, rho, grad, (tuple(map(float, lo)), tuple(map(float, hi))),
                   pseudoconvex, expr, None if interior_point is None else np.asarray(interior_point, float))

    @property
    def center(self):
        if self.interior_point is not None:
            return np.asarray(self.interior_point, float)
        lo, hi = self.bbox()
        return 0.5 * (lo + hi)

    @property
    def diameter(self):
        lo, hi = self.bbox()
        return float(np.linalg.norm(hi - lo))

    def bbox(self):
        return np.asarray(self.box[0], float), np.asarray(self.box[1], float)

    def _inside(self, x):
        lo, hi = self.bbox()
        return (self.rho(x) < 0) & np.all((x > lo) & (x < hi), axis=-1)

    def _project(self, y, steps=8):
        for _ in range(steps):
            g = self.grad(y)
            y = y - (self.rho(y) / np.sum(g * g, axis=-1))[..., None] * g
        return y

    def _delta(self, x, iters=50):
        # alternating level-set projection and tangential pull toward x
        x = np.atleast_2d(x)
        y = self._project(x.copy())
        for _ in range(iters):
            g = self.grad(y)
            nrm = g / np.linalg.norm(g, axis=-1, keepdims=True)
            d = x - y
            y = self._project(y + d - np.sum(d * nrm, axis=-1, keepdims=True) * nrm, steps=3)
        return np.linalg.norm(x - y, axis=-1)

    def sample_boundary(self, rng, size):
        c = self.center
        out = np.empty((size, self.dim))
        for k in range(size):
            d = rng.normal(size=self.dim)
            d /= np.linalg.norm(d)
            lo, hi = 0.0, self.diameter
            for _ in range(100):
                mid = 0.5 * (lo + hi)
                if self._inside(c + mid * d):
                    lo = mid
                else:
                    hi = mid
            out[k] = self._project(c + lo * d)
        return out

    def inward_normal(self, xi):
        g = -self.grad(xi)
        return g / np.linalg.norm(g)


@dataclass(frozen=True, eq=False)
class Punctured(Domain):
    base: Domain
    obstacle: FinitePoints | RasterObstacle

    def __post_init__(self):
        if isinstance(self.base, Punctured):
            raise DomainError("nested punctures are not supported")
        if self.obstacle.dim != self.base.dim:
            raise DomainError("obstacle dimension does not match base domain")
        c = self.obstacle.centers()
        if not np.all(self.base._inside(c)):
            raise DomainError("obstacle not contained in the base domain")
        clear = np.min(np.atleast_1d(self.base._delta(c))) - self.obstacle.radius
        need = 10 * self.obstacle.h if isinstance(self.obstacle, RasterObstacle) else 0.0
        if clear <= need:
            raise DomainError(f"obstacle clearance {clear:.3g} from the outer boundary below {need:.3g}")

    @property
    def n(self):
        return self.base.n

    @property
    def pseudoconvex(self):
        return False

    @property
    def visibility_expected(self):
        return self.base.visibility_expected

    @property
    def diameter(self):
        return self.base.diameter

    @property
    def center(self):
        return self.base.center

    def bbox(self):
        return self.base.bbox()

    def _inside(self, x):
        ok = self.base._inside(x)
        d = self.obstacle.distance(x)
        return ok & (np.asarray(d) > 0)

    def _delta(self, x):
        return np.minimum(self.base._delta(x), self.obstacle.distance(x))

    def sample_boundary(self, rng, size):
        return self.base.sample_boundary(rng, size)

    def sample_obstacle_point(self, rng):
        ob = self.obstacle
        c = ob.centers()[rng.integers(len(ob.centers()))]
        if isinstance(ob, FinitePoints):
            return c.copy()
        d = rng.normal(size=self.dim)
        return c + ob.radius * d / np.linalg.norm(d)

    def inward_normal(self, xi):
        return self.base.inward_normal(xi)


# --- domain operations -----------------------------------------------------


def contains(domain: Domain, z) -> bool:
    p = as_point(z, domain.dim)
    return bool(domain._inside(p[None])[0])


def delta_boundary(domain: Domain, z) -> float:
    p = as_point(z, domain.dim)
    if not contains(domain, p):
        raise DomainError("point outside the domain")
    return float(np.atleast_1d(domain._delta(p[None]))[0])


def delta_batch(domain: Domain, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, float))
    return np.atleast_1d(domain._delta(x))


def sample_boundary_point(domain: Domain, rng, obstacle_prob=0.25, **kw):
    if isinstance(domain, Punctured) and rng.uniform() < obstacle_prob:
        return domain.sample_obstacle_point(rng)
    return domain.sample_boundary(rng, 1, **kw)[0]


def sample_boundary_pair(domain: Domain, min_separation: float, seed: int,
                         obstacle_prob=0.25, budget=10_000, same_face=False):
    """Two boundary points at least ``min_separation`` apart, deterministic in ``seed``.

    ``same_face`` (bidisc only) draws both points on one face {|z_j| = 1} with a shared
    unimodular coordinate, the configuration where product domains lose visibility.
    """
    if min_separation >= domain.diameter:
        raise DomainError("min_separation must be below the diameter")
    rng = np.random.default_rng(seed)
    for _ in range(budget):
        if same_face and isinstance(domain, Bidisc):
            j = int(rng.integers(2))
            th = rng.uniform(0, 2 * np.pi)
            xi = domain.sample_boundary(rng, 1, face=j, unimodular=th)[0]
            eta = domain.sample_boundary(rng, 1, face=j, unimodular=th)[0]
        else:
            xi = sample_boundary_point(domain, rng, obstacle_prob)
            eta = sample_boundary_point(domain, rng, obstacle_prob)
        if np.linalg.norm(xi - eta) >= min_separation:
            return xi, eta
    raise DomainError("rejection-sampling budget exhausted")


def boundary_distance_residual(domain: Domain, xi) -> float:
    """Distance of xi from the boundary, valid for points on either side of it."""
    xi = as_point(xi, domain.dim)
    base = domain.base if isinstance(domain, Punctured) else domain
    if isinstance(base, UnitBall):
        r = abs(1 - np.linalg.norm(xi))
    elif isinstance(base, Bidisc):
        m = base._moduli(xi)
        r = abs(1 - m.max()) if m.max() >= 1 - BOUNDARY_TOL else 1 - m.max()
    elif isinstance(base, Ellipsoid):
        r = abs(1 - base.gauge(xi)) * min(base.axes)
    else:
        g = base.grad(xi)
        r = abs(float(base.rho(xi))) / np.linalg.norm(g)
    if isinstance(domain, Punctured):
        r = min(r, float(domain.obstacle.distance(xi[None])[0]))
    return float(r)


def classify_boundary_point(domain: Punctured, xi, tol=BOUNDARY_TOL) -> str:
    if not isinstance(domain, Punctured):
        raise DomainError("classification needs a punctured domain")
    xi = as_point(xi, domain.dim)
    d_obs = float(domain.obstacle.distance(xi[None])[0])
    d_out = boundary_distance_residual(domain.base, xi)
    if d_obs <= tol * domain.diameter:
        return "Obstacle"
    if d_out <= tol * domain.diameter:
        return "OuterBoundary"
    raise DomainError("point is not on the boundary")


# --- config / raster files -------------------------------------------------


def parse_config(text: str) -> dict:
    cfg = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DomainError(f"bad config line: {line!r}")
        k, v = line.split("=", 1)
        cfg[k.strip()] = v.strip()
    return cfg


def _floats(s):
    return [float(t) for t in s.replace(",", " ").split()]


def domain_from_config(cfg: dict, base_dir: Path | str = ".") -> Domain:
    kind = cfg.get("kind")
    n = int(cfg.get("n", 2 if kind == "bidisc" else 1))
    if kind == "ball":
        dom = UnitBall(n)
    elif kind == "ellipsoid":
        dom = Ellipsoid(n, tuple(_floats(cfg["axes"])))
    elif kind == "bidisc":
        dom = Bidisc()
    elif kind == "defining":
        box = _floats(cfg["box"])
        lo, hi = box[: 2 * n], box[2 * n :]
        ip = _floats(cfg["interior"]) if "interior" in cfg else None
        dom = DefiningFunction.from_expression(n, cfg["rho"], (lo, hi),
                                               cfg.get("pseudoconvex", "false") == "true", ip)
    else:
        raise DomainError(f"unknown domain kind {kind!r}")
    if "punctures" in cfg:
        pts = [_floats(p) for p in cfg["punctures"].split(";") if p.strip()]
        dom = Punctured(dom, FinitePoints(np.array(pts)))
    elif "raster" in cfg:
        dom = Punctured(dom, read_raster(Path(base_dir) / cfg["raster"]))
    return dom


def _fmt(x):
    return repr(float(x))


def domain_to_config(domain: Domain, raster_path: str | None = None) -> str:
    base = domain.base if isinstance(domain, Punctured) else domain
    lines = []
    if isinstance(base, UnitBall):
        lines += ["kind = ball", f"n = {base.n}"]
    elif isinstance(base, Ellipsoid):
        lines += ["kind = ellipsoid", f"n = {base.n}", "axes = " + ", ".join(map(_fmt, base.axes))]
    elif isinstance(base, Bidisc):
        lines += ["kind = bidisc", "n = 2"]
    elif isinstance(base, DefiningFunction):
        if base.expr is None:
            raise DomainError("only expression-based defining functions serialize")
        lo, hi = base.bbox()
        lines += ["kind = defining", f"n = {base.n}", f"rho = {base.expr}",
                  "box = " + ", ".join(map(_fmt, np.concatenate([lo, hi]))),
                  f"pseudoconvex = {'true' if base.pseudoconvex else 'false'}"]
        if base.interior_point is not None:
            lines.append("interior = " + ", ".join(map(_fmt, base.interior_point)))
    if isinstance(domain, Punctured):
        ob = domain.obstacle
        if isinstance(ob, FinitePoints):
            lines.append("punctures = " + "; ".join(" ".join(map(_fmt, p)) for p in ob.points))
        else:
            lines.append(f"raster = {raster_path or 'obstacle.cells'}")
    return "\n".join(lines) + "\n"


def write_raster(path, raster: RasterObstacle):
    if raster.index is None:
        raise DomainError("raster is not lattice-aligned; cannot write a cell-index file")
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"# h = {raster.h!r}\n# n = {raster.dim // 2}\n")
        fh.write("# origin = " + " ".join(repr(float(o)) for o in raster.origin) + "\n")
        fh.write(f"# lipschitz = {raster.lipschitz!r}\n")
        for row in raster.index:
            fh.write(" ".join(str(int(i)) for i in row) + "\n")


def read_raster(path) -> RasterObstacle:
    header, rows = {}, []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            k, _, v = line[1:].partition("=")
            header[k.strip()] = v.strip()
        else:
            rows.append([int(t) for t in line.split()])
    h, n = float(header["h"]), int(header["n"])
    origin = np.array(_floats(header["origin"])) if "origin" in header else np.zeros(2 * n)
    idx = np.array(rows, dtype=np.int64).reshape(-1, 2 * n) if rows else np.zeros((0, 2 * n), np.int64)
    return RasterObstacle.from_index(h, idx, origin, float(header.get("lipschitz", 1.0)))
