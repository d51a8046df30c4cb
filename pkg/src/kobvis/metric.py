"""Two-sided bounds for the infinitesimal Kobayashi metric and the M-function.

Batch functions take real arrays ``x`` (points) and ``v`` (vectors) of shape (m, 2n)
and return per-row values for the *unit* direction of v times |v|.
"""
from __future__ import annotations

import csv
import json
import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    Bidisc, Domain, DomainError, Ellipsoid, FinitePoints, Punctured,
    RasterObstacle, UnitBall, as_point, contains, delta_batch, to_complex, to_real,
)

DISC_ANGLES = 64
DISC_BISECTIONS = 40
TILT = 1e-9
HIT_TOL = 1e-12


@dataclass(frozen=True)
class MetricBound:
    lower: float
    upper: float

    @property
    def mid(self):
        return 0.5 * (self.lower + self.upper)


def _hdot(a, b):
    """Hermitian inner product <a, b> = sum a_j conj(b_j) along the last axis."""
    return np.sum(a * np.conj(b), axis=-1)


def _prep(x, v):
    x = np.atleast_2d(np.asarray(x, float))
    v = np.atleast_2d(np.asarray(v, float))
    nv = np.linalg.norm(v, axis=1)
    if np.any(nv == 0):
        raise DomainError("zero tangent vector")
    return x, to_complex(x), to_complex(v) / nv[:, None], nv


# --- exact oracles ---------------------------------------------------------


def ball_metric(x, v):
    x, z, u, nv = _prep(x, v)
    s = 1.0 - np.sum(x * x, axis=1)
    return nv * np.sqrt(1.0 / s + np.abs(_hdot(z, u)) ** 2 / s**2)


def bidisc_metric(x, v):
    x, z, u, nv = _prep(x, v)
    return nv * np.max(np.abs(u) / (1.0 - np.abs(z) ** 2), axis=1)


def kob_metric_ball_exact(n: int, z, v) -> float:
    z = as_point(z, 2 * n)
    if z @ z >= 1.0:
        raise DomainError("point outside the unit ball")
    return float(ball_metric(z, as_point(v, 2 * n))[0])


def kob_distance_ball_exact(z, w) -> float:
    """Kobayashi distance of the unit ball: artanh of the Mobius-invariant pseudo-distance."""
    a, b = to_complex(np.asarray(z, float)), to_complex(np.asarray(w, float))
    num = (1 - np.vdot(a, a).real) * (1 - np.vdot(b, b).real)
    den = abs(1 - np.vdot(a, b)) ** 2
    return float(np.arctanh(math.sqrt(max(1 - num / den, 0.0))))


# --- centered analytic discs ----------------------------------------------


def _base_disc_radius(base: Domain, x, z, u):
    """sup r with {z + zeta r u : |zeta| < 1} inside the (unpunctured) base."""
    if isinstance(base, UnitBall):
        b = np.abs(_hdot(z, u))
        return -b + np.sqrt(b * b + 1.0 - np.sum(x * x, axis=1))
    if isinstance(base, Ellipsoid):
        a = np.asarray(base.axes)
        zs, us = z / a, u / a
        b = np.abs(_hdot(zs, us))
        uu = np.sum(np.abs(us) ** 2, axis=1)
        c0 = 1.0 - np.sum(np.abs(zs) ** 2, axis=1)
        return (-b + np.sqrt(b * b + uu * c0)) / uu
    if isinstance(base, Bidisc):
        with np.errstate(divide="ignore"):
            return np.min((1.0 - np.abs(z)) / np.abs(u), axis=1)
    return _bisect_disc_radius(base, x, u)


def _bisect_disc_radius(base, x, u):
    # boundary-circle sampling; for convex bases the true disc of radius r*cos(pi/K) is inside
    ang = np.exp(2j * np.pi * np.arange(DISC_ANGLES) / DISC_ANGLES)
    lo = np.zeros(len(x))
    hi = np.full(len(x), base.diameter)
    for _ in range(DISC_BISECTIONS):
        mid = 0.5 * (lo + hi)
        pts = to_real(to_complex(x)[:, None, :] + (mid[:, None, None] * ang[None, :, None]) * u[:, None, :])
        ok = np.all(base._inside(pts.reshape(-1, x.shape[1])).reshape(len(x), -1), axis=1)
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    return lo * math.cos(math.pi / DISC_ANGLES)


def _obstacle_disc_cap(ob, x, z, u, r):
    """Shrink centered-disc radii r so the discs miss the obstacle."""
    r = r.copy()
    if isinstance(ob, FinitePoints):
        q = to_complex(ob.points)[None, :, :] - z[:, None, :]
        beta = _hdot(q, u[:, None, :])
        perp = np.linalg.norm(q - beta[..., None] * u[:, None, :], axis=2)
        cap = np.where(perp <= HIT_TOL, np.abs(beta), np.inf)
        return np.minimum(r, cap.min(axis=1))
    rad = ob.radius
    C = to_complex(ob.cells)
    grp = _line_groups(z - _hdot(z, u)[:, None] * u, u)
    for g in np.unique(grp):
        rows = np.flatnonzero(grp == g)
        i0 = rows[0]
        # distance from each cell to the common complex line
        q = C - z[i0]
        b0 = _hdot(q, u[i0][None, :])
        perp = np.linalg.norm(q - b0[:, None] * u[i0], axis=1)
        hit = perp < rad
        if not np.any(hit):
            continue
        qh, sh = q[hit], np.sqrt(rad**2 - perp[hit] ** 2)
        for chunk in _chunks(rows, len(qh)):
            beta = _hdot(qh[None, :, :] + (z[i0] - z[chunk])[:, None, :], u[chunk][:, None, :])
            cap = np.abs(beta) - sh[None, :]
            r[chunk] = np.minimum(r[chunk], np.maximum(cap.min(axis=1), 0.0))
    return r


def _chunks(rows, width, budget=400_000):
    return np.array_split(rows, max(1, len(rows) * max(width, 1) // budget + 1))


def disc_radius(domain: Domain, x, v):
    x, z, u, _ = _prep(x, v)
    if isinstance(domain, Punctured):
        r = _base_disc_radius(domain.base, x, z, u)
        return _obstacle_disc_cap(domain.obstacle, x, z, u, r)
    return _base_disc_radius(domain, x, z, u)


def upper_disc(domain: Domain, x, v):
    x = np.atleast_2d(np.asarray(x, float))
    nv = np.linalg.norm(np.atleast_2d(v), axis=1)
    r = disc_radius(domain, x, v)
    with np.errstate(divide="ignore"):
        return nv / r


def kob_metric_upper_disc(domain: Domain, z, v) -> float:
    z = as_point(z, domain.dim)
    if not contains(domain, z):
        raise DomainError("point outside the domain")
    return float(upper_disc(domain, z, as_point(v, domain.dim))[0])


# --- tilted extremal discs for punctured domains ---------------------------


def _tilt_direction(u, o):
    """Unit vectors orthogonal to u (and to o when the dimension allows).

    Gram-Schmidt of each coordinate axis against {u, o/|o|}; keeps the best-conditioned one.
    """
    m, n = u.shape
    E = np.broadcast_to(np.eye(n, dtype=complex), (m, n, n)).copy()
    E -= np.conj(u)[:, :, None] * u[:, None, :]
    on = np.linalg.norm(o, axis=1)
    use_o = (n >= 3) & (on > 1e-12)
    oh = np.where(use_o[:, None], o / np.where(on > 0, on, 1.0)[:, None], 0.0)
    E -= np.sum(E * np.conj(oh)[:, None, :], axis=2)[:, :, None] * oh[:, None, :]
    nn = np.linalg.norm(E, axis=2)
    k = np.argmax(nn, axis=1)
    rows = np.arange(m)
    return E[rows, k] / nn[rows, k][:, None]


def _line_groups(o, u):
    """Group rows lying on the same complex line (foot point o, direction u up to phase)."""
    j = np.argmax(np.abs(u), axis=1)
    ph = np.abs(u[np.arange(len(u)), j]) / u[np.arange(len(u)), j]
    key = np.round(np.hstack([to_real(o), to_real(u * ph[:, None])]), 9)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    return inv.ravel()


def _tilt_valid(ob, o, u, w, F, image, eps, diam):
    """Whether zeta -> o + F(zeta) u + eps zeta^2 w misses the obstacle.

    Points: the quadratic term reaches w-coordinate gamma only at zeta = +-sqrt(gamma/eps),
    so F is checked at those two roots. Cells (balls of radius rad): away from
    |zeta|^2 <= (|gamma| + rad)/eps the w-offset alone clears the cell, and inside it
    ``image(rows, rho)`` gives the disc (center, radius) covering F(|zeta| <= rho).
    """
    tol = HIT_TOL * diam
    C = to_complex(ob.centers())
    rad = ob.radius
    if isinstance(ob, FinitePoints):
        q = C[None, :, :] - o[:, None, :]
        beta = _hdot(q, u[:, None, :])
        gam = _hdot(q, w[:, None, :])
        rest = np.linalg.norm(q - beta[..., None] * u[:, None, :] - gam[..., None] * w[:, None, :], axis=2)
        s = np.sqrt(gam / eps[:, None])
        rows = np.broadcast_to(np.arange(len(o))[:, None], s.shape)
        miss = np.minimum(np.abs(F(rows, s) - beta), np.abs(F(rows, -s) - beta)) > tol
        hit = (rest <= tol) & (np.abs(gam) < eps[:, None]) & ~miss
        return ~np.any(hit, axis=1)
    ok = np.ones(len(o), bool)
    grp = _line_groups(o, u)
    for g in np.unique(grp):
        rows = np.flatnonzero(grp == g)
        i0 = rows[0]
        q = C - o[i0]
        beta = _hdot(q, u[i0][None, :])
        perp = np.linalg.norm(q - beta[:, None] * u[i0], axis=1)
        near = perp <= rad + eps[rows].max() + tol
        if not np.any(near):
            continue
        qn = q[near]
        for chunk in _chunks(rows, len(qn)):
            qi = qn[None, :, :] + (o[i0] - o[chunk])[:, None, :]
            b = _hdot(qi, u[chunk][:, None, :])
            gam = _hdot(qi, w[chunk][:, None, :])
            rho = np.sqrt(np.minimum(1.0, (np.abs(gam) + rad + tol) / eps[chunk][:, None]))
            cen, r = image(np.broadcast_to(chunk[:, None], rho.shape), rho)
            ok[chunk] = np.all(np.abs(b - cen) - r > rad + tol, axis=1)
    return ok


def upper_tilted(domain: Punctured, x, v):
    """Upper bound from the base domain's disc pushed off the obstacle by a quadratic tilt.

    The disc zeta -> f(t zeta) + eps zeta^2 w has derivative t f'(0) at 0, so it bounds
    the metric by k_base / t. Only for n >= 2 (w orthogonal to the disc direction) and
    ball or ellipsoid bases; other rows return inf.
    """
    x, z, u, nv = _prep(x, v)
    out = np.full(len(x), np.inf)
    base = domain.base
    if domain.n < 2 or not isinstance(base, (UnitBall, Ellipsoid)):
        return out
    ob = domain.obstacle
    # cells have positive radius, so they need a tilt of comparable size
    e0 = 4.0 * ob.radius if isinstance(ob, RasterObstacle) else 0.0
    if isinstance(base, UnitBall):
        b = _hdot(z, u)
        o = z - b[:, None] * u
        R = np.sqrt(np.maximum(1.0 - np.sum(np.abs(o) ** 2, axis=1), 0.0))
        a = b / R
        w = _tilt_direction(u, o)
        eps = np.maximum(TILT * R, e0)
        cross = np.abs(_hdot(w, o))
        mmax = np.sqrt(np.maximum(1.0 - (eps**2 + 2 * eps * cross) / R**2, 0.0))
        t = (mmax - np.abs(a)) / (1.0 - mmax * np.abs(a))
        kb = R / (R**2 - np.abs(b) ** 2)

        def F(i, s):
            y = t[i] * s
            return R[i] * (y + a[i]) / (1 + np.conj(a[i]) * y)

        def image(i, rho):
            # Mobius image of |y| <= t rho
            p, aa = t[i] * rho, a[i]
            den = 1 - np.abs(aa) ** 2 * p**2
            return R[i] * aa * (1 - p**2) / den, R[i] * p * (1 - np.abs(aa) ** 2) / den

        ok = t > 0
        if np.any(ok):
            ok[ok] = _tilt_valid(ob, o[ok], u[ok], w[ok], _sub(F, ok), _sub(image, ok), eps[ok], domain.diameter)
        out[ok] = nv[ok] * kb[ok] / t[ok]
        return out
    ax = np.asarray(base.axes)
    w = _tilt_direction(u, np.zeros_like(z))
    zs, us = z / ax, u / ax
    bb = np.abs(_hdot(zs, us))
    uu = np.sum(np.abs(us) ** 2, axis=1)
    c0 = 1.0 - np.sum(np.abs(zs) ** 2, axis=1)
    r0 = (-bb + np.sqrt(bb * bb + uu * c0)) / uu
    eps = np.maximum(TILT * r0, e0)
    nw = np.sqrt(np.sum(np.abs(w / ax) ** 2, axis=1))
    lim = (1.0 - eps * nw) ** 2
    rt = (-bb + np.sqrt(np.maximum(bb * bb + uu * (lim - (1.0 - c0)), 0.0))) / uu

    def F(i, s):
        return rt[i] * s

    def image(i, rho):
        return np.zeros(len(rho)), rt[i] * rho

    ok = rt > 0
    if np.any(ok):
        ok[ok] = _tilt_valid(ob, z[ok], u[ok], w[ok], _sub(F, ok), _sub(image, ok), eps[ok], domain.diameter)
    out[ok] = nv[ok] / rt[ok]
    return out


def _sub(fn, mask):
    """Re-index a row-indexed closure to the rows selected by mask."""
    rows = np.flatnonzero(mask)
    return lambda i, *args: fn(rows[i], *args)


# --- lower bounds ----------------------------------------------------------


def lower_pscvx(domain: Domain, c: float, x, v):
    x = np.atleast_2d(np.asarray(x, float))
    nv = np.linalg.norm(np.atleast_2d(v), axis=1)
    return c * nv / np.sqrt(delta_batch(domain, x))


def kob_metric_lower_pscvx(domain: Domain, c: float, z, v) -> float:
    if not getattr(domain, "pseudoconvex", False):
        raise DomainError("domain is not flagged strongly pseudoconvex")
    z = as_point(z, domain.dim)
    if not contains(domain, z):
        raise DomainError("point outside the domain")
    return float(lower_pscvx(domain, c, z, as_point(v, domain.dim))[0])


_C_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def calibrate_c(domain: Domain, samples: int = 400, seed: int = 0) -> float:
    """0.5 * min over near-boundary samples of sqrt(delta) * (disc upper bound)."""
    if domain in _C_CACHE:
        return _C_CACHE[domain]
    rng = np.random.default_rng(seed)
    xi = domain.sample_boundary(rng, samples)
    d = rng.uniform(1e-4, 0.05, samples) * domain.diameter
    nrm = np.array([domain.inward_normal(p) for p in xi])
    x = xi + d[:, None] * nrm
    x = x[domain._inside(x)]
    v = rng.normal(size=x.shape)
    # include complex-tangential directions, where the metric is smallest
    nz, vz = to_complex(nrm[: len(x)]), to_complex(v)
    vt = to_real(vz - _hdot(vz, nz)[:, None] * nz / np.sum(np.abs(nz) ** 2, axis=1)[:, None])
    x2, v2 = np.vstack([x, x]), np.vstack([v, vt])
    up = upper_disc(domain, x2, v2) / np.linalg.norm(v2, axis=1)
    c = 0.5 * float(np.min(np.sqrt(delta_batch(domain, x2)) * up))
    _C_CACHE[domain] = c
    return c


def _base_lower(base: Domain, x, v):
    if isinstance(base, UnitBall):
        return ball_metric(x, v)
    if isinstance(base, Bidisc):
        return bidisc_metric(x, v)
    if isinstance(base, Ellipsoid):
        A = max(base.axes)
        incl = ball_metric(x / A, v / A)
        return np.maximum(incl, lower_pscvx(base, calibrate_c(base), x, v))
    if base.pseudoconvex:
        return lower_pscvx(base, calibrate_c(base), x, v)
    return np.zeros(len(np.atleast_2d(x)))


def estimate_batch(domain: Domain, x, v):
    """(lower, upper) arrays for rows of (x, v)."""
    x = np.atleast_2d(np.asarray(x, float))
    v = np.atleast_2d(np.asarray(v, float))
    if isinstance(domain, UnitBall):
        k = ball_metric(x, v)
        return k, k
    if isinstance(domain, Bidisc):
        k = bidisc_metric(x, v)
        return k, k
    if isinstance(domain, Punctured):
        lower = _base_lower(domain.base, x, v)
        upper = upper_tilted(domain, x, v)
        bad = ~np.isfinite(upper)
        if np.any(bad):
            upper[bad] = upper_disc(domain, x[bad], v[bad])
    else:
        lower = _base_lower(domain, x, v)
        upper = upper_disc(domain, x, v)
    return np.minimum(lower, upper), upper


def midpoint_metric(domain: Domain, x, v):
    lo, up = estimate_batch(domain, x, v)
    return 0.5 * (lo + up)


def kob_metric_estimate(domain: Domain, z, v) -> MetricBound:
    z = as_point(z, domain.dim)
    if not contains(domain, z):
        raise DomainError("point outside the domain")
    lo, up = estimate_batch(domain, z, as_point(v, domain.dim))
    return MetricBound(float(lo[0]), float(up[0]))


# --- M-function ------------------------------------------------------------


@dataclass(frozen=True)
class Region:
    """Subset S of the closed domain used by the M-function.

    kind "all": the whole domain; "outer": points whose nearest boundary piece is the
    outer boundary (away from punctures). An optional ball (center, radius) intersects S.
    """

    kind: str = "all"
    center: tuple | None = None
    radius: float | None = None

    def mask(self, domain, x):
        ok = np.ones(len(x), bool)
        if self.center is not None:
            ok &= np.linalg.norm(x - np.asarray(self.center), axis=1) < self.radius
        if self.kind == "outer" and isinstance(domain, Punctured):
            ok &= domain.base._delta(x) <= domain.obstacle.distance(x)
        return ok


def _near_boundary_samples(domain, S, r, samples, rng, strata=10):
    k = np.arange(samples) % strata
    d = (k + rng.uniform(size=samples)) / strata * r
    punct = isinstance(domain, Punctured) and S.kind == "all"
    from_obs = np.zeros(samples, bool)
    if punct:
        from_obs = rng.uniform(size=samples) < 0.5
    xs, normals = [], []
    base = domain.base if isinstance(domain, Punctured) else domain
    xi = base.sample_boundary(rng, samples)
    for i in range(samples):
        if from_obs[i]:
            c = domain.obstacle.centers()[rng.integers(len(domain.obstacle.centers()))]
            g = rng.normal(size=domain.dim)
            g /= np.linalg.norm(g)
            xs.append(c + (domain.obstacle.radius + d[i]) * g)
            normals.append(g)
        else:
            nrm = base.inward_normal(xi[i])
            xs.append(xi[i] + d[i] * nrm)
            normals.append(nrm)
    return np.array(xs), np.array(normals)


def _m_sup(domain, S, r, samples, seed):
    rng = np.random.default_rng(seed)
    x, nrm = _near_boundary_samples(domain, S, r, samples, rng)
    keep = domain._inside(x)
    keep &= S.mask(domain, x)
    x, nrm = x[keep], nrm[keep]
    if len(x):
        dl = delta_batch(domain, x)
        keep = dl <= r
        x, nrm = x[keep], nrm[keep]
    if len(x) == 0:
        raise DomainError(f"no sample point with delta <= {r}")
    v = rng.normal(size=x.shape)
    nz, vz = to_complex(nrm), to_complex(v)
    vt = to_real(vz - _hdot(vz, nz)[:, None] * nz / np.sum(np.abs(nz) ** 2, axis=1)[:, None])
    X, V = np.vstack([x, x]), np.vstack([v, vt])
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    lo, _ = estimate_batch(domain, X, V)
    with np.errstate(divide="ignore"):
        return float(np.max(1.0 / lo)), len(x)


def m_function(domain: Domain, S: Region, r: float, samples: int = 400, seed: int = 0) -> float:
    """Monte-Carlo sup of 1/(metric lower bound) over S, delta <= r, unit v."""
    if r <= 0 or samples < 1:
        raise DomainError("need r > 0 and samples >= 1")
    return _m_sup(domain, S, r, samples, seed)[0]


@dataclass
class MFunctionTable:
    r: list
    M: list
    samples_used: list
    S: Region = field(default_factory=Region)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["r", "M", "samples_used"])
            for row in zip(self.r, self.M, self.samples_used):
                wr.writerow([repr(float(row[0])), repr(float(row[1])), int(row[2])])


def m_table(domain, S, rs, samples=400, seed=0) -> MFunctionTable:
    rs = np.asarray(rs, float)
    if np.any(np.diff(rs) <= 0):
        raise DomainError("radii must be strictly increasing")
    M, used = [], []
    for r in rs:
        m, k = _m_sup(domain, S, r, samples, seed)
        M.append(m)
        used.append(k)
    # sup over the nested sets {delta <= r}
    M = np.maximum.accumulate(M)
    return MFunctionTable(list(map(float, rs)), list(map(float, M)), used, S)


@dataclass
class IntegrabilityReport:
    integral: float
    exponent: float
    finite: bool
    table: MFunctionTable | None = None

    def to_json(self):
        return json.dumps({"schema_version": 1, "integral": self.integral,
                           "exponent": self.exponent, "finite": self.finite}, indent=2, sort_keys=True)


def integrability_check(domain: Domain | None, S: Region, eps: float, grid: int = 16,
                        samples: int = 400, seed: int = 0, m_of_r=None) -> IntegrabilityReport:
    """Log-trapezoid estimate of int_{eps/1024}^{eps} M(r)/r dr and the fitted M ~ a r^beta.

    ``m_of_r`` replaces the Monte-Carlo M-function with a given callable (stub domains).
    """
    if eps <= 0 or grid < 8:
        raise DomainError("need eps > 0 and grid >= 8")
    rs = np.geomspace(eps / 1024, eps, grid)
    if m_of_r is not None:
        M = np.array([float(m_of_r(r)) for r in rs])
        table = MFunctionTable(list(rs), list(M), [0] * grid, S)
    else:
        table = m_table(domain, S, rs, samples, seed)
        M = np.asarray(table.M)
    lr = np.log(rs)
    integral = float(np.trapezoid(M, lr))
    beta = float(np.polyfit(lr, np.log(M), 1)[0])
    return IntegrabilityReport(integral, beta, beta > 0.1, table)
