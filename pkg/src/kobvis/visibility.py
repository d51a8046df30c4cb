"""Empirical visibility harness: push almost-geodesics toward boundary pairs and watch the core depth."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import spearmanr

from .geodesics import (
    build_grid_graph, certify_almost_geodesic, kob_distance_graph, line_frame,
    reparametrize_unit_speed, shortest_node_path,
)
from .geometry import (
    Bidisc, DomainError, Punctured, classify_boundary_point, contains,
    delta_batch, sample_boundary_pair, to_complex, to_real,
)

SCHEMA_VERSION = 1


@dataclass
class NuRecord:
    nu: int
    h: float
    z: list
    w: list
    distance: float
    core_depth: float
    certified: bool


@dataclass
class VisibilityTrial:
    xi: list
    eta: list
    case_label: str
    nu_max: int
    lam: float
    kappa: float
    records: list = field(default_factory=list)
    truncated: bool = False
    note: str = ""

    @property
    def depths(self):
        return [r.core_depth for r in self.records]


def case_classify(domain: Punctured, xi, eta) -> str:
    a = classify_boundary_point(domain, xi)
    b = classify_boundary_point(domain, eta)
    if a == b == "OuterBoundary":
        return "Case1"
    if a == b == "Obstacle":
        return "Case3"
    return "Case2"


def _label(domain, xi, eta):
    return case_classify(domain, xi, eta) if isinstance(domain, Punctured) else "NonPunctured"


def _on_obstacle(domain, p):
    return isinstance(domain, Punctured) and classify_boundary_point(domain, p) == "Obstacle"


def approach_point(domain, p, partner, gap, h):
    """A point at distance at most ``gap`` from the boundary point p, inside the domain.

    Outer-boundary points move toward the domain center; obstacle points move toward
    the partner, then (if that lands too close to the obstacle) along i times that
    direction, which leaves a totally real obstacle orthogonally.
    """
    # never more than a quarter of the way to the partner (so z and w stay apart), and
    # outer points at most half way to the center (so early levels stay off the center)
    gap = min(gap, 0.25 * np.linalg.norm(partner - p))
    if _on_obstacle(domain, p):
        d = partner - p
        dirs = [d, to_real(1j * to_complex(d)), domain.center - p]
    else:
        dirs = [domain.center - p]
        gap = min(gap, 0.5 * np.linalg.norm(dirs[0]))
    # shorter steps keep |z - p| <= gap, e.g. when the full step lands on a puncture
    for f in (1.0, 0.9, 0.8, 0.7, 0.6, 0.5):
        for d in dirs:
            nd = np.linalg.norm(d)
            if nd == 0:
                continue
            z = p + f * gap * d / nd
            if contains(domain, z) and delta_batch(domain, z)[0] >= h:
                return z
    return None


def _verdict(depths, eps0, truncated):
    if truncated or not depths:
        return "Inconclusive"
    if min(depths) >= eps0:
        return "Visible"
    if len(depths) >= 3 and np.ptp(depths) > 0:
        rho = spearmanr(np.arange(len(depths)), depths).statistic
        if rho <= -0.8 and depths[-1] < eps0 / 2:
            return "Degenerating"
    return "Inconclusive"


def visibility_trial(domain, xi, eta, nu_max=6, lam=1.2, kappa=0.5, h=0.02) -> VisibilityTrial:
    xi, eta = np.asarray(xi, float), np.asarray(eta, float)
    if np.array_equal(xi, eta):
        raise DomainError("xi and eta must be distinct")
    if nu_max < 3:
        raise DomainError("nu_max must be at least 3")
    trial = VisibilityTrial(xi.tolist(), eta.tolist(), _label(domain, xi, eta), nu_max, lam, kappa)
    diam = domain.diameter
    for nu in range(1, nu_max + 1):
        gap = 2.0**-nu * diam
        hn = min(h, 2.0 ** (-nu - 1) * diam)
        z = approach_point(domain, xi, eta, gap, hn)
        w = approach_point(domain, eta, xi, gap, hn)
        if z is None or w is None:
            trial.truncated, trial.note = True, f"no admissible endpoint at nu={nu}"
            break
        try:
            g = build_grid_graph(domain, hn, line_frame(domain, z, w))
            d, path = kob_distance_graph(g, z, w)
        except DomainError as e:
            trial.truncated, trial.note = True, f"nu={nu}: {e}"
            break
        cp = certify_almost_geodesic(domain, reparametrize_unit_speed(path, g), g, lam, kappa)
        depth = float(np.max(delta_batch(domain, cp.z)))
        trial.records.append(NuRecord(nu, hn, z.tolist(), w.tolist(), d, depth, cp.passed))
        if not cp.passed:
            trial.truncated, trial.note = True, f"certificate failed at nu={nu}"
            break
    return trial


@dataclass
class SweepConfig:
    nu_max: int = 6
    lam: float = 1.2
    kappa: float = 0.5
    h: float = 0.02
    eps0_frac: float = 0.05
    min_sep_frac: float = 0.25
    obstacle_prob: float = 0.25
    same_face_prob: float = 0.0


@dataclass
class VisibilityReport:
    trials: list
    verdicts: list
    eps0: float
    config: SweepConfig

    def counts(self):
        out = {"Visible": 0, "Degenerating": 0, "Inconclusive": 0}
        for v in self.verdicts:
            out[v] += 1
        return out

    def by_case(self):
        out = {}
        for t, v in zip(self.trials, self.verdicts):
            out.setdefault(t.case_label, {}).setdefault(v, 0)
            out[t.case_label][v] += 1
        return out

    def to_dict(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "eps0": self.eps0,
            "config": asdict(self.config),
            "counts": self.counts(),
            "by_case": self.by_case(),
            "trials": [dict(asdict(t), verdict=v, min_core_depth=min(t.depths) if t.depths else None)
                       for t, v in zip(self.trials, self.verdicts)],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["trial", "case", "verdict", "min_core_depth"])
            for k, (t, v) in enumerate(zip(self.trials, self.verdicts)):
                wr.writerow([k, t.case_label, v, repr(min(t.depths)) if t.depths else ""])


def _pair_seed(seed, k):
    return int(np.random.SeedSequence([seed, k]).generate_state(1)[0])


def visibility_sweep(domain, trials: int, config: SweepConfig | None = None, seed: int = 0) -> VisibilityReport:
    if trials < 1:
        raise DomainError("trials must be at least 1")
    config = config or SweepConfig()
    eps0 = config.eps0_frac * domain.diameter
    out, verdicts = [], []
    for k in range(trials):
        s = _pair_seed(seed, k)
        same = isinstance(domain, Bidisc) and np.random.default_rng(s).uniform() < config.same_face_prob
        try:
            xi, eta = sample_boundary_pair(domain, config.min_sep_frac * domain.diameter, s,
                                           config.obstacle_prob, same_face=same)
            t = visibility_trial(domain, xi, eta, config.nu_max, config.lam, config.kappa, config.h)
        except DomainError as e:
            t = VisibilityTrial([], [], "NonPunctured", config.nu_max, config.lam, config.kappa,
                                truncated=True, note=str(e))
        out.append(t)
        verdicts.append(_verdict(t.depths, eps0, t.truncated))
    return VisibilityReport(out, verdicts, eps0, config)


@dataclass
class EscapeReport:
    escapes: bool
    max_depth_in_tube: float
    max_obstacle_distance: float
    in_tube_ratio: float
    over_wide: bool


def case3_neighborhood_escape(domain: Punctured, xi, eta, tube_radius: float, h: float) -> EscapeReport:
    """Does the geodesic between points near two obstacle points leave the tube of radius
    ``tube_radius`` about the obstacle?

    Also measures how much longer the best path confined to the tube is (in_tube_ratio,
    inf when the tube disconnects the endpoints). max_depth_in_tube is the largest
    boundary distance among path samples that stay inside the tube.
    """
    xi, eta = np.asarray(xi, float), np.asarray(eta, float)
    if np.linalg.norm(xi - eta) < 4 * tube_radius:
        raise DomainError("need |xi - eta| >= 4 tube_radius")
    over_wide = tube_radius >= domain.diameter
    z = approach_point(domain, xi, eta, 2 * h, h)
    w = approach_point(domain, eta, xi, 2 * h, h)
    if z is None or w is None:
        raise DomainError("no admissible endpoint near the obstacle")
    g = build_grid_graph(domain, h, line_frame(domain, z, w))
    i, j = g.snap(z), g.snap(w)
    d, ids = shortest_node_path(g, i, j)
    pts = g.nodes[ids]
    od = domain.obstacle.distance(pts)
    inside = od <= tube_radius
    depth_in = float(np.max(delta_batch(domain, pts[inside]))) if np.any(inside) else 0.0
    tube = domain.obstacle.distance(g.nodes) <= tube_radius
    ratio = math.inf
    if tube[i] and tube[j]:
        keep = np.flatnonzero(tube)
        sub = g.adj[keep][:, keep]
        from scipy.sparse.csgraph import dijkstra
        pos = {int(v): k for k, v in enumerate(keep)}
        dt = dijkstra(sub, directed=False, indices=pos[i])[pos[j]]
        ratio = float(dt / d) if d > 0 else math.inf
    return EscapeReport(bool(np.any(~inside)) and not over_wide, depth_in, float(od.max()), ratio, over_wide)
