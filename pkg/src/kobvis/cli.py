"""Command-line front end: one flat key = value config file per experiment.

Exit codes: 0 success, 1 experiment-level failure (an expectation in the config is not
met, or a construction fails), 2 usage or config error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geodesics import (
    build_grid_graph, certify_almost_geodesic, kob_distance_graph, line_frame, lipschitz_constant,
    paths_to_svg, random_interior_points, reparametrize_unit_speed,
)
from .geometry import (
    DomainError, Punctured, UnitBall, domain_from_config, domain_to_config, parse_config, write_raster,
)
from .metric import Region, integrability_check, kob_distance_ball_exact

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


class ExperimentFailure(Exception):
    pass


class ExperimentConfig:
    """Typed access to a parsed config; every lookup names its key in errors."""

    def __init__(self, raw: dict, base_dir: Path, seed_override=None):
        self.raw, self.base_dir = raw, base_dir
        seed = seed_override if seed_override is not None else raw.get("seed")
        if seed is None:
            raise ConfigError("seed is mandatory (config key 'seed' or --seed)")
        self.seed = int(seed)

    def get(self, key, cast=str, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError(f"missing config key {key!r}")
            return default
        try:
            return cast(self.raw[key])
        except ValueError as e:
            raise ConfigError(f"bad value for {key!r}: {self.raw[key]!r}") from e

    def floats(self, key, default=None):
        if key not in self.raw:
            if default is None:
                raise ConfigError(f"missing config key {key!r}")
            return np.asarray(default, float)
        return np.array([float(t) for t in self.raw[key].replace(",", " ").split()])

    def domain(self):
        try:
            return domain_from_config(self.raw, self.base_dir)
        except (KeyError, FileNotFoundError) as e:
            raise ConfigError(f"domain config: {e}") from e


def _dump(path: Path, obj):
    path.write_text(json.dumps(dict(obj, schema_version=SCHEMA_VERSION, version=__version__),
                               indent=1, sort_keys=True) + "\n")


# --- verbs -----------------------------------------------------------------


def cmd_metric(cfg: ExperimentConfig, out: Path):
    dom = cfg.domain()
    S = Region(cfg.get("region", str, "all"))
    rep = integrability_check(dom, S, cfg.get("eps", float, 0.1), cfg.get("grid", int, 16),
                              cfg.get("samples", int, 400), cfg.seed)
    rep.table.to_csv(out / "m_function.csv")
    _dump(out / "integrability.json", json.loads(rep.to_json()) | {"seed": cfg.seed, "region": S.kind})
    return rep.finite or cfg.get("expect", str, "finite") != "finite"


def cmd_geodesic(cfg: ExperimentConfig, out: Path):
    dom = cfg.domain()
    h, lam, kappa = cfg.get("h", float, 0.05), cfg.get("lambda", float, 1.2), cfg.get("kappa", float, 0.5)
    pairs = cfg.get("pairs", int, 10)
    rng = np.random.default_rng(cfg.seed)
    pts = random_interior_points(dom, rng, 2 * pairs, cfg.get("min_delta", float, 0.05))
    rows, paths = [], []
    for k in range(pairs):
        z, w = pts[2 * k], pts[2 * k + 1]
        g = build_grid_graph(dom, h, line_frame(dom, z, w))
        d, path = kob_distance_graph(g, z, w)
        cp = certify_almost_geodesic(dom, reparametrize_unit_speed(path, g), g, lam, kappa)
        row = {"z": z.tolist(), "w": w.tolist(), "distance": d, "certified": cp.passed,
               "lipschitz": lipschitz_constant(cp)}
        base = dom.base if isinstance(dom, Punctured) else dom
        if isinstance(base, UnitBall):
            row["ball_distance"] = kob_distance_ball_exact(z, w)
        rows.append(row)
        paths.append(np.asarray(path))
    _dump(out / "geodesics.json", {"seed": cfg.seed, "h": h, "lambda": lam, "kappa": kappa, "pairs": rows})
    paths_to_svg(paths, out / "geodesics.svg")
    return all(r["certified"] for r in rows) or cfg.get("expect", str, "certified") != "certified"


def cmd_visibility(cfg: ExperimentConfig, out: Path):
    from .visibility import SweepConfig, visibility_sweep

    dom = cfg.domain()
    sc = SweepConfig(
        nu_max=cfg.get("nu_max", int, 6), lam=cfg.get("lambda", float, 1.2), kappa=cfg.get("kappa", float, 0.5),
        h=cfg.get("h", float, 0.02), eps0_frac=cfg.get("eps0_frac", float, 0.05),
        min_sep_frac=cfg.get("min_sep_frac", float, 0.25), obstacle_prob=cfg.get("obstacle_prob", float, 0.25),
        same_face_prob=cfg.get("same_face_prob", float, 0.0),
    )
    rep = visibility_sweep(dom, cfg.get("trials", int, 20), sc, cfg.seed)
    d = rep.to_dict()
    d["seed"] = cfg.seed
    _dump(out / "visibility.json", d)
    rep.to_csv(out / "visibility.csv")
    if cfg.get("svg", str, "false") == "true":
        paths = [np.array([r.z for r in t.records] + [r.w for r in t.records][::-1]) for t in rep.trials if t.records]
        paths_to_svg(paths, out / "visibility.svg")
    expect = cfg.get("expect", str, "none")
    c = rep.counts()
    if expect == "visible":
        return c["Visible"] == len(rep.trials)
    if expect == "degenerating":
        return c["Degenerating"] >= 1
    return True


def cmd_pseudoarc(cfg: ExperimentConfig, out: Path):
    from .pseudoarc import (
        PackingError, box_dimension, build_sequence, chain_svg, coarsen, embed_bilipschitz,
        intrinsic_diameter_growth, rasterize_arc, verify_chain_conditions,
    )

    mode = cfg.get("mode", str, "strict_crooked")
    levels = cfg.get("levels", int, 5)
    x, y = cfg.floats("x", (0.0, 0.0)), cfg.floats("y", (1.0, 0.0))
    try:
        seq = build_sequence(x, y, cfg.get("links", int, 5), levels, mode)
    except PackingError as e:
        _dump(out / "pseudoarc_failure.json", {"mode": mode, "levels": levels, "error": str(e)})
        raise ExperimentFailure(f"packing failure: {e}") from e
    (out / "chain.json").write_text(seq.to_json() + "\n")
    ok = True
    for lv in range(1, levels):
        for m in ("strict_crooked", "paper_literal"):
            r = verify_chain_conditions(seq, lv, m)
            _dump(out / f"conditions_level{lv}_{m}.json", r.to_dict())
            ok &= r.passed or m != mode
    _dump(out / "growth.json", {"levels": intrinsic_diameter_growth(seq)})
    depth = cfg.get("depth", int, levels)
    ch = seq.chain(depth)
    h = cfg.get("raster_h", float, float(ch.radii.min()) / 4)
    R = rasterize_arc(seq, depth, h)
    scales = cfg.get("scales", int, 7)
    bd = box_dimension([R] + [coarsen(R, 2**k) for k in range(1, scales)])
    _dump(out / "box_dimension.json", bd | {"depth": depth, "h": h, "scales": scales})
    chain_svg(seq, depth, out / "chain.svg")
    n = cfg.get("embed_n", int, 3)
    axes = [int(a) for a in cfg.floats("embed_axes", (0, 1))]
    E = np.eye(2 * n)
    base = UnitBall(n)
    ob = embed_bilipschitz(R, n, cfg.floats("embed_origin", np.zeros(2 * n)), E[axes[0]], E[axes[1]],
                           cfg.get("embed_scale", float, 0.3), base=base)
    write_raster(out / "obstacle.txt", ob)
    (out / "punctured.cfg").write_text(domain_to_config(Punctured(base, ob), "obstacle.txt")
                                       + f"seed = {cfg.seed}\n")
    return ok


def cmd_report(cfg_path, out: Path):
    rows = {}
    for p in sorted(out.glob("*.json")):
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError:
            continue
        if "schema_version" not in d:
            continue
        rows[p.name] = {k: d[k] for k in ("counts", "exponent", "integral", "finite", "dimension", "r2",
                                           "passed", "error") if k in d}
    _dump(out / "report.json", {"files": rows})
    for name, r in rows.items():
        print(f"{name}: {json.dumps(r, sort_keys=True)}")
    return True


VERBS = {"metric": cmd_metric, "geodesic": cmd_geodesic, "visibility": cmd_visibility,
         "pseudoarc": cmd_pseudoarc, "report": cmd_report}


def main(argv=None):
    ap = argparse.ArgumentParser(prog="kobvis", description=__doc__.splitlines()[0])
    ap.add_argument("verb", choices=sorted(VERBS))
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--threads", type=int, default=1, help="worker cap (commands run single-process)")
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        if args.verb == "report":
            ok = cmd_report(args.config, args.out)
        else:
            if args.config is None or not args.config.is_file():
                raise ConfigError(f"config file not found: {args.config}")
            raw = parse_config(args.config.read_text())
            cfg = ExperimentConfig(raw, args.config.parent, args.seed)
            ok = VERBS[args.verb](cfg, args.out)
    except (ConfigError, DomainError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ExperimentFailure as e:
        print(f"failed: {e}", file=sys.stderr)
        return EXIT_FAIL
    if not ok:
        print(f"failed: {args.verb} expectation not met", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
