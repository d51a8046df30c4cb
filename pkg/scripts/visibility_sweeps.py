"""Visibility sweeps on punctured balls and the bidisc, with the shallowest Case1 pair explained.

For a Case1 pair the exact ball geodesic lies in the complex line through xi and eta, so its
deepest point is at most 1 - dist(0, line); pairs with that below eps0 cannot read as Visible.
"""
import argparse
from pathlib import Path

import numpy as np

from kobvis.geometry import Bidisc, FinitePoints, Punctured, UnitBall, to_complex
from kobvis.visibility import SweepConfig, visibility_sweep

PUNCTURES = np.array([[0, 0, 0, 0], [0.4, 0, 0, 0], [0, 0, -0.4, 0]], float)


def line_depth_bound(xi, eta):
    a, b = to_complex(np.asarray(xi)), to_complex(np.asarray(eta))
    u = (b - a) / np.linalg.norm(b - a)
    return 1.0 - float(np.linalg.norm(a - np.vdot(u, a) * u))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/sweeps"))
    a = ap.parse_args()
    a.out.mkdir(parents=True, exist_ok=True)
    runs = {
        "punctured1": (Punctured(UnitBall(2), FinitePoints(PUNCTURES[:1])), SweepConfig()),
        "punctured3": (Punctured(UnitBall(2), FinitePoints(PUNCTURES)), SweepConfig()),
        "bidisc": (Bidisc(), SweepConfig(same_face_prob=0.75)),
    }
    for name, (dom, cfg) in runs.items():
        rep = visibility_sweep(dom, a.trials, cfg, a.seed)
        (a.out / f"{name}.json").write_text(rep.to_json() + "\n")
        print(f"{name}: {rep.counts()} by case {rep.by_case()}")
        for k, (t, v) in enumerate(zip(rep.trials, rep.verdicts)):
            if v != "Visible" and t.case_label == "Case1":
                print(f"  trial {k}: {v}, min depth {min(t.depths):.3f}, "
                      f"ball-geodesic depth bound {line_depth_bound(t.xi, t.eta):.3f}, eps0 {rep.eps0:.3f}")


if __name__ == "__main__":
    main()
