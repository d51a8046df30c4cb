"""Measure the additive grid-distance error per unit h on the unit ball (pins geodesics.C_DISC).

Distances are compared between snapped nodes, so only the anisotropic grid bias remains.
"""
import numpy as np

from kobvis.geodesics import build_grid_graph, line_frame, random_interior_points, shortest_node_path
from kobvis.geometry import UnitBall
from kobvis.metric import kob_distance_ball_exact


def main(pairs=20, seed=0):
    rng = np.random.default_rng(seed)
    for n in (1, 2):
        B = UnitBall(n)
        for h in (0.04, 0.02):
            errs = []
            for _ in range(pairs):
                z, w = random_interior_points(B, rng, 2, 0.05)
                g = build_grid_graph(B, h, line_frame(B, z, w))
                i, j = g.snap(z), g.snap(w)
                K, _ = shortest_node_path(g, i, j)
                errs.append((K - kob_distance_ball_exact(g.nodes[i], g.nodes[j])) / h)
            errs = np.array(errs)
            print(f"n={n} h={h}: (Khat-K)/h median {np.median(errs):.3f} max {errs.max():.3f} min {errs.min():.3f}")


if __name__ == "__main__":
    main()
