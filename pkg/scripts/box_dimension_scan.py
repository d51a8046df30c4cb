"""Box counting on the depth-4 pseudo-arc raster: local slopes per octave and r2 per scale window.

Fine scales resolve the link discs (slope toward 2), coarse scales see a curve (slope toward 1);
a single line through all octaves bends across that crossover.
"""
import numpy as np

from kobvis.pseudoarc import box_dimension, build_sequence, coarsen, rasterize_arc


def main(depth=4, octaves=7):
    seq = build_sequence((0, 0), (1, 0), 5, 5, "paper_literal")
    R = rasterize_arc(seq, depth, float(seq.chain(depth).radii.min()) / 4)
    rs = [R] + [coarsen(R, 2**k) for k in range(1, octaves)]
    N = np.array([len(r.cells) for r in rs], float)
    h = np.array([r.h for r in rs])
    print(f"depth {depth}: link radius {seq.chain(depth).radii.min():.4g}, h {R.h:.4g}")
    for k in range(octaves - 1):
        print(f"  h {h[k]:.4g} -> {h[k + 1]:.4g}: boxes {int(N[k])} -> {int(N[k + 1])}, "
              f"local slope {np.log2(N[k] / N[k + 1]):.3f}")
    for lo in range(octaves - 3):
        for hi in range(lo + 4, octaves + 1):
            bd = box_dimension(rs[lo:hi])
            print(f"  octaves {lo}..{hi - 1}: dimension {bd['dimension']:.3f}, r2 {bd['r2']:.4f}")


if __name__ == "__main__":
    main()
