"""Link counts the strict folding pattern needs per level, against the per-level cap."""
from kobvis.pseudoarc import MAX_LINKS, PackingError, _strict_len, build_sequence, intrinsic_diameter_growth


def main(m=5, levels=5):
    print("span (links) -> minimal strict walk length")
    for d in range(2, 14):
        print(f"  {d + 1:3d} -> {_strict_len(d)}")
    M = m
    for lv in range(2, levels + 1):
        need = _strict_len(M - 1)
        print(f"level {lv}: parent {M} links, strict walk {float(need):.3g} parent visits "
              f"({'over' if need > MAX_LINKS else 'within'} the {MAX_LINKS} cap)")
        if need > MAX_LINKS:
            break
        try:
            seq = build_sequence((0, 0), (1, 0), m, lv, "strict_crooked")
        except PackingError as e:
            print(f"  build failed: {e}")
            break
        M = len(seq.chain(lv))
        print(f"  built: {M} links, fold factor {intrinsic_diameter_growth(seq)[-1]['fold_factor']:.2f}")


if __name__ == "__main__":
    main()
