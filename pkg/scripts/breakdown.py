"""Conv vs attention MAC shares of a preset over audio duration; optional plot."""

import argparse

from fastuss.config import preset
from fastuss.cost import compute_breakdown


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="ID1")
    ap.add_argument("--durations", default="1,2,5,10,20,30")
    ap.add_argument("--plot", help="save a PNG here (needs matplotlib)")
    args = ap.parse_args()

    durations = [float(d) for d in args.durations.split(",")]
    rows = compute_breakdown(preset(args.preset), durations)
    for dur, conv, attn in rows:
        print(f"{dur:>6g} s  conv {conv:.3f}  attention {attn:.3f}")
    if args.plot:
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3))
        ax.bar([f"{d:g}" for d, _, _ in rows], [c for _, c, _ in rows], label="conv")
        ax.bar([f"{d:g}" for d, _, _ in rows], [a for _, _, a in rows], bottom=[c for _, c, _ in rows], label="attention")
        ax.set_xlabel("duration (s)")
        ax.set_ylabel("share of MACs")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)


if __name__ == "__main__":
    main()
