"""Chunk counts and total MACs of chunked separation over a long recording."""

import argparse

from fastuss import cost
from fastuss.config import preset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="ID1")
    ap.add_argument("--total", type=float, default=cost.CSS_TOTAL_S, help="recording length in seconds")
    args = ap.parse_args()

    cfg = preset(args.preset)
    print(f"{args.preset}, {args.total:g} s of audio")
    for (chunk, overlap), ref in cost.CSS_REFERENCE_MACS.items():
        n = cost.n_chunks(args.total, chunk, overlap)
        macs = cost.css_cost(cfg, args.total, chunk, overlap) / 1e12
        print(f"  chunk {chunk:>4g} s  overlap {overlap:>4.0%}  {n:>3} chunks  {macs:6.2f} T  (ref {ref} T)")


if __name__ == "__main__":
    main()
