"""Print params and 1 s MACs for every ID preset next to the reference values,
plus the secondary-ID residuals under each grouping-scope hypothesis."""

import argparse

from fastuss import cost
from fastuss.config import GROUP_SCOPES, ID_ROWS, preset


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frames-per-second", type=float)
    ap.add_argument("-N", "--prompts", type=int)
    args = ap.parse_args()

    print(f"{'ID':<6}{'params M':>10}{'ref':>6}{'MAC G':>9}{'ref':>7}{'resid G':>9}")
    for pid in ID_ROWS:
        rep = cost.model_cost(preset(pid), 1.0, args.prompts, args.frames_per_second)
        mac = rep.macs_total / 1e9
        print(
            f"{pid:<6}{rep.params_total / 1e6:>10.3f}{cost.REFERENCE_PARAMS[pid]:>6.1f}"
            f"{mac:>9.2f}{cost.REFERENCE_MACS[pid]:>7.1f}{mac - cost.REFERENCE_MACS[pid]:>+9.2f}"
        )
    print("\ngrouping scope hypotheses (MAC G):")
    for scope in GROUP_SCOPES:
        row = [cost.model_cost(preset(p, scope), 1.0, args.prompts, args.frames_per_second).macs_total / 1e9 for p in cost.SECONDARY_IDS]
        print(f"  {scope:<7}" + "".join(f"{p}={m:6.2f} ({m / cost.REFERENCE_MACS[p] - 1:+.1%})  " for p, m in zip(cost.SECONDARY_IDS, row)))


if __name__ == "__main__":
    main()
