#!/usr/bin/env python3
"""Print the MAC cycle-cost ratios for common weight/activation bit pairs
and, optionally, the per-layer MAC/memory table of a saved model.
"""
import argparse

from quantevo import complexity, cycle_ratio, load_model

PAIRS = [(8, 8), (8, 16), (4, 8), (4, 4), (16, 16), (32, 32)]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", help="optional .qemodel for a per-layer MAC/memory table")
    args = parser.parse_args()

    print(f"{'weights':>8}  {'acts':>5}  {'cycle ratio':>12}  {'float':>9}")
    for wb, ab in PAIRS:
        r = cycle_ratio(wb, ab)
        print(f"{wb:>7}b  {ab:>4}b  {str(r):>12}  {float(r):>9.5f}")

    if args.model:
        model = load_model(args.model)
        report = complexity(model, 8, 8)
        print()
        print(f"{'layer':<12} {'kind':<10} {'macs':>10} {'memory':>10}")
        for row in report.layers:
            print(f"{row.name:<12} {row.kind:<10} {row.mac_count:>10} {row.memory_words:>10}")
        print(f"total macs {report.total_macs}, total memory words {report.total_memory_words}")


if __name__ == "__main__":
    main()
