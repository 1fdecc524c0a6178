#!/usr/bin/env python3
"""Generate a synthetic hourly load/temperature CSV.

Example:
    python scripts/make_synthetic.py --days 100 --switch-day 50 --out switch.csv
"""

import argparse
from pathlib import Path

from aplf.synthetic import make_hourly_series, write_series_csv


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--days", type=int, default=100)
    parser.add_argument("--switch-day", type=int, default=None,
                        help="0-based day at which the consumption pattern flattens")
    parser.add_argument("--noise", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--no-temperature", action="store_true")
    parser.add_argument("--out", type=Path, required=True)
    args = parser.parse_args()

    rows = make_hourly_series(args.days, switch_day=args.switch_day, noise=args.noise, seed=args.seed)
    write_series_csv(args.out, rows, include_temperature=not args.no_temperature)
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
