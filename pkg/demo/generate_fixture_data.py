#!/usr/bin/env python3
"""Regenerate demo/credit-applications.csv.

Synthetic 1000-row credit-applications fixture with exact aggregate
properties (checked in tests/test_acceptance.py):

  class counts             good 700 / bad 300   -> imbalance 300/700 = 0.4286
  gender label rates       female 201/330, male 499/670 -> DI 0.818
  age-group label rates    young 48/205, mature 652/795 -> DI 0.286
  prediction accuracy      795/1000 = 0.795
  gender prediction rates  female 205/330, male 408/670 -> DP diff 0.012

Row order is shuffled with a fixed seed; the two numeric filler columns
carry no signal.
"""

from __future__ import annotations

import csv
import random
from pathlib import Path

# (gender, age_group, class, prediction) -> row count
CELLS = [
    ("female", "young", "good", "good", 14),
    ("female", "mature", "good", "good", 171),
    ("female", "mature", "good", "bad", 16),
    ("female", "young", "bad", "bad", 67),
    ("female", "mature", "bad", "good", 20),
    ("female", "mature", "bad", "bad", 42),
    ("male", "young", "good", "good", 34),
    ("male", "mature", "good", "good", 335),
    ("male", "mature", "good", "bad", 130),
    ("male", "young", "bad", "bad", 90),
    ("male", "mature", "bad", "good", 39),
    ("male", "mature", "bad", "bad", 42),
]


def build_rows() -> list[list[str]]:
    rng = random.Random(20260301)
    rows = []
    for gender, age_group, label, prediction, count in CELLS:
        for _ in range(count):
            rows.append(
                [
                    gender,
                    age_group,
                    str(rng.randrange(250, 18500)),
                    str(rng.randrange(4, 72)),
                    label,
                    prediction,
                ]
            )
    rng.shuffle(rows)
    return rows


def main() -> None:
    out = Path(__file__).parent / "credit-applications.csv"
    with open(out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["gender", "age_group", "credit_amount", "duration_months", "class", "prediction"]
        )
        writer.writerows(build_rows())
    print(f"wrote {out} ({sum(c for *_, c in CELLS)} rows)")


if __name__ == "__main__":
    main()
