#!/usr/bin/env python3
"""Writes data/synthetic_income.csv: monthly incomes with a point mass at zero
and a top-coded category, for two regions E (treated) and W (control)."""

import argparse
import csv
import math
import random


def draw_row(rng, region):
    gender = rng.choice(["f", "m"])
    education = rng.choices(["low", "mid", "high"], weights=[3, 5, 2] if region == "E" else [2, 5, 3])[0]
    age = rng.randint(20, 64)
    p_zero = 0.04 + (0.06 if gender == "f" else 0.0) + (0.03 if region == "E" else 0.0)
    if rng.random() < p_zero:
        income = 0
    else:
        mu = 7.4 + (0.35 if region == "W" else 0.0) + (0.25 if gender == "m" else 0.0)
        mu += {"low": -0.3, "mid": 0.0, "high": 0.45}[education]
        mu += 0.9 * (age - 20) / 44 - 0.6 * ((age - 20) / 44) ** 2
        income = max(1, round(math.exp(rng.gauss(mu, 0.55))))
    weight = round(rng.uniform(0.5, 2.0), 3)
    return [region, income, age, gender, education, weight]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="data/synthetic_income.csv")
    parser.add_argument("--seed", type=int, default=20240601)
    parser.add_argument("--east", type=int, default=600)
    parser.add_argument("--west", type=int, default=1200)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["region", "income", "age", "gender", "education", "weight"])
        for region, count in (("E", args.east), ("W", args.west)):
            for _ in range(count):
                writer.writerow(draw_row(rng, region))


if __name__ == "__main__":
    main()
