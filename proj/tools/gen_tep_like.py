#!/usr/bin/env python3
"""Writes models/tep_like.json: a 50-state stable surrogate with the five
monitored process outputs (reactor pressure, reactor temperature, reactor level,
product separator level, stripper base level) in deviation units."""

import argparse
import json

import numpy as np

OUTPUTS = [
    ("reactor_pressure_kPa", 40.0, 4.0),
    ("reactor_temperature_C", 6.0, 0.5),
    ("reactor_level_m3", 1.0, 0.1),
    ("separator_level_m3", 0.6, 0.06),
    ("stripper_level_m3", 0.35, 0.035),
]


def build(seed: int, n: int) -> dict:
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = rng.uniform(0.3, 0.9, n)
    a = q @ np.diag(eig) @ q.T
    rows = []
    for _, gain, _ in OUTPUTS:
        r = rng.standard_normal(n)
        rows.append(gain * r / np.linalg.norm(r))
    c = np.array(rows)
    b = 0.2 * (c / np.linalg.norm(c, axis=1, keepdims=True) ** 2).T
    sigma1 = 0.01 * np.eye(n)
    sigma2 = np.diag([noise ** 2 for _, _, noise in OUTPUTS])
    return {
        "name": "tep_like",
        "description": "Stable 50-state surrogate; outputs " + ", ".join(name for name, _, _ in OUTPUTS)
        + f" (generated by tools/gen_tep_like.py --seed {seed})",
        "A": a.tolist(),
        "B": b.tolist(),
        "C": c.tolist(),
        "Sigma1": sigma1.tolist(),
        "Sigma2": sigma2.tolist(),
        "dt": 1.8,
    }


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1995)
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--out", default="models/tep_like.json")
    args = ap.parse_args()
    with open(args.out, "w") as f:
        json.dump(build(args.seed, args.n), f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
