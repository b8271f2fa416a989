#!/usr/bin/env python3
"""Recompute the bench table from the per-pair match lists in bench.json."""
import argparse
import json
import math
import pathlib
import re
import sys


def pair_stats(matches):
    confs = [m[2] for m in matches]
    return len(confs), (math.fsum(confs) / len(confs) if confs else 0.0)


def row(report, method):
    counts, confs = [], []
    for p in report["pairs"]:
        n, c = pair_stats(p[method]["pairs"])
        counts.append(n)
        confs.append(c)
    k = len(counts)
    mean_c = math.fsum(confs) / k
    std_c = math.sqrt(math.fsum((c - mean_c) ** 2 for c in confs) / k)
    return {"avg_good_matches": math.fsum(counts) / k, "mean_confidence": mean_c, "confidence_std": std_c}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("bench_dir", type=pathlib.Path)
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    report = json.loads((args.bench_dir / "bench.json").read_text())
    table = (args.bench_dir / "table.txt").read_text()
    ok = True
    for shipped, method in zip(report["rows"], ("bf", "gnn")):
        mine = row(report, method)
        for key, value in mine.items():
            diff = abs(value - shipped[key])
            if diff > args.tol:
                ok = False
                print(f"{shipped['method']} {key}: json {shipped[key]!r}, recomputed {value!r}")
        line = next(l for l in table.splitlines() if l.split() and l.split()[0] == shipped["method"])
        printed = [float(x) for x in re.findall(r"-?\d+\.\d+", line)]
        expected = [mine["avg_good_matches"], mine["mean_confidence"], mine["confidence_std"]]
        for i, (got, want) in enumerate(zip(printed, expected)):
            decimals = 2 if i == 0 else 3
            if abs(got - round(want, decimals)) > 10 ** -decimals / 2 + args.tol:
                ok = False
                print(f"{shipped['method']} table value {got} disagrees with {want}")
        print(f"{shipped['method']}: {mine['avg_good_matches']:.6f} matches, "
              f"{mine['mean_confidence']:.9f} +- {mine['confidence_std']:.9f}")
    print("OK" if ok else "MISMATCH")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
