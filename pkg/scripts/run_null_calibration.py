#!/usr/bin/env python3
"""Calibration check: with pure-noise outcomes, encoder-vs-one-hot paired
t-tests should reject at roughly the nominal rate.

Generates latent-structured features, replaces the outcome with independent
Gaussian noise, and tallies how often each encoder "significantly" beats or
loses to one-hot at p < 0.05.
"""

import argparse

import numpy as np

from catenc.benchmark import BenchConfig, format_table, run_cv
from catenc.dataset import Dataset
from catenc.encoders import EncoderSpec
from catenc.learners import LearnerSpec
from catenc.synthgen import SynthConfig, gen_dataset


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--p", type=int, default=4)
    ap.add_argument("--m", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--encoders", nargs="+", default=["means", "fisher"])
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    return ap.parse_args()


def main():
    args = parse_args()
    hits = {name: 0 for name in args.encoders}
    for rep in range(args.repeats):
        cfg = SynthConfig(n=args.n, p=args.p, m=args.m, k_latent=2, p_assign=0.9,
                          noise_sd=1.0, outcome="linear", seed=args.seed + rep)
        ds, _ = gen_dataset(cfg)
        noise = np.random.default_rng(10_000 + args.seed + rep).standard_normal(ds.n)
        ds = Dataset(x=ds.x, g=ds.g, y=noise, m=ds.m, labels=ds.labels)
        bench = BenchConfig(encoders=tuple(EncoderSpec(k) for k in args.encoders),
                            learner=LearnerSpec("ridge"), k_folds=4, seed=args.seed + rep)
        report = run_cv(ds, bench)
        for name in args.encoders:
            if report.result(name).p_value < args.alpha:
                hits[name] += 1

    rows = [(name, f"{hits[name]}/{args.repeats}", f"{hits[name] / args.repeats:.3f}")
            for name in args.encoders]
    total = sum(hits.values())
    denom = args.repeats * len(args.encoders)
    print(format_table(rows, ("encoder", f"p<{args.alpha}", "rate")))
    print(f"\noverall: {total}/{denom} = {total / denom:.3f} (nominal {args.alpha})")


if __name__ == "__main__":
    main()
