"""catenc command line: encode a CSV, simulate synthetic data, run benchmarks.

Every command writes a JSON run manifest next to its outputs: the resolved
flags, effective seeds, FNV-1a digests of the input files, tool version and
timestamps. Identical manifests (same digests, flags and seeds) reproduce the
output files byte for byte; the report files themselves carry no timestamps
so reruns compare clean.

Exit codes: 0 success, 2 bad flags or invalid configuration, 3 ingestion
error, 4 encoder/benchmark error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime, timezone

from . import __version__
from .benchmark import BenchConfig, format_table, median_improvements, run_cv, run_sim_sweep
from .dataset import IngestError, load_csv
from .encoders import KINDS, EncoderSpec, encoded_column_names, fit_encoder, transform
from .learners import LEARNER_KINDS, LearnerSpec
from .synthgen import OUTCOME_MODELS, SynthConfig, gen_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INGEST = 3
EXIT_ENCODER = 4

_OUTCOME_FLAG_MAP = {"linear": "linear", "group": "group_linear", "piecewise": "piecewise"}


def fnv1a64(data: bytes) -> str:
    """64-bit FNV-1a digest, rendered as 16 hex digits."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return f"{h:016x}"


def _file_digest(path) -> str:
    with open(path, "rb") as fh:
        return fnv1a64(fh.read())


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def write_manifest(path, command: str, flags: dict, seeds: dict, input_digests: dict,
                   started_at: str) -> None:
    manifest = {
        "command": command,
        "flags": flags,
        "seeds": seeds,
        "input_digests": input_digests,
        "tool_version": __version__,
        "started_at": started_at,
        "finished_at": _utc_now(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _effective_seed(args) -> int:
    env = os.environ.get("CATENC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(_usage_error(f"CATENC_SEED must be an integer, got {env!r}"))
    return args.seed


def _usage_error(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _flag_dict(args, skip=("func",)) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _parse_encoder_list(text: str):
    kinds = [k.strip() for k in text.split(",") if k.strip()]
    for kind in kinds:
        if kind not in KINDS:
            raise ValueError(f"unknown encoder {kind!r}; valid kinds: {', '.join(KINDS)}")
    if not kinds:
        raise ValueError("empty encoder list")
    return kinds


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    # shortest round-trip decimal form, independent of numpy scalar reprs
    return repr(float(value))


def cmd_encode(args) -> int:
    started = _utc_now()
    seed = _effective_seed(args)
    try:
        spec = EncoderSpec(kind=args.encoder, k=args.rank, lam=getattr(args, "lambda"),
                           seed=seed, scale=not args.unscaled, center=not args.no_center)
    except ValueError as exc:
        return _usage_error(str(exc))
    try:
        ds = load_csv(args.input, args.cat, args.target)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    try:
        enc = fit_encoder(ds, spec)
        encoded = transform(ds, enc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENCODER

    feat_names = list(ds.feature_names or (f"x{j + 1}" for j in range(ds.p)))
    header = feat_names + encoded_column_names(enc) + [args.target]
    rows = ([_fmt(v) for v in encoded[i]] + [_fmt(ds.y[i])] for i in range(ds.n))
    _write_csv(args.output, header, rows)
    write_manifest(args.output + ".manifest.json", "encode", _flag_dict(args),
                   {"seed": seed, "resolved_rank": enc.spec.k},
                   {args.input: _file_digest(args.input)}, started)
    return EXIT_OK


def cmd_simulate(args) -> int:
    started = _utc_now()
    seed = _effective_seed(args)
    try:
        cfg = SynthConfig(n=args.n, p=args.p, m=args.m, k_latent=args.k_latent,
                          p_assign=args.p_assign, noise_sd=args.noise,
                          outcome=_OUTCOME_FLAG_MAP[args.outcome], seed=seed)
    except ValueError as exc:
        return _usage_error(str(exc))
    ds, truth = gen_dataset(cfg)

    csv_path = args.out_prefix + ".csv"
    header = list(ds.feature_names) + ["g", "y"]
    rows = ([_fmt(v) for v in ds.x[i]] + [ds.labels.id_to_label[ds.g[i]], _fmt(ds.y[i])]
            for i in range(ds.n))
    _write_csv(csv_path, header, rows)
    truth_path = args.out_prefix + ".truth.json"
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_jsonable(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(args.out_prefix + ".manifest.json", "simulate", _flag_dict(args),
                   {"seed": seed}, {}, started)
    return EXIT_OK


def _load_sim_grid(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        print(f"error: sim grid file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_INGEST) from None
    except json.JSONDecodeError as exc:
        print(f"error: sim grid is not valid JSON: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE) from None
    if not isinstance(raw, list) or not raw:
        print("error: sim grid must be a non-empty JSON list of configs", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    grid = []
    for entry in raw:
        try:
            grid.append(SynthConfig(**entry))
        except (TypeError, ValueError) as exc:
            print(f"error: bad sim grid entry {entry!r}: {exc}", file=sys.stderr)
            raise SystemExit(EXIT_USAGE) from None
    return grid


def cmd_bench(args) -> int:
    started = _utc_now()
    seed = _effective_seed(args)
    if bool(args.input) == bool(args.sim_grid):
        return _usage_error("exactly one of --input or --sim-grid is required")
    if args.input and not (args.cat and args.target):
        return _usage_error("--input requires --cat and --target")
    try:
        kinds = _parse_encoder_list(args.encoders)
        encoders = tuple(EncoderSpec(kind=k, k=args.rank, lam=getattr(args, "lambda"),
                                     seed=seed) for k in kinds)
        learner = LearnerSpec(kind=args.learner, max_depth=args.depth, n_trees=args.trees,
                              learning_rate=args.learning_rate, lambda2=args.ridge_lambda,
                              seed=seed)
        bench = BenchConfig(encoders=encoders, learner=learner, k_folds=args.folds,
                            n_seeds=args.seeds, seed=seed)
    except ValueError as exc:
        return _usage_error(str(exc))

    digests = {}
    if args.input:
        try:
            ds = load_csv(args.input, args.cat, args.target)
        except IngestError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INGEST
        digests[args.input] = _file_digest(args.input)
        try:
            reports = [run_cv(ds, bench)]
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ENCODER
    else:
        grid = _load_sim_grid(args.sim_grid)
        digests[args.sim_grid] = _file_digest(args.sim_grid)
        reports = run_sim_sweep(grid, bench, jobs=args.jobs)

    completed = [r for rep in reports for r in rep.results if not r.skipped]
    payload = {"reports": [rep.to_jsonable() for rep in reports]}
    if len(reports) > 1:
        payload["median_improvement_pct"] = median_improvements(reports)
    json_path = args.report_prefix + ".report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    csv_path = args.report_prefix + ".report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        first = True
        for i, rep in enumerate(reports):
            for row in rep.csv_rows():
                if row[0] == "encoder":  # header row once, prefixed with the cell id
                    if first:
                        writer.writerow(("cell",) + row)
                        first = False
                    continue
                writer.writerow((i,) + row)

    if len(reports) == 1:
        rows = [r[1:] for r in list(reports[0].csv_rows())[1:]]
        names = [res.name for res in reports[0].results]
        print(format_table([(n,) + tuple(r) for n, r in zip(names, rows)],
                           ("encoder", "mean_mse", "improvement_pct", "t", "p")))
    else:
        med = median_improvements(reports)
        print(format_table(sorted(med.items()), ("encoder", "median_improvement_pct")))
        failed = [rep.metadata for rep in reports if rep.error]
        if failed:
            print(f"{len(failed)} cell(s) failed; see the JSON report", file=sys.stderr)

    write_manifest(args.report_prefix + ".manifest.json", "bench", _flag_dict(args),
                   {"seed": seed}, digests, started)
    return EXIT_OK if completed else EXIT_ENCODER


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catenc",
        description="Compact numeric encodings for high-cardinality categorical columns.")
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="fit one encoder on a CSV and write the encoded CSV")
    enc.add_argument("--input", required=True)
    enc.add_argument("--cat", required=True, help="categorical column name")
    enc.add_argument("--target", required=True, help="outcome column name")
    enc.add_argument("--encoder", required=True, help=f"one of: {', '.join(KINDS)}")
    enc.add_argument("--rank", type=int, default=None)
    enc.add_argument("--lambda", type=float, default=None)
    enc.add_argument("--seed", type=int, default=0)
    enc.add_argument("--unscaled", action="store_true",
                     help="skip singular-value/eigenvalue scaling of components")
    enc.add_argument("--no-center", action="store_true",
                     help="factorize raw group means instead of centered ones")
    enc.add_argument("--output", required=True)
    enc.set_defaults(func=cmd_encode)

    sim = sub.add_parser("simulate", help="draw a synthetic dataset and its ground truth")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--p", type=int, required=True)
    sim.add_argument("--m", type=int, required=True)
    sim.add_argument("--k-latent", type=int, required=True)
    sim.add_argument("--p-assign", type=float, default=0.8)
    sim.add_argument("--outcome", choices=sorted(_OUTCOME_FLAG_MAP), default="linear")
    sim.add_argument("--noise", type=float, default=1.0)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-prefix", required=True)
    sim.set_defaults(func=cmd_simulate)

    ben = sub.add_parser("bench", help="cross-validated comparison against one-hot")
    ben.add_argument("--input", default=None)
    ben.add_argument("--cat", default=None)
    ben.add_argument("--target", default=None)
    ben.add_argument("--sim-grid", default=None,
                     help="JSON list of synthetic configs (alternative to --input)")
    ben.add_argument("--encoders", default="onehot,means",
                     help="comma-separated encoder kinds")
    ben.add_argument("--learner", choices=LEARNER_KINDS, default="ridge")
    ben.add_argument("--folds", type=int, default=4)
    ben.add_argument("--seeds", type=int, default=20, help="seeds per sim-grid config")
    ben.add_argument("--rank", type=int, default=None)
    ben.add_argument("--lambda", type=float, default=None)
    ben.add_argument("--trees", type=int, default=None)
    ben.add_argument("--depth", type=int, default=None)
    ben.add_argument("--learning-rate", type=float, default=0.1)
    ben.add_argument("--ridge-lambda", type=float, default=1e-6)
    ben.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--report-prefix", required=True)
    ben.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
