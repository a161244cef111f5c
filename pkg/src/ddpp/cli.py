"""Command-line front end: dataset generation, campaigns, and reports.

Subcommands: gen, partition, run, report, oracle, ttest.  Exit codes:
0 success, 2 configuration error, 3 numerical or budget failure.
Campaign points may run in a thread pool capped by DDPP_THREADS.
"""

import argparse
import csv as csvmod
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, data, dpp, engine, metrics
from .errors import (BudgetViolationError, DdppError, InvalidConfigError,
                     NotPositiveDefiniteError, NotPsdError,
                     ScalingViolationError)
from .linalg import gram

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_NUMERICAL_ERRORS = (BudgetViolationError, NotPositiveDefiniteError,
                     NotPsdError, ScalingViolationError)


def _read_config_file(path):
    """Flat key=value lines; blank lines and # comments ignored."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _apply_config_file(args, run_parser):
    """File values fill in anything the command line left at its default."""
    if not getattr(args, "config", None):
        return args
    values = _read_config_file(args.config)
    actions = {a.dest: a for a in run_parser._actions}
    for key, raw in values.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise InvalidConfigError(f"unknown config key {key!r}")
        action = actions[dest]
        if getattr(args, dest) != action.default:
            continue  # flags win over the file
        if isinstance(action.default, bool):
            parsed = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            parsed = action.type(raw)
        else:
            parsed = raw
        setattr(args, dest, parsed)
    return args


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v != ""]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v != ""]


def _gen_dataset(seed, n_sources, args):
    """Synthetic dataset + partition for one campaign point."""
    n = n_sources * args.ni
    Z, labels = data.synth_gaussian_mixture(
        seed=seed, n=n, m=args.m, n_clusters=args.clusters,
        spread=args.spread, scale=args.scale, radius_jitter=args.radius_jitter,
        norm_tail=args.norm_tail, mean_sparsity=args.mean_sparsity)
    part = data.partition(n, n_sources, policy=args.partition_policy,
                          seed=seed, cluster_labels=labels, skew=args.skew)
    ds = data.Dataset(features=Z, partition=part, labels=labels)
    return data.apply_positivity_scale(ds, args.kT)


def _load_dataset(args, n_sources):
    fmt = "ddpm" if args.data.endswith(".ddpm") else "csv"
    Z, labels = data.load_features(args.data, fmt=fmt,
                                   label_column=args.label_column)
    if args.partition_file:
        with open(args.partition_file) as fh:
            part = data.SourcePartition.from_json(fh.read()).validate(Z.shape[0])
    else:
        part = data.partition(Z.shape[0], n_sources, policy=args.partition_policy,
                              seed=args.partition_seed, cluster_labels=labels,
                              skew=args.skew)
    ds = data.Dataset(features=Z, partition=part, labels=labels)
    return data.apply_positivity_scale(ds, args.kT)


def _worker_count():
    raw = os.environ.get("DDPP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidConfigError(f"DDPP_THREADS must be an integer, got {raw!r}")


def cmd_gen(args):
    os.makedirs(args.out, exist_ok=True)
    n = args.sources * args.ni if args.n is None else args.n
    if n % args.sources:
        raise InvalidConfigError(
            f"{n} samples do not split evenly over {args.sources} sources")
    Z, labels = data.synth_gaussian_mixture(
        seed=args.seed, n=n, m=args.m, n_clusters=args.clusters,
        spread=args.spread, scale=args.scale, radius_jitter=args.radius_jitter,
        norm_tail=args.norm_tail, mean_sparsity=args.mean_sparsity)
    part = data.partition(n, args.sources, policy=args.partition_policy,
                          seed=args.seed, cluster_labels=labels, skew=args.skew)
    data.save_ddpm(os.path.join(args.out, "features.ddpm"), Z, labels)
    with open(os.path.join(args.out, "partition.json"), "w") as fh:
        fh.write(part.to_json())
    _write_manifest(args.out, args, extra={"n": n})
    print(f"wrote {args.out}/features.ddpm ({n}x{args.m}) and partition.json")
    return 0


def cmd_partition(args):
    fmt = "ddpm" if args.data.endswith(".ddpm") else "csv"
    Z, labels = data.load_features(args.data, fmt=fmt,
                                   label_column=args.label_column)
    part = data.partition(Z.shape[0], args.sources, policy=args.partition_policy,
                          seed=args.seed, cluster_labels=labels, skew=args.skew)
    with open(args.out, "w") as fh:
        fh.write(part.to_json())
    print(f"wrote {args.out}")
    return 0


def _campaign_unit(args, seed, n_sources):
    """All runs sharing one dataset: every (R, strategy) pair for this seed."""
    if args.data:
        dataset = _load_dataset(args, n_sources)
    else:
        dataset = _gen_dataset(seed, n_sources, args)
    gt = engine.run_ground_truth(dataset, args.kT)
    lines = []
    for R in args.R:
        for strategy in args.strategies:
            cfg = engine.ExperimentConfig(
                n_sources=n_sources, dims=dataset.dims, total_select=args.kT,
                intervals=args.tT, sparsity=R, epsilon=args.epsilon,
                block_fraction=args.block_fraction, strategy=strategy,
                compression=args.compression, seed=seed,
                momentum=not args.no_momentum)
            result = engine.run_experiment(cfg, dataset,
                                           transport=args.transport,
                                           ground_truth=gt)
            lines.append(result.to_json_dict())
    gt_entry = {"indices": [int(i) for i in gt.indices],
                "logdet": dpp.subset_logdet(dataset.features, gt.indices),
                "scale": dataset.scale}
    return lines, gt_entry


def cmd_run(args):
    os.makedirs(args.out, exist_ok=True)
    seeds = _int_list(args.seed_list) if args.seed_list else list(range(args.seeds))
    if not seeds or not args.strategies:
        raise InvalidConfigError("need at least one seed and one strategy")
    units = [(seed, N) for N in args.N for seed in seeds]
    results_path = os.path.join(args.out, "results.jsonl")
    gt_cache = {}
    workers = _worker_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_campaign_unit, args, seed, N)
                   for seed, N in units]
        with open(results_path, "w") as fh:  # single writer, submission order
            for (seed, N), fut in zip(units, futures):
                lines, gt_entry = fut.result()
                for line in lines:
                    fh.write(json.dumps(line) + "\n")
                gt_cache[f"seed={seed},N={N},m={args.m},kT={args.kT}"] = gt_entry
    with open(os.path.join(args.out, "gt_cache.json"), "w") as fh:
        json.dump(gt_cache, fh, indent=1)
    _write_manifest(args.out, args, extra={"seeds": seeds})
    total = len(units) * len(args.R) * len(args.strategies)
    print(f"wrote {total} result lines to {results_path}")
    return 0


def _write_manifest(out_dir, args, extra=None):
    payload = {"tool_version": __version__, "command": sys.argv[1:],
               "resolved": {k: v for k, v in sorted(vars(args).items())
                            if k != "func"}}
    payload.update(extra or {})
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(payload, fh, indent=1, default=str)


def _load_results(path):
    with open(path) as fh:
        lines = [json.loads(ln) for ln in fh if ln.strip()]
    if not lines:
        raise InvalidConfigError(f"no result lines in {path}")
    return lines


def cmd_report(args):
    lines = _load_results(args.results)
    os.makedirs(args.out, exist_ok=True)
    cells = {}
    for line in lines:
        key = (line["strategy"], line["N"], line["R"], line.get("m"))
        cells.setdefault(key, []).append(line["rde"])
    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["strategy", "N", "R", "m", "mean_rde", "std_rde", "n"])
        for key in sorted(cells, key=str):
            vals = [v for v in cells[key] if v is not None]
            if vals:
                row = [f"{np.mean(vals):.6f}", f"{np.std(vals, ddof=1) if len(vals) > 1 else 0.0:.6f}", len(vals)]
            else:
                row = ["NA", "NA", 0]
            writer.writerow(list(key) + row)
    pairs = [tuple(p.split(":")) for p in args.pairs.split(",")] if args.pairs else []
    with open(os.path.join(args.out, "ttest.csv"), "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["strategy_a", "strategy_b", "N", "R", "t", "p"])
        for a, b in pairs:
            groups = {}
            for line in lines:
                if line["strategy"] in (a, b) and line["rde"] is not None:
                    groups.setdefault((line["N"], line["R"]), {}).setdefault(
                        line["strategy"], []).append(line["rde"])
            for (N, R), by_strategy in sorted(groups.items()):
                if a in by_strategy and b in by_strategy and \
                        len(by_strategy[a]) > 1 and len(by_strategy[b]) > 1:
                    t, p = metrics.welch_ttest(by_strategy[a], by_strategy[b])
                    writer.writerow([a, b, N, R, f"{t:.6f}", f"{p:.3e}"])
                else:
                    writer.writerow([a, b, N, R, "NA", "NA"])
    if args.pca_seed is not None:
        _write_pca_csv(args, lines)
    print(f"wrote report to {args.out}")
    return 0


def _write_pca_csv(args, lines):
    """Scatter coordinates for one seed, with a selected flag per sample."""
    manifest_path = os.path.join(os.path.dirname(os.path.abspath(args.results)),
                                 "manifest.json")
    with open(manifest_path) as fh:
        resolved = json.load(fh)["resolved"]
    match = [ln for ln in lines
             if ln["seed"] == args.pca_seed and ln["strategy"] == args.pca_strategy]
    if not match:
        raise InvalidConfigError(
            f"no result for seed {args.pca_seed} strategy {args.pca_strategy!r}")
    line = match[0]
    coerced = {k: f(resolved[k]) for k, f in [
        ("ni", int), ("m", int), ("clusters", int), ("kT", int),
        ("spread", float), ("scale", float), ("radius_jitter", float),
        ("norm_tail", float), ("mean_sparsity", float), ("skew", float)]}
    ns = argparse.Namespace(**{**resolved, **coerced})
    dataset = _gen_dataset(args.pca_seed, line["N"], ns)
    coords = metrics.pca2d(dataset.features)
    chosen = set(line["selected_indices"])
    out_path = os.path.join(args.out, f"pca_seed{args.pca_seed}.csv")
    with open(out_path, "w", newline="") as fh:
        writer = csvmod.writer(fh)
        writer.writerow(["x", "y", "label", "selected"])
        labels = dataset.labels if dataset.labels is not None else np.zeros(dataset.n, dtype=int)
        for i in range(dataset.n):
            writer.writerow([f"{coords[i, 0]:.6f}", f"{coords[i, 1]:.6f}",
                             int(labels[i]), int(i in chosen)])


def cmd_oracle(args):
    fmt = "ddpm" if args.data.endswith(".ddpm") else "csv"
    Z, _ = data.load_features(args.data, fmt=fmt, label_column=args.label_column)
    result = dpp.brute_force_map(gram(Z), args.k)
    print(json.dumps({"indices": result.indices,
                      "logdet": result.stepwise_logdets[-1]}))
    return 0


def cmd_ttest(args):
    lines = _load_results(args.results)
    xs = [ln[args.metric] for ln in lines
          if ln["strategy"] == args.a and ln.get(args.metric) is not None]
    ys = [ln[args.metric] for ln in lines
          if ln["strategy"] == args.b and ln.get(args.metric) is not None]
    if len(xs) < 2 or len(ys) < 2:
        raise InvalidConfigError("need at least two observations per strategy")
    t, p = metrics.welch_ttest(xs, ys)
    print(json.dumps({"a": args.a, "b": args.b, "metric": args.metric,
                      "t": t, "p": p, "n_a": len(xs), "n_b": len(ys)}))
    return 0


def _add_synth_args(p):
    p.add_argument("--ni", type=int, default=500, help="samples per source")
    p.add_argument("--m", type=int, default=64, help="feature dimensions")
    p.add_argument("--clusters", type=int, default=20)
    p.add_argument("--spread", type=float, default=0.06)
    p.add_argument("--scale", type=float, default=10.0)
    p.add_argument("--radius-jitter", type=float, default=0.2)
    p.add_argument("--norm-tail", type=float, default=0.4)
    p.add_argument("--mean-sparsity", type=float, default=0.3)
    p.add_argument("--partition-policy", default="cluster_skewed",
                   choices=["uniform_random", "cluster_skewed"])
    p.add_argument("--skew", type=float, default=0.1)


def build_parser():
    parser = argparse.ArgumentParser(prog="ddpp",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset + partition")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=None,
                   help="total samples (default sources*ni)")
    p.add_argument("--sources", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    _add_synth_args(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("partition", help="partition an existing dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--sources", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--label-column", action="store_true")
    p.add_argument("--partition-policy", default="uniform_random",
                   choices=["uniform_random", "cluster_skewed"])
    p.add_argument("--skew", type=float, default=0.5)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("run", help="execute a campaign, one JSON line per trial")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="key=value file; flags win")
    p.add_argument("--data", default=None, help="dataset file (else synthetic)")
    p.add_argument("--partition-file", default=None)
    p.add_argument("--partition-seed", type=int, default=0)
    p.add_argument("--label-column", action="store_true")
    p.add_argument("--strategies", type=lambda s: s.split(","),
                   default=["ddpp", "greedi"])
    p.add_argument("--seeds", type=int, default=20, help="seed count 0..n-1")
    p.add_argument("--seed-list", default=None, help="explicit seeds, comma separated")
    p.add_argument("--N", type=_int_list, default=[10], help="source count sweep")
    p.add_argument("--R", type=_float_list, default=None,
                   help="sparsity sweep (default 0.75*kT/tT)")
    p.add_argument("--kT", type=int, default=120)
    p.add_argument("--tT", type=int, default=2)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--block-fraction", type=float, default=0.5)
    p.add_argument("--compression", default="proposed",
                   choices=list(engine.COMPRESSIONS))
    p.add_argument("--no-momentum", action="store_true")
    p.add_argument("--transport", default="loopback",
                   choices=["loopback", "threads", "tcp"])
    _add_synth_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate results into CSV tables")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", default="ddpp:greedi",
                   help="t-test pairs, e.g. ddpp:greedi,ddpp:random")
    p.add_argument("--pca-seed", type=int, default=None)
    p.add_argument("--pca-strategy", default="ddpp")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("oracle", help="exhaustive MAP on a small dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--label-column", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("ttest", help="Welch t-test between two strategies")
    p.add_argument("--results", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", default="rde")
    p.set_defaults(func=cmd_ttest)
    parser._run_parser = sub.choices["run"]
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            _apply_config_file(args, parser._run_parser)
            if args.R is None:
                args.R = [0.75 * args.kT / args.tT]
        return args.func(args)
    except InvalidConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DdppError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
