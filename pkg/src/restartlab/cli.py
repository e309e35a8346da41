"""Experiment pipeline subcommands.

Stages write one JSON document per instance (resumable, parallel-friendly)
plus manifests tying a corpus together.  Every output embeds the
parameters and seeds needed to regenerate it, and all writes are atomic
(temp file + rename).  Worker counts never affect results: every run is
seeded by substreams of the recorded master seed.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import dist, evaluation, features, ml, probsat, rtd
from .cnf import Formula, dpll_satisfiable, generate_random_3sat, parse_dimacs, write_dimacs
from .dist import DistFamily, FitResult
from .restart import FixedCutoff, NoRestart, Luby, parse_policy
from .rngutil import substream_seed

SCHEMA_VERSION = 1


class DataError(Exception):
    """Missing or malformed pipeline inputs."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# IO helpers
# ---------------------------------------------------------------------------

def _write_json(path: str, payload: dict) -> None:
    payload = dict(payload)
    payload.setdefault("schema_version", SCHEMA_VERSION)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise DataError(f"missing input file {path}")
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{path}: schema_version {version!r}, expected {SCHEMA_VERSION}")
    return payload


def _write_csv(path: str, header: list[str], rows: list) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(v) for v in row) + "\n")
    os.replace(tmp, path)


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load_manifest(path: str) -> tuple[dict, str]:
    payload = _read_json(path)
    if payload.get("kind") != "manifest":
        raise DataError(f"{path} is not a manifest")
    return payload, os.path.dirname(os.path.abspath(path))


def _load_formula(entry: dict, base: str) -> Formula:
    path = os.path.join(base, entry["path"])
    if not os.path.exists(path):
        raise DataError(f"missing instance file {path}")
    with open(path) as fh:
        f = parse_dimacs(fh.read())
    f.metadata["instance_id"] = entry["id"]
    return f


def _instance_json(directory: str, instance_id: str) -> str:
    return os.path.join(directory, f"{instance_id}.json")


# ---------------------------------------------------------------------------
# generate / filter
# ---------------------------------------------------------------------------

def _cmd_generate(args) -> int:
    out = args.out
    instance_dir = os.path.join(out, "instances")
    os.makedirs(instance_dir, exist_ok=True)
    entries = []
    for i in range(args.count):
        seed = substream_seed(args.seed, i)
        f = generate_random_3sat(args.n, args.ratio, seed)
        iid = f"n{args.n}_i{i:04d}"
        f.metadata["instance_id"] = iid
        path = os.path.join(instance_dir, f"{iid}.cnf")
        tmp = path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(write_dimacs(f))
        os.replace(tmp, path)
        entries.append(
            {
                "id": iid,
                "path": os.path.join("instances", f"{iid}.cnf"),
                "n": args.n,
                "ratio": args.ratio,
                "seed": seed,
            }
        )
    _write_json(
        os.path.join(out, "manifest.json"),
        {
            "kind": "manifest",
            "config": {
                "n": args.n,
                "ratio": args.ratio,
                "count": args.count,
                "seed": args.seed,
            },
            "instances": entries,
        },
    )
    print(f"generated {len(entries)} instances under {out}")
    return 0


def _filter_task(args):
    index, entry, base, node_budget = args
    f = _load_formula(entry, base)
    verdict = dpll_satisfiable(f, node_budget)
    return index, verdict.status, verdict.decisions


def _cmd_filter(args) -> int:
    manifest, base = _load_manifest(args.manifest)
    tasks = [
        (i, entry, base, args.node_budget)
        for i, entry in enumerate(manifest["instances"])
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_filter_task, tasks, chunksize=1))
    else:
        results = [_filter_task(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    kept = []
    counts = {"sat": 0, "unsat": 0, "unknown": 0}
    for (index, status, decisions), entry in zip(results, manifest["instances"]):
        counts[status] += 1
        if status == "sat":
            kept.append({**entry, "verdict": status, "dpll_decisions": decisions})
    out_path = args.out or os.path.join(base, "manifest.filtered.json")
    _write_json(
        out_path,
        {
            "kind": "manifest",
            "config": {**manifest["config"], "node_budget": args.node_budget},
            "filter_counts": counts,
            "instances": kept,
        },
    )
    print(
        f"filter: {counts['sat']} sat, {counts['unsat']} unsat, "
        f"{counts['unknown']} unknown -> {out_path}"
    )
    return 0


# ---------------------------------------------------------------------------
# sample / fit / restart-time
# ---------------------------------------------------------------------------

def _sample_task(args):
    index, entry, base, cb, cm, runs, timeout, master_seed = args
    f = _load_formula(entry, base)
    cfg = probsat.SolverConfig(c_b=cb, c_m=cm, seed=master_seed)
    sample = rtd.sample_rtd(f, cfg, runs, master_seed, timeout)
    return index, sample.to_dict()


def _cmd_sample(args) -> int:
    manifest, base = _load_manifest(args.manifest)
    out_dir = os.path.join(args.out, "rtd")
    tasks = [
        (
            i,
            entry,
            base,
            args.cb,
            args.cm,
            args.runs,
            args.timeout,
            substream_seed(args.seed, i),
        )
        for i, entry in enumerate(manifest["instances"])
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_sample_task, tasks, chunksize=1))
    else:
        results = [_sample_task(t) for t in tasks]
    for _index, payload in sorted(results, key=lambda r: r[0]):
        payload["config"] = {
            "runs": args.runs,
            "timeout": args.timeout,
            "cb": args.cb,
            "cm": args.cm,
            "seed": args.seed,
        }
        _write_json(_instance_json(out_dir, payload["instance_id"]), payload)
    print(f"sampled {len(results)} instances -> {out_dir}")
    return 0


def _load_rtd(rtd_dir: str, instance_id: str) -> rtd.RtdSample:
    payload = _read_json(_instance_json(rtd_dir, instance_id))
    return rtd.RtdSample.from_dict(payload)


def _cmd_fit(args) -> int:
    manifest, _base = _load_manifest(args.manifest)
    out_dir = os.path.join(args.out, "fits")
    fitted = 0
    skipped = []
    for entry in manifest["instances"]:
        sample = _load_rtd(args.rtd_dir, entry["id"])
        try:
            selection = rtd.fit_all(sample, alpha=args.alpha)
        except (ValueError, dist.FitError) as exc:
            skipped.append({"id": entry["id"], "reason": str(exc)})
            continue
        x_star, e_hat = rtd.empirical_optimal(sample)
        payload = {
            "instance_id": entry["id"],
            "alpha": args.alpha,
            "fits": {
                family.label: selection.all_fits[family].to_dict()
                for family in dist.FAMILY_ORDER
            },
            "winner": selection.winner.label if selection.winner else None,
            "empirical_optimal": {"x_star": x_star, "e_hat": e_hat},
            "mean_flips": sample.mean_flips,
        }
        _write_json(_instance_json(out_dir, entry["id"]), payload)
        if args.ecdf_csv:
            _write_ecdf_csv(args.out, sample, selection)
        fitted += 1
    if skipped:
        _write_json(os.path.join(args.out, "fit_skipped.json"), {"skipped": skipped})
    print(f"fitted {fitted} instances ({len(skipped)} skipped) -> {out_dir}")
    return 0


def _write_ecdf_csv(out: str, sample: rtd.RtdSample, selection) -> None:
    rows = []
    for x, level in rtd.ecdf(sample):
        row = [x, level]
        for family in (DistFamily.LOGNORMAL, DistFamily.WEIBULL, DistFamily.GP):
            fit = selection.all_fits[family]
            row.append(float(dist.cdf(family, fit.params, float(x))))
        rows.append(row)
    _write_csv(
        os.path.join(out, "ecdf", f"{sample.instance_id}.csv"),
        ["x", "ecdf", "lognormal_cdf", "weibull_cdf", "gp_cdf"],
        rows,
    )


def _load_fits(fits_dir: str, instance_id: str) -> dict:
    payload = _read_json(_instance_json(fits_dir, instance_id))
    return {
        DistFamily.from_label(label): FitResult.from_dict(d)
        for label, d in payload["fits"].items()
    }


def _cmd_restart_time(args) -> int:
    manifest, _base = _load_manifest(args.manifest)
    out_dir = os.path.join(args.out, "restart_times")
    written = 0
    for entry in manifest["instances"]:
        fit_payload = _read_json(_instance_json(args.fits_dir, entry["id"]))
        winner_label = fit_payload["winner"]
        if winner_label is None:
            payload = {
                "instance_id": entry["id"],
                "family": None,
                "recommendation": None,
                "note": "no fit passed the KS test",
            }
        else:
            fit = FitResult.from_dict(fit_payload["fits"][winner_label])
            rec = dist.optimal_restart_time(fit.family, fit.params)
            payload = {
                "instance_id": entry["id"],
                "family": winner_label,
                "recommendation": rec.to_dict(),
            }
        _write_json(_instance_json(out_dir, entry["id"]), payload)
        written += 1
    print(f"restart times for {written} instances -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# features / train / predict
# ---------------------------------------------------------------------------

def _features_task(args):
    index, entry, base, seed, probe_budget = args
    f = _load_formula(entry, base)
    cfg = probsat.SolverConfig(seed=seed)
    fv = features.extract_features(f, cfg, probe_budget)
    return index, entry["id"], fv.to_dict()


def _cmd_features(args) -> int:
    manifest, base = _load_manifest(args.manifest)
    out_dir = os.path.join(args.out, "features")
    tasks = [
        (i, entry, base, substream_seed(args.seed, i), args.probe_budget)
        for i, entry in enumerate(manifest["instances"])
    ]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_features_task, tasks, chunksize=1))
    else:
        results = [_features_task(t) for t in tasks]
    for _index, iid, values in sorted(results, key=lambda r: r[0]):
        _write_json(
            _instance_json(out_dir, iid),
            {
                "instance_id": iid,
                "features": values,
                "config": {"seed": args.seed, "probe_budget": args.probe_budget},
            },
        )
    print(f"extracted features for {len(results)} instances -> {out_dir}")
    return 0


def _load_features(features_dir: str, instance_id: str) -> features.FeatureVector:
    payload = _read_json(_instance_json(features_dir, instance_id))
    return features.FeatureVector.from_dict(payload["features"])


def _cmd_train(args) -> int:
    manifest, _base = _load_manifest(args.manifest)
    examples = []
    for entry in manifest["instances"]:
        fits = _load_fits(args.fits_dir, entry["id"])
        fv = _load_features(args.features_dir, entry["id"])
        sample = _load_rtd(args.rtd_dir, entry["id"])
        examples.append(ml.make_training_example(fv, fits, sample))
    config = ml.TrainConfig(epochs=args.epochs, patience=args.patience)
    model = ml.train_pipeline(
        examples, seed=args.seed, n_trees=args.trees, train_config=config
    )
    payload = model.to_dict()
    payload["kind"] = "model_bundle"
    _write_json(args.out, payload)
    print(f"trained pipeline on {len(examples)} examples -> {args.out}")
    return 0


def _cmd_predict(args) -> int:
    manifest, _base = _load_manifest(args.manifest)
    bundle = _read_json(args.model)
    if bundle.get("kind") != "model_bundle":
        raise DataError(f"{args.model} is not a model bundle")
    model = ml.PipelineModel.from_dict(bundle)
    out_dir = os.path.join(args.out, "predictions")
    for entry in manifest["instances"]:
        fv = _load_features(args.features_dir, entry["id"])
        pred = ml.pipeline_predict(model, fv)
        payload = {"instance_id": entry["id"], **pred.to_dict()}
        _write_json(_instance_json(out_dir, entry["id"]), payload)
    print(f"predictions for {len(manifest['instances'])} instances -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / report
# ---------------------------------------------------------------------------

def _resolve_policy(spec_text: str, entry: dict, predictions_dir: str | None):
    if spec_text == "predicted":
        if predictions_dir is None:
            raise DataError("policy 'predicted' requires --predictions-dir")
        payload = _read_json(_instance_json(predictions_dir, entry["id"]))
        rec = payload.get("recommendation")
        if rec is None or rec.get("t") is None:
            return NoRestart()
        return FixedCutoff(max(1, int(round(rec["t"]))))
    if spec_text.startswith("luby:") and spec_text.endswith("n"):
        factor = int(spec_text[len("luby:"):-1])
        return Luby(factor * entry["n"])
    return parse_policy(spec_text)


def _cmd_evaluate(args) -> int:
    manifest, base = _load_manifest(args.manifest)
    entries = manifest["instances"]
    instances = [_load_formula(entry, base) for entry in entries]
    policy_specs = [s.strip() for s in args.policies.split(",") if s.strip()]
    if len(policy_specs) < 2:
        raise DataError("need at least two policies")
    policies = {
        spec_text: {
            entry["id"]: _resolve_policy(spec_text, entry, args.predictions_dir)
            for entry in entries
        }
        for spec_text in policy_specs
    }
    cfg = probsat.SolverConfig(c_b=args.cb, c_m=args.cm, seed=args.seed)
    report = evaluation.head_to_head(
        instances,
        policies,
        cfg,
        runs_per_instance=args.runs,
        total_budget=args.budget,
        master_seed=args.seed,
        workers=args.workers,
    )
    payload = report.to_dict()
    payload["policies_resolved"] = {
        label: {iid: str(policy) for iid, policy in mapping.items()}
        for label, mapping in policies.items()
    }
    _write_json(os.path.join(args.out, "eval_report.json"), payload)
    for pair in report.pairs:
        name = f"scatter_{_slug(pair.baseline)}_vs_{_slug(pair.candidate)}.csv"
        _write_csv(
            os.path.join(args.out, name),
            ["instance_id", "log_mean_policy_A", "log_mean_policy_B"],
            pair.scatter_rows(),
        )
        print(
            f"{pair.baseline} vs {pair.candidate}: GM speedup "
            f"{pair.geometric_mean:.4f} (t p={pair.t_p:.3g}, "
            f"wilcoxon p={pair.wilcoxon_p:.3g})"
        )
    print(f"report -> {os.path.join(args.out, 'eval_report.json')}")
    return 0


def _slug(label: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in label)


def _cmd_report(args) -> int:
    manifest, _base = _load_manifest(args.manifest)
    table1 = {family.label: {"passed": 0, "won": 0} for family in dist.FAMILY_ORDER}
    none_count = 0
    items = []
    unclassified = []
    for entry in manifest["instances"]:
        payload = _read_json(_instance_json(args.fits_dir, entry["id"]))
        alpha = payload["alpha"]
        fits = {
            DistFamily.from_label(label): FitResult.from_dict(d)
            for label, d in payload["fits"].items()
        }
        for family, fit in fits.items():
            if fit.p_value >= alpha:
                table1[family.label]["passed"] += 1
        if payload["winner"] is None:
            none_count += 1
            unclassified.append(entry["id"])
        else:
            table1[payload["winner"]]["won"] += 1
            sample = _load_rtd(args.rtd_dir, entry["id"])
            items.append((fits, sample))
    rows1 = [
        [family.short, table1[family.label]["passed"], table1[family.label]["won"]]
        for family in (DistFamily.WEIBULL, DistFamily.LOGNORMAL, DistFamily.GP)
    ]
    rows1.append(["none", none_count, none_count])
    _write_csv(os.path.join(args.out, "table1.csv"), ["family", "passed", "won"], rows1)

    if not items:
        raise DataError("no classified instances; cannot build the subset table")
    table2 = evaluation.subset_speedup_table(items)
    rows2 = [
        [label, table2[label]["ks"], table2[label]["speedup"]]
        for label in evaluation.SUBSET_LABELS
    ]
    _write_csv(
        os.path.join(args.out, "table2.csv"),
        ["subset", "ks_best_gm", "speedup_best_gm"],
        rows2,
    )
    if unclassified:
        _write_json(
            os.path.join(args.out, "unclassified.json"),
            {"instances": unclassified},
        )
    print(f"tables -> {args.out} (classified {len(items)}, unclassified {none_count})")
    return 0


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

def _apply_config_defaults(subparsers: dict, argv: list[str]) -> None:
    """--config JSON supplies per-subcommand defaults; explicit flags win."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    try:
        config_path = argv[idx + 1]
    except IndexError as exc:
        raise SystemExit(1) from exc
    with open(config_path) as fh:
        config = json.load(fh)
    subcommand = argv[0] if argv else ""
    if subcommand in subparsers:
        defaults = {**config.get("shared", {}), **config.get(subcommand, {})}
        subparsers[subcommand].set_defaults(**defaults)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = _Parser(prog="restartlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    registry: dict = {}

    def add_parser(name, **kwargs):
        registry[name] = sub.add_parser(name, **kwargs)
        return registry[name]

    def common(p):
        p.add_argument("--config", help="JSON file with default flag values")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--out", default="out", help="output directory")

    p = add_parser("generate", help="random 3-SAT instances + manifest")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--ratio", type=float, default=4.26)
    p.add_argument("--count", type=int, required=True)
    p.set_defaults(func=_cmd_generate)

    p = add_parser("filter", help="keep DPLL-verified satisfiable instances")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--node-budget", type=int, default=200_000)
    p.set_defaults(func=_cmd_filter, out=None)

    p = add_parser("sample", help="sample runtime distributions")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--timeout", type=int, default=20_000_000)
    p.add_argument("--cb", type=float, default=probsat.DEFAULT_CB)
    p.add_argument("--cm", type=float, default=probsat.DEFAULT_CM)
    p.set_defaults(func=_cmd_sample)

    p = add_parser("fit", help="MLE fits, KS winner, empirical optimum")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--rtd-dir", required=True)
    p.add_argument("--alpha", type=float, default=rtd.DEFAULT_ALPHA)
    p.add_argument("--ecdf-csv", action="store_true", help="also write ECDF overlays")
    p.set_defaults(func=_cmd_fit)

    p = add_parser("restart-time", help="restart times from winner fits")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fits-dir", required=True)
    p.set_defaults(func=_cmd_restart_time)

    p = add_parser("features", help="extract instance features")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--probe-budget", type=int, default=100_000)
    p.set_defaults(func=_cmd_features)

    p = add_parser("train", help="train the family forest and parameter nets")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-dir", required=True)
    p.add_argument("--fits-dir", required=True)
    p.add_argument("--rtd-dir", required=True)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--epochs", type=int, default=2000)
    p.add_argument("--patience", type=int, default=100)
    p.set_defaults(func=_cmd_train, out="model.json")

    p = add_parser("predict", help="predict families, parameters, restarts")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--features-dir", required=True)
    p.set_defaults(func=_cmd_predict)

    p = add_parser("evaluate", help="head-to-head policy comparison")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument(
        "--policies",
        default="none,luby:20n,predicted",
        help="comma list: none | fixed:<t> | luby:<a> | luby:<k>n | predicted",
    )
    p.add_argument("--predictions-dir")
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--budget", type=int, default=10**9)
    p.add_argument("--cb", type=float, default=probsat.DEFAULT_CB)
    p.add_argument("--cm", type=float, default=probsat.DEFAULT_CM)
    p.set_defaults(func=_cmd_evaluate)

    p = add_parser("report", help="fit-summary and subset-speedup tables")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--fits-dir", required=True)
    p.add_argument("--rtd-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser, registry


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subparsers = build_parser()
    _apply_config_defaults(subparsers, argv)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
