"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, project, train-dict,
encode, train-svm, evaluate), plus `pipeline` for the whole chain and
`synth` for planted sparse-coding fixtures. Every subcommand takes
--config (a plain ``key = value`` file), --out and --seed; command-line
flags override config-file values, which override defaults.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import datamodel, ksvd, omp, pipeline, rffd, smx, svm, synth
from .datamodel import SplitSpec
from .errors import ConfigError, DataError, NumericalError
from .ksvd import KsvdConfig
from .rffd import RffdConfig

_KNOWN_KEYS = {
    "manifest", "resize",
    "per_class_train", "per_class_test", "identity_disjoint",
    "rffd_dims", "rffd_candidates", "rffd_quality_threshold",
    "rffd_cv", "rffd_svm_c",
    "sparsity",
    "ksvd_max_iters", "ksvd_rel_tol", "ksvd_unused_atom_policy",
    "svm_c_grid", "svm_cv",
    "seed", "out",
    "synth_dim", "synth_atoms", "synth_sparsity", "synth_signals",
    "synth_noise_sigma",
}


def parse_config_file(path) -> dict[str, str]:
    """Parse a ``key = value`` config file; # starts a comment line."""
    raw: dict[str, str] = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            raw[key] = value.strip()
    return raw


def _require(raw, key) -> str:
    if key not in raw or raw[key] == "":
        raise ConfigError(f"missing required config key '{key}'")
    return raw[key]


def _get_int(raw, key, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(f"missing required config key '{key}'")
        return default
    try:
        return int(raw[key])
    except ValueError:
        raise ConfigError(f"config key '{key}': expected integer, got '{raw[key]}'") from None


def _get_float(raw, key, default):
    if key not in raw:
        return default
    try:
        return float(raw[key])
    except ValueError:
        raise ConfigError(f"config key '{key}': expected number, got '{raw[key]}'") from None


def _get_bool(raw, key, default):
    if key not in raw:
        return default
    value = raw[key].lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise ConfigError(f"config key '{key}': expected true/false, got '{raw[key]}'")


def _parse_cv(text: str):
    if text == "loo":
        return "loo"
    if text.startswith("kfold:"):
        try:
            k = int(text.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad cv spec '{text}'") from None
        if k < 2:
            raise ConfigError(f"cv fold count must be >= 2, got {k}")
        return k
    raise ConfigError(f"bad cv spec '{text}' (expected 'loo' or 'kfold:K')")


def _get_cv(raw, key, default):
    return _parse_cv(raw[key]) if key in raw else default


def _parse_num_list(text, kind, key):
    try:
        return tuple(kind(part.strip()) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"config key '{key}': bad list '{text}'") from None


def build_pipeline_config(raw: dict, out_dir: str, seed: int | None) -> pipeline.PipelineConfig:
    manifests = _parse_num_list(_require(raw, "manifest"), str, "manifest")
    resize = None
    if "resize" in raw:
        parts = raw["resize"].lower().split("x")
        if len(parts) != 2:
            raise ConfigError(f"bad resize '{raw['resize']}' (expected HxW)")
        try:
            resize = (int(parts[0]), int(parts[1]))
        except ValueError:
            raise ConfigError(f"bad resize '{raw['resize']}'") from None
    master_seed = seed if seed is not None else _get_int(raw, "seed", 0)
    threshold = None
    if raw.get("rffd_quality_threshold", "auto") != "auto":
        threshold = _get_float(raw, "rffd_quality_threshold", None)
    try:
        split = SplitSpec(
            per_class_train=_get_int(raw, "per_class_train"),
            per_class_test=_get_int(raw, "per_class_test"),
            identity_disjoint=_get_bool(raw, "identity_disjoint", False),
        )
        rffd_cfg = RffdConfig(
            dims=_parse_num_list(_require(raw, "rffd_dims"), int, "rffd_dims"),
            candidates_per_dim=_get_int(raw, "rffd_candidates", 10),
            quality_threshold=threshold,
            cv_folds=_get_cv(raw, "rffd_cv", "loo"),
            svm_C=_get_float(raw, "rffd_svm_c", 1.0),
        )
        ksvd_cfg = KsvdConfig(
            max_iters=_get_int(raw, "ksvd_max_iters", 50),
            rel_tol=_get_float(raw, "ksvd_rel_tol", 1e-4),
            unused_atom_policy=raw.get("ksvd_unused_atom_policy", ksvd.REPLACE_WORST),
        )
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    return pipeline.PipelineConfig(
        manifests=manifests,
        split=split,
        rffd=rffd_cfg,
        sparsity=_require(raw, "sparsity"),
        ksvd=ksvd_cfg,
        c_grid=_parse_num_list(
            raw.get("svm_c_grid", "0.01,0.1,1,10,100"), float, "svm_c_grid"
        ),
        cv=_get_cv(raw, "svm_cv", "loo"),
        out_dir=out_dir,
        master_seed=master_seed,
        resize=resize,
    ).derive_seeds()


def _out_dir(args, raw) -> str:
    out = args.out or raw.get("out")
    if not out:
        raise ConfigError("no output directory (pass --out or set 'out' in the config)")
    os.makedirs(out, exist_ok=True)
    return out


def _load_stage_dataset(out, name):
    path = os.path.join(out, name)
    if not os.path.isdir(path):
        raise DataError(
            f"missing '{name}' dataset under {out}; run the earlier stages first"
        )
    return datamodel.load_dataset(path)


def cmd_ingest(args, raw, cfg):
    ds = pipeline.ingest(cfg)
    datamodel.save_dataset(ds, os.path.join(cfg.out_dir, "dataset"))
    print(f"ingested {ds.n_samples} samples, d={ds.n_features}, "
          f"{ds.n_classes} classes -> {cfg.out_dir}/dataset")
    return 0


def cmd_project(args, raw, cfg):
    out = cfg.out_dir
    dataset_dir = os.path.join(out, "dataset")
    ds = (datamodel.load_dataset(dataset_dir) if os.path.isdir(dataset_dir)
          else pipeline.ingest(cfg))
    train, test = datamodel.split(ds, cfg.split)
    datamodel.save_dataset(train, os.path.join(out, pipeline.TRAIN_DIR))
    datamodel.save_dataset(test, os.path.join(out, pipeline.TEST_DIR))
    best, train_proj, report = rffd.search(train, cfg.rffd)
    rffd.write_report_csv(report, os.path.join(out, "report.csv"))
    smx.save_matrix(best.matrix, os.path.join(out, "projection.smx"))
    test_proj = test.with_features(rffd.project(best.matrix, test.features))
    datamodel.save_dataset(train_proj, os.path.join(out, pipeline.TRAIN_PROJECTED_DIR))
    datamodel.save_dataset(test_proj, os.path.join(out, pipeline.TEST_PROJECTED_DIR))
    print(f"best projection: m={best.m} seed={best.seed} "
          f"cv_accuracy={best.cv_accuracy:.4f}")
    return 0


def cmd_train_dict(args, raw, cfg):
    out = cfg.out_dir
    train_proj = _load_stage_dataset(out, pipeline.TRAIN_PROJECTED_DIR)
    initial = ksvd.init_dictionary(train_proj.features)
    level = pipeline.resolve_sparsity(cfg.sparsity, initial.n_atoms)
    refined, _ = ksvd.ksvd_refine(initial, train_proj.features, level, cfg.ksvd)
    smx.save_matrix(refined.atoms, os.path.join(out, "dictionary.smx"))
    ksvd.write_training_log_csv(refined.training_log,
                                os.path.join(out, "training_log.csv"))
    last = refined.training_log[-1]
    print(f"refined dictionary {refined.n_features}x{refined.n_atoms} "
          f"(L={level}) in {last.iteration} iterations, objective {last.objective:.6g}")
    return 0


def cmd_encode(args, raw, cfg):
    out = cfg.out_dir
    atoms = smx.load_matrix(os.path.join(out, "dictionary.smx"))
    level = pipeline.resolve_sparsity(cfg.sparsity, atoms.shape[1])
    named = {}
    for name, dirname in (("train", pipeline.TRAIN_PROJECTED_DIR),
                          ("test", pipeline.TEST_PROJECTED_DIR)):
        ds = _load_stage_dataset(out, dirname)
        codes = omp.batch_encode(atoms, ds.features, level)
        smx.save_matrix(codes, os.path.join(out, f"codes_{name}.smx"))
        named[name] = (ds.features, codes)
    pipeline.write_codes_stats_csv(atoms, named, os.path.join(out, "codes_stats.csv"))
    print(f"encoded train/test at L={level}")
    return 0


def cmd_train_svm(args, raw, cfg):
    out = cfg.out_dir
    train = _load_stage_dataset(out, pipeline.TRAIN_DIR)
    codes_train = smx.load_matrix(os.path.join(out, "codes_train.smx"))
    best_c, grid_report = svm.grid_search(
        codes_train, train.labels, cfg.c_grid, cv=cfg.cv,
        seed=cfg.svm_fold_seed, class_names=train.class_names,
    )
    svm.write_grid_report_csv(grid_report, os.path.join(out, "grid_report.csv"))
    model = svm.train(codes_train, train.labels, best_c,
                      class_names=train.class_names)
    atoms = smx.load_matrix(os.path.join(out, "dictionary.smx"))
    projection = smx.load_matrix(os.path.join(out, "projection.smx"))
    level = pipeline.resolve_sparsity(cfg.sparsity, atoms.shape[1])
    bundle = smx.ModelBundle(
        dictionary=atoms,
        projection=projection,
        svm_weights=model.weights,
        svm_bias=model.bias.reshape(-1, 1),
        meta=pipeline.bundle_meta(cfg, train.class_names, projection.shape[0],
                                  level, atoms.shape[1], best_c),
    )
    smx.save_bundle(os.path.join(out, pipeline.MODEL_DIR), bundle)
    print(f"trained SVM: C={best_c} -> {out}/{pipeline.MODEL_DIR}")
    return 0


def cmd_evaluate(args, raw, cfg):
    out = cfg.out_dir
    test = _load_stage_dataset(out, pipeline.TEST_DIR)
    bundle_dir = os.path.join(out, pipeline.MODEL_DIR)
    start = time.perf_counter()
    confusion, rates, average, _ = pipeline.evaluate_bundle(bundle_dir, test)
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    meta = smx.load_bundle(bundle_dir).meta
    payload = {
        "schema": pipeline.RESULTS_SCHEMA,
        "class_names": list(confusion.class_names),
        "per_class_rate": [None if np.isnan(r) else float(r) for r in rates],
        "average_rate": average,
        "confusion": confusion.counts.tolist(),
        "m": meta["m"],
        "C": meta["C"],
        "L": meta["L"],
        "K": meta["K"],
        "seeds": meta["seeds"],
        "stage_timings_ms": {"evaluate": elapsed_ms},
    }
    with open(os.path.join(out, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"average recognition rate: {average:.4f}")
    return 0


def cmd_pipeline(args, raw, cfg):
    result = pipeline.run_pipeline(cfg)
    print(f"pipeline complete: m={result.best_candidate.m} "
          f"C={result.model.C} L={result.sparsity} "
          f"average_rate={result.average_rate:.4f}")
    return 0


def cmd_synth(args, raw, cfg_unused):
    out = _out_dir(args, raw)
    seed = args.seed if args.seed is not None else _get_int(raw, "seed", 0)
    try:
        spec = synth.SynthSpec(
            dim=_get_int(raw, "synth_dim"),
            n_atoms=_get_int(raw, "synth_atoms"),
            sparsity=_get_int(raw, "synth_sparsity"),
            n_signals=_get_int(raw, "synth_signals"),
            noise_sigma=_get_float(raw, "synth_noise_sigma", 0.0),
            seed=seed,
        )
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    atoms, codes, signals = synth.synth_generate(spec)
    smx.save_matrix(atoms, os.path.join(out, "d_true.smx"))
    smx.save_matrix(codes, os.path.join(out, "codes_true.smx"))
    smx.save_matrix(signals, os.path.join(out, "signals.smx"))
    print(f"wrote planted instance dim={spec.dim} atoms={spec.n_atoms} "
          f"L={spec.sparsity} N={spec.n_signals} -> {out}")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "project": cmd_project,
    "train-dict": cmd_train_dict,
    "encode": cmd_encode,
    "train-svm": cmd_train_svm,
    "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sparseface",
        description="Sparse-representation image classification pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
    args = parser.parse_args(argv)
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        raw = parse_config_file(args.config) if args.config else {}
        if args.command == "synth":
            return cmd_synth(args, raw, None)
        out = _out_dir(args, raw)
        cfg = build_pipeline_config(raw, out, args.seed)
        return _COMMANDS[args.command](args, raw, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
