"""End-to-end pipeline: ingest -> split -> projection search ->
dictionary refinement -> sparse coding -> SVM -> metrics.

Every stage's artifacts are persisted under the run's output directory;
`results.json` summarizes the run. All randomness is derived from one
master seed, so identical configs reproduce identical outputs.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import datamodel, ksvd, omp, rffd, smx, svm
from .datamodel import LabeledDataset, SplitSpec
from .errors import ConfigError, DataError
from .ksvd import KsvdConfig
from .rffd import RffdConfig
from .seeding import derive_seed

RESULTS_SCHEMA = 1
INCOMPLETE_FLAG = "INCOMPLETE"

# seed-derivation tags, one per consumer of randomness
SEED_SPLIT = 1
SEED_RFFD = 2
SEED_KSVD = 3
SEED_SVM_FOLDS = 4

TRAIN_DIR = "train"
TEST_DIR = "test"
TRAIN_PROJECTED_DIR = "train_projected"
TEST_PROJECTED_DIR = "test_projected"
MODEL_DIR = "model"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything a full run needs. Sub-config seeds are derived from
    master_seed by derive_seeds(); configs built through the CLI always
    come out that way."""

    manifests: tuple[str, ...]
    split: SplitSpec
    rffd: RffdConfig
    sparsity: int | str
    ksvd: KsvdConfig
    c_grid: tuple[float, ...]
    cv: int | str
    out_dir: str
    master_seed: int = 0
    resize: tuple[int, int] | None = None

    def derive_seeds(self) -> "PipelineConfig":
        """Copy with every stage seed recomputed from master_seed."""
        from dataclasses import replace

        return replace(
            self,
            split=replace(self.split, shuffle_seed=derive_seed(self.master_seed, SEED_SPLIT)),
            rffd=replace(self.rffd, master_seed=derive_seed(self.master_seed, SEED_RFFD)),
            ksvd=replace(self.ksvd, seed=derive_seed(self.master_seed, SEED_KSVD)),
        )

    @property
    def svm_fold_seed(self) -> int:
        return derive_seed(self.master_seed, SEED_SVM_FOLDS)


def resolve_sparsity(value: int | str, n_atoms: int) -> int:
    """Resolve an absolute count or a percentage string like "15%" to a
    per-signal sparsity level: floor(pct * n_atoms), at least 1."""
    if isinstance(value, str):
        text = value.strip()
        if text.endswith("%"):
            try:
                pct = Fraction(text[:-1].strip()) / 100
            except (ValueError, ZeroDivisionError):
                raise ConfigError(f"bad sparsity percentage '{value}'") from None
            level = math.floor(pct * n_atoms)
        else:
            try:
                level = int(text)
            except ValueError:
                raise ConfigError(f"bad sparsity '{value}'") from None
    else:
        level = int(value)
    if level < 1:
        raise ConfigError(
            f"sparsity '{value}' resolves to {level} for {n_atoms} atoms; need >= 1"
        )
    return level


def ingest(cfg: PipelineConfig) -> LabeledDataset:
    """Load and concatenate the configured manifests."""
    parts = [datamodel.load_manifest(m, resize=cfg.resize) for m in cfg.manifests]
    return parts[0] if len(parts) == 1 else datamodel.concat_datasets(parts)


@dataclass
class PipelineResult:
    """In-memory view of one completed run."""

    config: PipelineConfig
    train: LabeledDataset
    test: LabeledDataset
    best_candidate: rffd.ProjectionCandidate
    candidate_report: list
    dictionary: ksvd.Dictionary
    sparsity: int
    codes_train: np.ndarray
    codes_test: np.ndarray
    grid_report: list
    model: svm.LinearSvmModel
    confusion: datamodel.ConfusionMatrix
    per_class_rates: np.ndarray
    average_rate: float
    test_errors: np.ndarray
    stage_timings_ms: dict


class _StageTimer:
    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.timings: dict[str, float] = {}

    def run(self, name, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            flag = os.path.join(self.out_dir, INCOMPLETE_FLAG)
            with open(flag, "w", encoding="utf-8") as fh:
                fh.write(f"stage: {name}\nerror: {exc}\n")
            raise type(exc)(f"stage '{name}' failed: {exc}") from exc
        self.timings[name] = (time.perf_counter() - start) * 1000.0
        return result


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Execute the whole pipeline and persist every artifact under
    cfg.out_dir. A stage failure leaves an INCOMPLETE flag file naming
    the stage and re-raises with the stage attached."""
    cfg = cfg.derive_seeds()
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    flag = os.path.join(out, INCOMPLETE_FLAG)
    if os.path.exists(flag):
        os.remove(flag)
    timer = _StageTimer(out)

    ds = timer.run("ingest", lambda: ingest(cfg))

    def do_split():
        train, test = datamodel.split(ds, cfg.split)
        datamodel.save_dataset(train, os.path.join(out, TRAIN_DIR))
        datamodel.save_dataset(test, os.path.join(out, TEST_DIR))
        return train, test

    train, test = timer.run("split", do_split)

    def do_search():
        best, train_proj, report = rffd.search(train, cfg.rffd)
        rffd.write_report_csv(report, os.path.join(out, "report.csv"))
        smx.save_matrix(best.matrix, os.path.join(out, "projection.smx"))
        test_proj = test.with_features(rffd.project(best.matrix, test.features))
        datamodel.save_dataset(train_proj, os.path.join(out, TRAIN_PROJECTED_DIR))
        datamodel.save_dataset(test_proj, os.path.join(out, TEST_PROJECTED_DIR))
        return best, report, train_proj, test_proj

    best, report, train_proj, test_proj = timer.run("rffd-search", do_search)

    def do_dictionary():
        initial = ksvd.init_dictionary(train_proj.features)
        level = resolve_sparsity(cfg.sparsity, initial.n_atoms)
        refined, _ = ksvd.ksvd_refine(initial, train_proj.features, level, cfg.ksvd)
        smx.save_matrix(refined.atoms, os.path.join(out, "dictionary.smx"))
        ksvd.write_training_log_csv(
            refined.training_log, os.path.join(out, "training_log.csv")
        )
        return refined, level

    dictionary, level = timer.run("train-dict", do_dictionary)

    def do_encode():
        codes_train = omp.batch_encode(dictionary.atoms, train_proj.features, level)
        codes_test = omp.batch_encode(dictionary.atoms, test_proj.features, level)
        smx.save_matrix(codes_train, os.path.join(out, "codes_train.smx"))
        smx.save_matrix(codes_test, os.path.join(out, "codes_test.smx"))
        write_codes_stats_csv(
            dictionary.atoms,
            {"train": (train_proj.features, codes_train),
             "test": (test_proj.features, codes_test)},
            os.path.join(out, "codes_stats.csv"),
        )
        return codes_train, codes_test

    codes_train, codes_test = timer.run("encode", do_encode)

    def do_train_svm():
        best_c, grid_report = svm.grid_search(
            codes_train,
            train.labels,
            cfg.c_grid,
            cv=cfg.cv,
            seed=cfg.svm_fold_seed,
            class_names=train.class_names,
        )
        svm.write_grid_report_csv(grid_report, os.path.join(out, "grid_report.csv"))
        model = svm.train(codes_train, train.labels, best_c, class_names=train.class_names)
        bundle = smx.ModelBundle(
            dictionary=dictionary.atoms,
            projection=best.matrix,
            svm_weights=model.weights,
            svm_bias=model.bias.reshape(-1, 1),
            meta=bundle_meta(cfg, train.class_names, best.m, level,
                             dictionary.n_atoms, best_c),
        )
        smx.save_bundle(os.path.join(out, MODEL_DIR), bundle)
        return model, grid_report

    model, grid_report = timer.run("train-svm", do_train_svm)

    def do_evaluate():
        predictions = svm.predict(model, codes_test)
        confusion, rates, average = datamodel.confusion_and_rates(
            test.labels, predictions, test.class_names
        )
        errors, _ = omp.reconstruction_errors(
            dictionary.atoms, test_proj.features, codes_test
        )
        return confusion, rates, average, errors

    confusion, rates, average, test_errors = timer.run("evaluate", do_evaluate)

    result = PipelineResult(
        config=cfg,
        train=train,
        test=test,
        best_candidate=best,
        candidate_report=report,
        dictionary=dictionary,
        sparsity=level,
        codes_train=codes_train,
        codes_test=codes_test,
        grid_report=grid_report,
        model=model,
        confusion=confusion,
        per_class_rates=rates,
        average_rate=average,
        test_errors=test_errors,
        stage_timings_ms=timer.timings,
    )
    emit_plots_data(result, out)
    write_results_json(result, os.path.join(out, "results.json"))
    return result


def bundle_meta(cfg: PipelineConfig, class_names, m, level, n_atoms, chosen_c) -> dict:
    return {
        "class_names": list(class_names),
        "m": int(m),
        "L": int(level),
        "K": int(n_atoms),
        "C": float(chosen_c),
        "seeds": {
            "master": int(cfg.master_seed),
            "split": int(cfg.split.shuffle_seed),
            "rffd": int(cfg.rffd.master_seed),
            "ksvd": int(cfg.ksvd.seed),
            "svm_folds": int(cfg.svm_fold_seed),
        },
    }


def write_codes_stats_csv(atoms, named_sets, path) -> None:
    """codes_stats.csv: per-sample support size and reconstruction
    residual, one row per encoded sample."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set", "sample_index", "support_size", "residual"])
        for name, (signals, codes) in named_sets.items():
            errors, _ = omp.reconstruction_errors(atoms, signals, codes)
            sizes = np.count_nonzero(codes, axis=0)
            for i in range(codes.shape[1]):
                writer.writerow([name, i, int(sizes[i]), errors[i]])


def emit_plots_data(result: PipelineResult, out_dir) -> None:
    """Write the CSVs behind the standard run plots: per-test-sample
    reconstruction error and the accuracy-vs-candidate curves (quality
    failures carry no accuracy and are omitted)."""
    path = os.path.join(out_dir, "reconstruction_error.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "absolute_error"])
        for i, err in enumerate(result.test_errors):
            writer.writerow([i, err])
    path = os.path.join(out_dir, "rffd_curves.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "candidate_index", "accuracy"])
        for row in result.candidate_report:
            if row.cv_accuracy is not None:
                writer.writerow([row.m, row.candidate_index, row.cv_accuracy])


def results_payload(result: PipelineResult) -> dict:
    rates = [None if math.isnan(r) else float(r) for r in result.per_class_rates]
    return {
        "schema": RESULTS_SCHEMA,
        "class_names": list(result.confusion.class_names),
        "per_class_rate": rates,
        "average_rate": result.average_rate,
        "confusion": result.confusion.counts.tolist(),
        "m": int(result.best_candidate.m),
        "C": float(result.model.C),
        "L": int(result.sparsity),
        "K": int(result.dictionary.n_atoms),
        "seeds": {
            "master": int(result.config.master_seed),
            "split": int(result.config.split.shuffle_seed),
            "rffd": int(result.config.rffd.master_seed),
            "ksvd": int(result.config.ksvd.seed),
            "svm_folds": int(result.config.svm_fold_seed),
        },
        "stage_timings_ms": result.stage_timings_ms,
    }


def write_results_json(result: PipelineResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(results_payload(result), fh, indent=2, sort_keys=True)
        fh.write("\n")


def evaluate_bundle(bundle_dir, test_ds: LabeledDataset):
    """Classify a raw test dataset with a persisted model bundle.

    Returns (confusion, per_class_rates, average_rate, predictions).
    Reprojects and re-encodes from the persisted matrices, so it doubles
    as a round-trip audit of the serialization path.
    """
    bundle = smx.load_bundle(bundle_dir)
    class_names = tuple(bundle.meta["class_names"])
    if tuple(test_ds.class_names) != class_names:
        raise DataError(
            "test dataset class names do not match the model bundle"
        )
    level = int(bundle.meta["L"])
    projected = rffd.project(bundle.projection, test_ds.features)
    codes = omp.batch_encode(bundle.dictionary, projected, level)
    model = svm.LinearSvmModel(
        weights=bundle.svm_weights,
        bias=bundle.svm_bias.ravel(),
        class_names=class_names,
        C=float(bundle.meta["C"]),
    )
    predictions = svm.predict(model, codes)
    confusion, rates, average = datamodel.confusion_and_rates(
        test_ds.labels, predictions, class_names
    )
    return confusion, rates, average, predictions
