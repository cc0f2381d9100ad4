"""
Actions behind `cdc gen|train|eval|sweep`.

Each action takes the dict of flags actually given on the command line and
returns the process exit code; failures propagate as exceptions and are
mapped to exit codes by the CLI.
"""

import time
from typing import Any, Callable, Mapping, Optional

import numpy as np

from python_cdc_decoupling.classes.config import ABLATIONS, ConfigError, ScmConfig, TrainConfig
from python_cdc_decoupling.classes.dataset import EmbeddingDataset
from python_cdc_decoupling.classes.enums import SplitTag
from python_cdc_decoupling.classes.report import EvalReport
from python_cdc_decoupling.datagen import centroid_transfer_gap, generate_scm_dataset, split_base_new
from python_cdc_decoupling.dataset_io import read_dataset, write_dataset
from python_cdc_decoupling.report import build_report, dataset_section, similarity_section, templates_section, \
    write_report
from python_cdc_decoupling.settings import load_config_file, resolve, resolve_path
from python_cdc_decoupling.templates import check_compatible, load_checkpoint, save_checkpoint
from python_cdc_decoupling.tools.logger import logger
from python_cdc_decoupling.tools.utils import parse_value_list
from python_cdc_decoupling.trainer import evaluate, harmonic_mean, train

DEFAULT_DATASET = "cdc_dataset.txt"
DEFAULT_CHECKPOINT = "cdc_checkpoint.bin"
DEFAULT_REPORT = "cdc_report.json"

SWEEP_AXES: dict[str, Callable[[str], Any]] = {
    "m": int,
    "beta": float,
    "gamma": float,
    "channels": str,
    "ablation": str,
}


def _echo(config: Any, flags: Mapping[str, Any], file_values: Mapping[str, Any], *paths: str) -> dict:
    echoed = {"train" if isinstance(config, TrainConfig) else "scm": config.to_dict()}
    echoed.update({key: flags.get(key, file_values.get(key)) for key in paths})
    return echoed


def _print_eval(evaluation: EvalReport, per_template_only: bool = False):
    if not per_template_only:
        print(f"Base: {evaluation.base_accuracy:.2f}  New: {evaluation.new_accuracy:.2f}  "
              f"HM: {evaluation.harmonic_mean:.2f}")
        print(f"Mean uncertainty: {evaluation.mean_uncertainty:.4f}  vacuous: {evaluation.vacuous_count}  "
              f"skipped (conflict): {evaluation.conflict_count}")
    for m, (overall, base, new) in enumerate(zip(evaluation.per_template_accuracy, evaluation.per_template_base,
                                                 evaluation.per_template_new)):
        print(f"Template {m}: all {overall:.2f}  base {base:.2f}  new {new:.2f}  "
              f"HM {harmonic_mean(base, new):.2f}")


def _has_test_partitions(ds: EmbeddingDataset) -> bool:
    return bool(ds.indices(SplitTag.BASE_TEST)) and bool(ds.indices(SplitTag.NEW_TEST))


def _prepare_training_set(ds: EmbeddingDataset, config: TrainConfig) -> EmbeddingDataset:
    if config.shots is None:
        return ds
    return split_base_new(ds, ds.base_classes, config.shots, config.seed)


def cmd_gen(flags: Mapping[str, Any]) -> int:
    file_values = load_config_file(flags.get("config"))
    scm = resolve(ScmConfig, flags, file_values)
    out = resolve_path("out", flags, file_values, DEFAULT_DATASET)
    ds = generate_scm_dataset(scm)
    write_dataset(ds, out)
    base, new, gap = centroid_transfer_gap(ds)
    counts = ds.counts()
    print(f"Wrote {out}: d={ds.dim} C={ds.num_classes} "
          + " ".join(f"{tag}={count}" for tag, count in counts.items()))
    print(f"Nearest-centroid baseline: base {base:.2f}  new {new:.2f}  gap {gap:.2f}")
    return 0


def cmd_train(flags: Mapping[str, Any]) -> int:
    file_values = load_config_file(flags.get("config"))
    config = resolve(TrainConfig, flags, file_values)
    dataset_path = resolve_path("dataset", flags, file_values)
    checkpoint = resolve_path("checkpoint", flags, file_values, DEFAULT_CHECKPOINT)
    report_path = resolve_path("report", flags, file_values, DEFAULT_REPORT)

    ds = _prepare_training_set(read_dataset(dataset_path), config)
    notes = []
    if config.m < 2 and config.beta > 0:
        notes.append(f"decoupling term inactive with m={config.m}, beta={config.beta} has no effect")
    if config.epochs == 0:
        notes.append("zero epochs: checkpoint equals the initialization")

    bank, history = train(ds, config)
    save_checkpoint(bank, checkpoint)

    evaluation = None
    if _has_test_partitions(ds):
        evaluation = evaluate(ds, bank, config)
        _print_eval(evaluation)
    else:
        notes.append("evaluation skipped: base-test or new-test partition is empty")

    report = build_report(
        "train",
        _echo(config, flags, file_values, "dataset", "checkpoint", "report", "preset"),
        dataset=dataset_section(dataset_path, ds),
        history=history,
        evaluation=evaluation,
        templates=templates_section(bank, config, evaluation),
        similarity=similarity_section(bank, bool(flags.get("similarity_matrix"))),
        notes=notes,
        checkpoint=checkpoint,
    )
    write_report(report, report_path)
    for note in notes:
        logger.warning(note)
    if history.epochs:
        print(f"Final epoch loss: {history.totals[-1]:.6f}")
    return 0


def cmd_eval(flags: Mapping[str, Any]) -> int:
    file_values = load_config_file(flags.get("config"))
    dataset_path = resolve_path("dataset", flags, file_values)
    checkpoint = resolve_path("checkpoint", flags, file_values, DEFAULT_CHECKPOINT)
    report_path = resolve_path("report", flags, file_values, DEFAULT_REPORT)

    ds = read_dataset(dataset_path)
    config = resolve(TrainConfig, flags, file_values)
    bank = load_checkpoint(checkpoint, config.seed)
    check_compatible(bank, ds.dim, ds.num_classes)
    config = config.replace(m=bank.m, template_dim=bank.template_dim)

    per_template_only = bool(flags.get("per_template_only"))
    evaluation = evaluate(ds, bank, config)
    _print_eval(evaluation, per_template_only)
    report = build_report(
        "eval",
        _echo(config, flags, file_values, "dataset", "checkpoint", "report"),
        dataset=dataset_section(dataset_path, ds),
        evaluation=None if per_template_only else evaluation,
        templates=templates_section(bank, config, evaluation),
        similarity=similarity_section(bank, bool(flags.get("similarity_matrix"))),
        checkpoint=checkpoint,
    )
    write_report(report, report_path)
    return 0


def _sweep_overrides(axis: str, value: Any) -> dict[str, Any]:
    if axis == "ablation":
        if value not in ABLATIONS:
            raise ConfigError(f"Unknown ablation row '{value}', expected one of {', '.join(ABLATIONS)}")
        return dict(ABLATIONS[value])
    return {axis: value}


def cmd_sweep(flags: Mapping[str, Any]) -> int:
    file_values = load_config_file(flags.get("config"))
    axis = flags.get("axis")
    if axis not in SWEEP_AXES:
        raise ConfigError(f"Unknown sweep axis '{axis}', expected one of {', '.join(SWEEP_AXES)}")
    base_config = resolve(TrainConfig, flags, file_values)
    try:
        values = parse_value_list(flags.get("values", ""), SWEEP_AXES[axis])
        seeds = parse_value_list(flags.get("seeds", str(base_config.seed)), int)
    except ValueError as e:
        raise ConfigError(f"Cannot parse sweep values: {e}")
    if not values:
        raise ConfigError("--values needs at least one value")
    if not seeds:
        raise ConfigError("--seeds needs at least one seed")
    report_path = resolve_path("report", flags, file_values, DEFAULT_REPORT)

    dataset_path: Optional[str] = flags.get("dataset", file_values.get("dataset"))
    shared = read_dataset(dataset_path) if dataset_path else None
    scm = None if shared is not None else resolve(ScmConfig, flags, file_values)
    generated: dict[int, EmbeddingDataset] = {}

    def dataset_for(seed: int) -> EmbeddingDataset:
        if shared is not None:
            return shared
        if seed not in generated:
            generated[seed] = generate_scm_dataset(scm.replace(seed=seed))
        return generated[seed]

    rows = []
    for value in values:
        overrides = _sweep_overrides(axis, value)
        results = []
        started = time.perf_counter()
        for seed in seeds:
            config = base_config.replace(**overrides, seed=seed)
            ds = _prepare_training_set(dataset_for(seed), config)
            bank, _ = train(ds, config)
            results.append(evaluate(ds, bank, config))
        base = float(np.mean([r.base_accuracy for r in results]))
        new = float(np.mean([r.new_accuracy for r in results]))
        row = {
            "axis": axis,
            "value": value,
            "seeds": seeds,
            "base": base,
            "new": new,
            "hm": harmonic_mean(base, new),
            "mean_uncertainty": float(np.mean([r.mean_uncertainty for r in results])),
            "wall_time": time.perf_counter() - started,
        }
        rows.append(row)
        print(f"{axis}={value}: base {base:.2f}  new {new:.2f}  HM {row['hm']:.2f}  "
              f"u {row['mean_uncertainty']:.4f}  {row['wall_time']:.1f}s")

    report = build_report(
        "sweep",
        _echo(base_config, flags, file_values, "dataset", "report", "preset"),
        dataset=dataset_section(dataset_path, shared) if shared is not None else None,
        notes=[] if shared is not None else ["each seed trained on its own generated SCM dataset"],
        rows=rows,
        scm=scm.to_dict() if scm is not None else None,
    )
    write_report(report, report_path)
    return 0
