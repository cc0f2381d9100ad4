import json
from typing import Any, Optional

from python_cdc_decoupling.augmentation import describe_pipeline
from python_cdc_decoupling.classes.config import TrainConfig
from python_cdc_decoupling.classes.dataset import EmbeddingDataset
from python_cdc_decoupling.classes.report import EvalReport, TrainingHistory
from python_cdc_decoupling.templates import TemplateBank
from python_cdc_decoupling.tools.logger import logger
from python_cdc_decoupling.tools.utils import sha256_file
from python_cdc_decoupling.trainer import mean_cross_template_similarity, template_similarity_matrix, \
    training_pipelines


def dataset_section(path: Optional[str], ds: EmbeddingDataset) -> dict:
    return {
        "path": path,
        "sha256": sha256_file(path) if path else None,
        "dim": ds.dim,
        "num_classes": ds.num_classes,
        "counts": ds.counts(),
        "base_classes": ds.base_classes,
        "new_classes": ds.new_classes,
    }


def templates_section(bank: TemplateBank, config: TrainConfig, evaluation: Optional[EvalReport]) -> dict:
    rows = []
    for m in range(bank.m):
        row = {"template": m}
        if evaluation is not None:
            row.update(
                accuracy=evaluation.per_template_accuracy[m],
                base=evaluation.per_template_base[m],
                new=evaluation.per_template_new[m],
            )
        rows.append(row)
    return {
        "m": bank.m,
        "template_dim": bank.template_dim,
        "channels": [describe_pipeline(p) for p in training_pipelines(config.replace(m=bank.m))],
        "per_template": rows,
    }


def similarity_section(bank: TemplateBank, with_matrix: bool = False) -> dict:
    section = {"mean_cross_template": mean_cross_template_similarity(bank)}
    if with_matrix:
        section["matrix"] = template_similarity_matrix(bank).tolist()
    return section


def build_report(
        command: str,
        config: dict,
        dataset: Optional[dict] = None,
        history: Optional[TrainingHistory] = None,
        evaluation: Optional[EvalReport] = None,
        templates: Optional[dict] = None,
        similarity: Optional[dict] = None,
        notes: Optional[list[str]] = None,
        **extra: Any,
) -> dict:
    """RunReport document; every section is present, absent ones are null."""
    return {
        "command": command,
        "config": config,
        "dataset": dataset,
        "history": history.to_dict() if history is not None else None,
        "eval": evaluation.to_dict() if evaluation is not None else None,
        "templates": templates,
        "similarity": similarity,
        "notes": list(notes or []),
        **extra,
    }


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False)


def write_report(report: dict, path: str):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps(report) + "\n")
    logger.info("Report written to %s", path)
