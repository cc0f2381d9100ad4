"""
CDCDS v1 text format.

    CDCDS v1 d=<d> C=<C>
    <name_0>,<name_1>,...
    anchor,<class>,<v_1>,...,<v_d>          (optional, one per class)
    <split-tag>,<class>,<v_1>,...,<v_d>

Floats are written with 17 significant digits and every line, the last
included, ends with a newline. Sample rows must have unit L2 norm.
"""

import re
from typing import Optional

import numpy as np

from python_cdc_decoupling.classes.dataset import UNIT_NORM_TOLERANCE, DatasetInvariantError, EmbeddingDataset
from python_cdc_decoupling.classes.enums import SplitTag
from python_cdc_decoupling.numerics import DimensionMismatch as NumericDimensionMismatch
from python_cdc_decoupling.tools.logger import logger

HEADER_PATTERN = re.compile(r"^CDCDS v1 d=(\d+) C=(\d+)$")
ANCHOR_TAG = "anchor"


class DatasetFormatError(Exception):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class MalformedHeader(DatasetFormatError):
    pass


class DimensionMismatch(DatasetFormatError, NumericDimensionMismatch):
    pass


class UnknownSplitTag(DatasetFormatError):
    pass


class TruncatedFile(DatasetFormatError):
    pass


class MalformedRow(DatasetFormatError):
    pass


class NonUnitRow(MalformedRow):
    pass


def _format_row(tag: str, label: int, values: np.ndarray) -> str:
    return ",".join([tag, str(int(label))] + [format(float(v), ".17g") for v in values])


def write_dataset(ds: EmbeddingDataset, path: str):
    bad_names = [name for name in ds.class_names if not name or "," in name or "\n" in name]
    if bad_names:
        raise MalformedHeader(f"Class names cannot be empty or contain commas or newlines: {bad_names}")
    lines = [f"CDCDS v1 d={ds.dim} C={ds.num_classes}", ",".join(ds.class_names)]
    if ds.anchors is not None:
        lines += [_format_row(ANCHOR_TAG, c, ds.anchors[c]) for c in range(ds.num_classes)]
    lines += [_format_row(tag.value, label, x) for x, label, tag in zip(ds.features, ds.labels, ds.tags)]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    logger.info("Dataset written to %s (%d samples)", path, len(ds))


def _parse_header(line: str) -> tuple[int, int]:
    match = HEADER_PATTERN.match(line)
    if not match:
        raise MalformedHeader(f"expected 'CDCDS v1 d=<d> C=<C>', found {line[:60]!r}", line=1)
    dim, num_classes = int(match.group(1)), int(match.group(2))
    if dim < 1 or num_classes < 1:
        raise MalformedHeader(f"d and C must be positive, got d={dim} C={num_classes}", line=1)
    return dim, num_classes


def _parse_row(line: str, number: int, dim: int, num_classes: int) -> tuple[str, int, np.ndarray]:
    fields = line.split(",")
    if len(fields) < 2:
        raise MalformedRow(f"expected '<tag>,<class>,<values>', found {line[:60]!r}", line=number)
    tag = fields[0]
    if tag != ANCHOR_TAG and SplitTag.from_value(tag) is None:
        raise UnknownSplitTag(f"unknown split tag {tag!r}", line=number)
    try:
        label = int(fields[1])
    except ValueError:
        raise MalformedRow(f"class index {fields[1]!r} is not an integer", line=number)
    if not 0 <= label < num_classes:
        raise MalformedRow(f"class index {label} outside [0, {num_classes})", line=number)
    if len(fields) - 2 != dim:
        raise DimensionMismatch(f"expected {dim} values, found {len(fields) - 2}", line=number)
    try:
        values = np.array([float(v) for v in fields[2:]], dtype=np.float64)
    except ValueError:
        raise MalformedRow("values must be decimal floats", line=number)
    if not np.all(np.isfinite(values)):
        raise MalformedRow("values must be finite", line=number)
    if tag != ANCHOR_TAG:
        norm = float(np.linalg.norm(values))
        if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
            raise NonUnitRow(f"sample row has norm {norm:.9g}, expected 1", line=number)
    return tag, label, values


def read_dataset(path: str) -> EmbeddingDataset:
    with open(path, "rb") as handle:
        raw = handle.read()
    if not raw:
        raise MalformedHeader("empty file", line=1)
    if not raw.endswith(b"\n"):
        raise TruncatedFile(f"byte offset {len(raw)}: file does not end with a newline")
    try:
        lines = raw.decode("utf-8").split("\n")[:-1]
    except UnicodeDecodeError as e:
        raise MalformedHeader(f"byte offset {e.start}: file is not UTF-8 text")

    dim, num_classes = _parse_header(lines[0])
    if len(lines) < 2:
        raise TruncatedFile("missing class-name line", line=2)
    class_names = lines[1].split(",")
    if len(class_names) != num_classes or not all(class_names):
        raise MalformedHeader(f"expected {num_classes} class names, found {lines[1][:60]!r}", line=2)

    anchors = {}
    features, labels, tags = [], [], []
    for number, line in enumerate(lines[2:], start=3):
        tag, label, values = _parse_row(line, number, dim, num_classes)
        if tag == ANCHOR_TAG:
            if label in anchors:
                raise MalformedRow(f"duplicate anchor for class {label}", line=number)
            anchors[label] = values
        else:
            features.append(values)
            labels.append(label)
            tags.append(SplitTag.from_value(tag))

    if anchors and len(anchors) != num_classes:
        raise DatasetFormatError(f"{path}: anchors given for {len(anchors)} of {num_classes} classes")
    try:
        return EmbeddingDataset(
            dim=dim,
            num_classes=num_classes,
            class_names=class_names,
            features=np.array(features).reshape(-1, dim),
            labels=labels,
            tags=tags,
            anchors=np.stack([anchors[c] for c in range(num_classes)]) if anchors else None,
        )
    except DatasetInvariantError as e:
        raise DatasetFormatError(f"{path}: {e}") from e
