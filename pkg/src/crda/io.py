"""CSV datasets, DE masks and the textual model file."""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .classifier import CrdaModel
from .exceptions import FormatError
from .linalg import LabeledDataset

__all__ = [
    "FORMAT_VERSION",
    "load_dataset",
    "save_dataset",
    "load_mask",
    "save_mask",
    "save_model",
    "load_model",
    "format_number",
]

FORMAT_VERSION = 1


def format_number(x) -> str:
    return format(float(x), ".17g")


def load_dataset(path, has_labels: bool = True, class_names=None) -> LabeledDataset:
    """Read a row-per-observation CSV into a ``p x n`` dataset.

    With ``has_labels`` the first column holds the class label; labels are
    mapped to ``1..G`` in order of first appearance, or through
    ``class_names`` when given (as at predict time). Without labels every
    column is a feature and all observations get label 1.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        width = len(header)
        names = header[1:] if has_labels else header
        if not names:
            raise FormatError(f"{path}: no feature columns")
        raw_labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise FormatError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {width}")
            values = row[1:] if has_labels else row
            try:
                rows.append([float(v) for v in values])
            except ValueError:
                raise FormatError(
                    f"{path}: line {lineno} has a non-numeric feature value") from None
            if has_labels:
                raw_labels.append(row[0].strip())
    if not rows:
        raise FormatError(f"{path}: no observations")
    X = np.array(rows, dtype=float).T

    if not has_labels:
        classes = tuple(class_names) if class_names is not None else ("?",)
        return LabeledDataset(X, np.ones(X.shape[1], dtype=np.int64), tuple(names),
                              classes)
    if class_names is None:
        classes = tuple(dict.fromkeys(raw_labels))
    else:
        classes = tuple(class_names)
    index = {c: g for g, c in enumerate(classes, start=1)}
    try:
        y = np.array([index[c] for c in raw_labels], dtype=np.int64)
    except KeyError as exc:
        raise FormatError(f"{path}: unknown label {exc.args[0]!r}") from None
    return LabeledDataset(X, y, tuple(names), classes)


def save_dataset(data: LabeledDataset, path):
    names = data.feature_names or tuple(f"f{i + 1}" for i in range(data.p))
    classes = data.class_names or tuple(str(g) for g in range(1, data.n_classes + 1))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *names])
        for i in range(data.n):
            w.writerow([classes[data.labels[i] - 1],
                        *(format_number(v) for v in data.features[:, i])])


def load_mask(path) -> np.ndarray:
    """Boolean DE mask from the last column of a headed CSV (one row per feature)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r][1:]
    try:
        return np.array([int(r[-1]) for r in rows], dtype=bool)
    except ValueError:
        raise FormatError(f"{path}: mask entries must be 0 or 1") from None


def save_mask(mask, path, feature_names=None):
    mask = np.asarray(mask, dtype=bool)
    names = feature_names or [f"f{i + 1}" for i in range(mask.size)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "de"])
        for name, m in zip(names, mask):
            w.writerow([name, int(m)])


# -- model file --------------------------------------------------------------
# JSON laid out by hand so every float carries 17 significant digits.

def _emit(obj, indent=0):
    pad = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            raise FormatError(f"cannot serialize non-finite value {obj}")
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = [f'{pad}  {json.dumps(str(k))}: {_emit(v, indent + 1)}'
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_emit(v) for v in obj) + "]"
        items = [pad + "  " + _emit(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise FormatError(f"cannot serialize {type(obj).__name__}")


def save_model(model: CrdaModel, path):
    """Write ``model`` as a versioned JSON document.

    Only the selected coefficient rows are stored, as
    ``[row_index, [G values]]`` entries.
    """
    rows = model.selected_rows
    doc = {
        "format_version": FORMAT_VERSION,
        "variant": model.variant,
        "p": model.p,
        "G": model.n_classes,
        "class_names": list(model.class_names) if model.class_names else None,
        "feature_names": list(model.feature_names) if model.feature_names else None,
        "selector": model.selector.value if model.selector else None,
        "K": model.K,
        "delta": model.delta,
        "log_priors": [float(v) for v in model.log_priors],
        "means": [[float(v) for v in row] for row in model.means],
        "coefficients": [[int(i), [float(v) for v in model.coefficients[i]]]
                         for i in rows],
        "diagnostics": {k: float(v) for k, v in model.diagnostics.items()},
    }
    with open(path, "w") as fh:
        fh.write(_emit(doc) + "\n")


def load_model(path) -> CrdaModel:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: truncated or malformed model file ({exc})") from None
    version = doc.get("format_version") if isinstance(doc, dict) else None
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported model format_version {version!r} "
            f"(expected {FORMAT_VERSION})")
    try:
        p, G = int(doc["p"]), int(doc["G"])
        means = np.array(doc["means"], dtype=float).reshape(p, G)
        coef = np.zeros((p, G))
        rows = []
        for i, vals in doc["coefficients"]:
            coef[int(i)] = vals
            rows.append(int(i))
        return CrdaModel(
            means=means,
            coefficients=coef,
            log_priors=np.array(doc["log_priors"], dtype=float),
            selected_rows=np.array(sorted(rows), dtype=np.int64),
            variant=doc["variant"],
            selector=doc.get("selector"),
            K=doc.get("K"),
            delta=doc.get("delta"),
            diagnostics=dict(doc.get("diagnostics") or {}),
            class_names=tuple(doc["class_names"]) if doc.get("class_names") else None,
            feature_names=tuple(doc["feature_names"]) if doc.get("feature_names") else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: invalid model file ({exc})") from None
