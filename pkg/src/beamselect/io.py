"""JSON and CSV persistence for every artifact the pipeline produces.

All writers are deterministic (sorted keys, fixed float formatting through
``repr``) so identical objects give byte-identical files.  Readers raise
:class:`~beamselect.exceptions.ParseError` naming the file and the offending
line or field.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .cluster import BeamKMeans, FeatureNormalizer
from .exceptions import DomainError, ParseError
from .geometry import WeightMatrix
from .mlp import MLPBeamClassifier, TrainingReport
from .oracle import FEATURE_NAMES, CostBreakdown
from .pattern import PatternCut


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(_dump(obj))
    return path


def read_json(path) -> dict:
    path = Path(path)
    text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _field(path, d, name):
    try:
        return d[name]
    except (KeyError, TypeError):
        raise ParseError(f"{path}: missing field {name!r}") from None


# weight matrices

def save_weights(path, weights: WeightMatrix) -> Path:
    return write_json(path, weights.to_dict())


def load_weights(path) -> WeightMatrix:
    d = read_json(path)
    for name in ("rows", "cols", "amp", "phase_rad", "mask", "per_element_power_w"):
        _field(path, d, name)
    rows, cols = d["rows"], d["cols"]
    if not (isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0):
        raise ParseError(f"{path}: field 'rows'/'cols' must be positive integers")
    for name in ("amp", "phase_rad", "mask"):
        if not isinstance(d[name], list) or len(d[name]) != rows * cols:
            raise ParseError(f"{path}: field {name!r} must list {rows * cols} values")
        bad = [i for i, x in enumerate(d[name]) if isinstance(x, bool) or not isinstance(x, (int, float))]
        if bad:
            raise ParseError(f"{path}: field {name!r} entry {bad[0]} is not a number")
    try:
        return WeightMatrix.from_dict(d)
    except (DomainError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


# pattern cuts

def save_cut(path, cut: PatternCut) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["angle_deg", "mag_db"])
        w.writerows((repr(float(a)), repr(float(m))) for a, m in zip(cut.angles, cut.magnitude_db))
    return path


def _read_table(path, columns):
    """Rows of a header-first numeric CSV as a float array, with line context on errors."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path}: empty file")
        if columns is not None and header != list(columns):
            raise ParseError(f"{path}: line 1: expected header {','.join(columns)}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(x) for x in row])
            except ValueError:
                col = next(i for i, x in enumerate(row) if not _is_float(x))
                raise ParseError(f"{path}: line {lineno}: field {header[col]!r} is not a number: {row[col]!r}") from None
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def _is_float(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_cut(path, cut_kind: str, fixed_angle: float = 0.0) -> PatternCut:
    _, table = _read_table(path, ("angle_deg", "mag_db"))
    if len(table) < 3:
        raise ParseError(f"{path}: a cut needs at least 3 samples")
    angles = table[:, 0]
    steps = np.diff(angles)
    if np.any(steps <= 0):
        raise ParseError(f"{path}: line {int(np.argmax(steps <= 0)) + 3}: angles must increase")
    return PatternCut(cut_kind, fixed_angle, angles, table[:, 1], float(np.median(steps)))


# datasets

def save_dataset(path, X, labels=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(FEATURE_NAMES) + (["label"] if labels is not None else []))
        for i, row in enumerate(np.asarray(X, dtype=float)):
            out = [repr(float(x)) for x in row]
            if labels is not None:
                out.append(str(int(labels[i])))
            w.writerow(out)
    return path


def load_dataset(path):
    """Return ``(X, labels)``; ``labels`` is None for an unlabeled file."""
    header, table = _read_table(path, None)
    if header[:len(FEATURE_NAMES)] != list(FEATURE_NAMES) or header[len(FEATURE_NAMES):] not in ([], ["label"]):
        raise ParseError(f"{path}: line 1: expected header {','.join(FEATURE_NAMES)}[,label]")
    X = table[:, :len(FEATURE_NAMES)]
    labels = None
    if len(header) > len(FEATURE_NAMES):
        labels = table[:, -1]
        if np.any(labels != np.round(labels)) or np.any(labels < 0):
            raise ParseError(f"{path}: field 'label' must hold nonnegative integers")
        labels = labels.astype(np.int64)
    return X, labels


# cluster model

def save_cluster_model(path, model: BeamKMeans, weights_dir: str = "representatives") -> Path:
    """Write the model JSON plus one weight file per representative next to it."""
    path = Path(path)
    reps = getattr(model, "representatives_", None)
    rep_paths = None
    if reps is not None:
        rep_paths = []
        for j, w in enumerate(reps):
            if w is None:
                rep_paths.append(None)
                continue
            rel = f"{weights_dir}/cluster_{j:03d}.json"
            save_weights(path.parent / rel, w)
            rep_paths.append(rel)
    doc = {
        "K": int(model.n_clusters),
        "centroids": model.cluster_centers_.tolist(),
        "normalizer": model.normalizer_.to_dict() if model.normalizer_ is not None else None,
        "inertia": float(model.inertia_),
        "n_iter": int(model.n_iter_),
        "params": model.get_params(),
        "representatives": rep_paths,
        "representative_costs": ([c.to_dict() if c is not None else None
                                  for c in getattr(model, "representative_costs_", [None] * len(reps))]
                                 if rep_paths is not None else None),
    }
    return write_json(path, doc)


def load_cluster_model(path) -> BeamKMeans:
    path = Path(path)
    d = read_json(path)
    centroids = np.asarray(_field(path, d, "centroids"), dtype=float)
    K = int(_field(path, d, "K"))
    if centroids.ndim != 2 or centroids.shape[0] != K:
        raise ParseError(f"{path}: field 'centroids' must hold {K} rows")
    model = BeamKMeans(**d.get("params", {}))
    model.cluster_centers_ = centroids
    norm = d.get("normalizer")
    model.normalizer_ = FeatureNormalizer.from_dict(norm) if norm is not None else None
    model.inertia_ = float(_field(path, d, "inertia"))
    model.n_iter_ = int(d.get("n_iter", 0))
    model.n_features_in_ = centroids.shape[1]
    model.labels_ = None
    model.inertia_history_ = []
    reps = d.get("representatives")
    model.representatives_ = None
    if reps is not None:
        if len(reps) != K:
            raise ParseError(f"{path}: field 'representatives' must list {K} paths")
        model.representatives_ = [load_weights(path.parent / r) if r is not None else None for r in reps]
        costs = d.get("representative_costs") or [None] * K
        model.representative_costs_ = [CostBreakdown(c["z1"], c["z2"], c["z3"]) if c else None for c in costs]
        model.representative_errors_ = {j: "missing" for j, r in enumerate(reps) if r is None}
    return model


# classifier

def save_mlp(path, model: MLPBeamClassifier) -> Path:
    doc = {
        "layer_sizes": [int(n) for n in model.layer_sizes_],
        "activation": model.activation,
        "weights": [W.ravel().tolist() for W in model.coefs_],
        "biases": [b.tolist() for b in model.intercepts_],
        "normalizer": model.normalizer_.to_dict() if model.normalizer_ is not None else None,
        "K": int(model.n_classes_),
        "seed": model.random_state,
        "best_epoch": int(model.best_epoch_),
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in model.get_params().items()},
    }
    return write_json(path, doc)


def load_mlp(path) -> MLPBeamClassifier:
    path = Path(path)
    d = read_json(path)
    sizes = [int(n) for n in _field(path, d, "layer_sizes")]
    weights, biases = _field(path, d, "weights"), _field(path, d, "biases")
    if len(sizes) < 2 or len(weights) != len(sizes) - 1 or len(biases) != len(sizes) - 1:
        raise ParseError(f"{path}: 'weights'/'biases' do not match 'layer_sizes' {sizes}")
    if sizes[-1] != int(_field(path, d, "K")):
        raise ParseError(f"{path}: output width {sizes[-1]} differs from K={d['K']}")
    params = dict(d.get("params", {}))
    if "hidden_layer_sizes" in params:
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
    model = MLPBeamClassifier(**params)
    model.activation = _field(path, d, "activation")
    coefs, intercepts = [], []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        W, b = np.asarray(weights[i], dtype=float), np.asarray(biases[i], dtype=float)
        if W.size != n_in * n_out or b.size != n_out:
            raise ParseError(f"{path}: layer {i} arrays do not match {n_in}x{n_out}")
        coefs.append(W.reshape(n_in, n_out))
        intercepts.append(b)
    model.coefs_, model.intercepts_ = coefs, intercepts
    norm = d.get("normalizer")
    model.normalizer_ = FeatureNormalizer.from_dict(norm) if norm is not None else None
    model.n_classes_ = sizes[-1]
    model.classes_ = np.arange(sizes[-1])
    model.n_features_in_ = sizes[0]
    model.best_epoch_ = int(d.get("best_epoch", 0))
    return model


# training report

def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x):
    return repr(float(x))


def save_report(directory, report: TrainingReport) -> Path:
    """Write ``curves.csv``, ``confusion.csv`` and ``roc_class_<i>.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    curves = zip(range(len(report.train_loss)), report.train_loss, report.val_loss,
                 report.train_acc, report.val_acc)
    _write_rows(directory / "curves.csv", ["epoch", "train_loss", "val_loss", "train_acc", "val_acc"],
                ([str(e)] + [_num(x) for x in rest] for e, *rest in curves))
    if report.confusion is not None:
        K = report.confusion.shape[0]
        _write_rows(directory / "confusion.csv", [f"pred_{j}" for j in range(K)],
                    ([str(int(x)) for x in row] for row in report.confusion))
    for k, (thr, tpr, fpr) in sorted(report.roc.items()):
        _write_rows(directory / f"roc_class_{k}.csv", ["threshold", "tpr", "fpr"],
                    ([_num(a), _num(b), _num(c)] for a, b, c in zip(thr, tpr, fpr)))
    return directory


def load_report(directory) -> TrainingReport:
    directory = Path(directory)
    _, curves = _read_table(directory / "curves.csv", ("epoch", "train_loss", "val_loss", "train_acc", "val_acc"))
    report = TrainingReport(curves[:, 1].tolist(), curves[:, 2].tolist(), curves[:, 3].tolist(),
                            curves[:, 4].tolist())
    if (directory / "confusion.csv").exists():
        report.confusion = _read_table(directory / "confusion.csv", None)[1].astype(np.int64)
    for f in sorted(directory.glob("roc_class_*.csv")):
        _, t = _read_table(f, ("threshold", "tpr", "fpr"))
        report.roc[int(f.stem.rsplit("_", 1)[1])] = (t[:, 0], t[:, 1], t[:, 2])
    return report
