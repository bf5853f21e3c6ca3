"""Stage orchestration: dataset, clustering, representatives, training, evaluation.

Every stage reads and writes plain files inside one artifacts directory, so
each can be run on its own once the files of earlier stages exist.  A
``manifest.json`` in that directory records, per completed stage, the
sha256 of every artifact and the seed used; stages check the hashes of their
inputs against it before running.  Wall-clock timings go to a separate
``timings.json`` that is not hashed.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .cluster import BeamKMeans, build_representatives
from .exceptions import ArtifactIntegrityError, BeamselectError, ConfigurationError, DomainError
from .geometry import ArrayGeometry
from .mlp import MLPBeamClassifier
from .oracle import EIRP_MODES, BeamRequirement, CostWeights, optimize_matrix
from .pattern import (AZIMUTH, DEFAULT_HALF_SPAN, DEFAULT_STEP, ELEVATION, compute_cut, compute_eirp,
                      locate_peak, measure_cuts)
from .selector import check_compatible, select_matrix, selection_errors

logger = logging.getLogger(__name__)

STAGES = ("dataset", "cluster", "representatives", "train", "eval")

DATASET = "dataset.csv"
LABELED = "dataset_labeled.csv"
CLUSTER_MODEL = "cluster_model.json"
MLP_MODEL = "mlp_model.json"
REPORT_DIR = "report"
EVAL_SUMMARY = "eval.json"
FIDELITY = "fidelity.csv"
MANIFEST = "manifest.json"
TIMINGS = "timings.json"


def sub_seed(master: int, stage: str) -> int:
    """Per-stage seed: first 4 bytes of ``sha256("<master>:<stage>")``."""
    digest = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _pair(name, value):
    lo, hi = (float(x) for x in value)
    if not lo < hi:
        raise ConfigurationError(f"{name} range [{lo}, {hi}] is empty")
    return lo, hi


@dataclass
class PipelineConfig:
    """Flat pipeline configuration; ``to_dict``/``from_dict`` mirror the JSON file.

    Sampling ranges other than beamwidth are artifact defaults, not measured
    system values.
    """

    carrier_frequency_hz: float = 19e9
    subarray_rows: int = 36
    subarray_cols: int = 36
    element_rows: int = 4
    element_cols: int = 4
    element_pitch_m: float | None = None
    efficiency: float = 0.9
    element_exponent: float = 1.0

    bw_range_deg: tuple = (0.45, 1.5)
    sll_range_db: tuple = (-30.0, -20.0)
    eirp_range_dbw: tuple = (50.0, 70.0)
    pointing_range_deg: tuple = (-8.7, 8.7)
    n_samples: int = 5000
    n_clusters: int = 20

    k1: float = 1.0
    k2: float = 1.0
    k3: float = 1.0
    eirp_mode: str = "absolute"
    budget: int = 200

    hidden_layer_sizes: tuple = (64, 64)
    activation: str = "relu"
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 20

    n_eval: int = 200
    power_control: bool = True
    seed: int = 0
    out_dir: str = "artifacts"

    def __post_init__(self):
        for name in ("bw_range_deg", "sll_range_db", "eirp_range_dbw", "pointing_range_deg"):
            setattr(self, name, _pair(name, getattr(self, name)))
        self.hidden_layer_sizes = tuple(int(h) for h in self.hidden_layer_sizes)
        if self.bw_range_deg[0] <= 0:
            raise ConfigurationError("beamwidths must be positive")
        if self.sll_range_db[1] >= 0:
            raise ConfigurationError("sidelobe levels must be negative")
        if self.n_clusters < 1:
            raise ConfigurationError("n_clusters must be >= 1")
        if self.n_samples < 10 * self.n_clusters:
            raise ConfigurationError(f"n_samples={self.n_samples} must be at least 10 * n_clusters")
        if self.eirp_mode not in EIRP_MODES:
            raise ConfigurationError(f"eirp_mode must be one of {EIRP_MODES}")
        if self.budget < 50:
            raise ConfigurationError("budget must be >= 50")
        if self.n_eval < 0:
            raise ConfigurationError("n_eval must be >= 0")
        try:
            self.geometry
            self.cost_weights
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from exc

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.carrier_frequency_hz, (self.subarray_rows, self.subarray_cols),
                             (self.element_rows, self.element_cols), self.element_pitch_m,
                             self.efficiency, self.element_exponent)

    @property
    def cost_weights(self) -> CostWeights:
        return CostWeights(self.k1, self.k2, self.k3)

    @property
    def ranges(self) -> np.ndarray:
        """``(7, 2)`` sampling bounds in feature order."""
        bw, sll, eirp, pt = self.bw_range_deg, self.sll_range_db, self.eirp_range_dbw, self.pointing_range_deg
        return np.array([bw, bw, sll, sll, eirp, pt, pt])

    def classifier(self) -> MLPBeamClassifier:
        return MLPBeamClassifier(hidden_layer_sizes=self.hidden_layer_sizes, activation=self.activation,
                                 learning_rate=self.learning_rate, batch_size=self.batch_size,
                                 max_epochs=self.max_epochs, patience=self.patience,
                                 n_classes=self.n_clusters, random_state=sub_seed(self.seed, "train"))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys {unknown}")
        try:
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(io.read_json(path))

    def replace(self, **changes) -> "PipelineConfig":
        d = self.to_dict()
        d.update(changes)
        return PipelineConfig.from_dict(d)


def sample_requirements(config: PipelineConfig, n: int, seed: int) -> np.ndarray:
    """``n`` requirement rows drawn uniformly and independently per feature."""
    bounds = config.ranges
    rng = np.random.default_rng(seed)
    return rng.uniform(bounds[:, 0], bounds[:, 1], size=(int(n), len(bounds)))


# manifest

def _manifest_path(out_dir) -> Path:
    return Path(out_dir) / MANIFEST


def read_manifest(out_dir) -> dict:
    path = _manifest_path(out_dir)
    if not path.exists():
        return {"stages": []}
    return io.read_json(path)


def _record_stage(out_dir, config, stage, artifacts, seed, elapsed):
    out_dir = Path(out_dir)
    manifest = read_manifest(out_dir)
    # a rerun stage invalidates everything downstream of it
    keep = STAGES[:STAGES.index(stage)]
    stages = [s for s in manifest["stages"] if s["name"] in keep]
    stages.append({"name": stage, "seed": seed,
                   "artifacts": {a: io.sha256_file(out_dir / a) for a in sorted(artifacts)}})
    manifest = {"config": config.to_dict(), "master_seed": config.seed, "stages": stages}
    io.write_json(_manifest_path(out_dir), manifest)
    timings = io.read_json(out_dir / TIMINGS) if (out_dir / TIMINGS).exists() else {}
    timings[stage] = elapsed
    io.write_json(out_dir / TIMINGS, timings)


def verify_artifacts(out_dir, needed) -> None:
    """Check every file in ``needed`` against the manifest hash.

    Raises :class:`ConfigurationError` for missing files or unrecorded
    artifacts and :class:`ArtifactIntegrityError` on a hash mismatch.
    """
    out_dir = Path(out_dir)
    recorded = {}
    for s in read_manifest(out_dir)["stages"]:
        recorded.update(s["artifacts"])
    for name in needed:
        if not (out_dir / name).exists():
            raise ConfigurationError(f"missing artifact {out_dir / name}; run the stage that produces it first")
        if name not in recorded:
            raise ConfigurationError(f"artifact {name} is not recorded in {out_dir / MANIFEST}")
        if io.sha256_file(out_dir / name) != recorded[name]:
            raise ArtifactIntegrityError(f"{out_dir / name} does not match its manifest hash")


def _report_files(out_dir) -> list[str]:
    root = Path(out_dir)
    return sorted(str(p.relative_to(root)) for p in (root / REPORT_DIR).glob("*.csv"))


def _rep_files(out_dir) -> list[str]:
    root = Path(out_dir)
    return sorted(str(p.relative_to(root)) for p in (root / "representatives").glob("*.json"))


# stages

def generate_dataset(config: PipelineConfig, out_dir=None) -> Path:
    """Write ``dataset.csv`` with ``config.n_samples`` unlabeled requirements."""
    if config.n_samples <= 0:
        raise ConfigurationError("n_samples must be positive")
    out_dir = Path(out_dir or config.out_dir)
    start = time.perf_counter()
    seed = sub_seed(config.seed, "dataset")
    X = sample_requirements(config, config.n_samples, seed)
    path = io.save_dataset(out_dir / DATASET, X)
    _record_stage(out_dir, config, "dataset", [DATASET], seed, time.perf_counter() - start)
    return path


def cluster_stage(config: PipelineConfig, out_dir=None) -> BeamKMeans:
    """Fit k-means on the dataset; write the model and the labeled dataset."""
    out_dir = Path(out_dir or config.out_dir)
    verify_artifacts(out_dir, [DATASET])
    start = time.perf_counter()
    X, _ = io.load_dataset(out_dir / DATASET)
    seed = sub_seed(config.seed, "cluster")
    model = BeamKMeans(n_clusters=config.n_clusters, random_state=seed).fit(X)
    io.save_dataset(out_dir / LABELED, X, model.labels_)
    io.save_cluster_model(out_dir / CLUSTER_MODEL, model)
    _record_stage(out_dir, config, "cluster", [LABELED, CLUSTER_MODEL], seed, time.perf_counter() - start)
    return model


def representatives_stage(config: PipelineConfig, out_dir=None) -> BeamKMeans:
    """Optimize one weight matrix per centroid and store them with the cluster model."""
    out_dir = Path(out_dir or config.out_dir)
    verify_artifacts(out_dir, [CLUSTER_MODEL])
    start = time.perf_counter()
    model = io.load_cluster_model(out_dir / CLUSTER_MODEL)
    seed = sub_seed(config.seed, "representatives")
    build_representatives(config.geometry, model, config.cost_weights, config.budget, seed, config.eirp_mode)
    if not model.is_complete:
        raise BeamselectError(f"representative search failed for clusters {sorted(model.representative_errors_)}")
    io.save_cluster_model(out_dir / CLUSTER_MODEL, model)
    _record_stage(out_dir, config, "representatives", [CLUSTER_MODEL] + _rep_files(out_dir), seed,
                  time.perf_counter() - start)
    return model


def train_stage(config: PipelineConfig, out_dir=None) -> MLPBeamClassifier:
    """Train the classifier on the labeled dataset; write the model and learning curves."""
    out_dir = Path(out_dir or config.out_dir)
    verify_artifacts(out_dir, [LABELED, CLUSTER_MODEL])
    start = time.perf_counter()
    X, y = io.load_dataset(out_dir / LABELED)
    if y is None:
        raise ConfigurationError(f"{out_dir / LABELED} has no label column")
    cluster_model = io.load_cluster_model(out_dir / CLUSTER_MODEL)
    clf = config.classifier().fit(X, y, normalizer=cluster_model.normalizer_)
    io.save_mlp(out_dir / MLP_MODEL, clf)
    X_val, y_val = clf.validation_set_
    report = clf.evaluate(X_val, y_val)
    io.save_report(out_dir / REPORT_DIR, report)
    _record_stage(out_dir, config, "train", [MLP_MODEL] + _report_files(out_dir), clf.random_state,
                  time.perf_counter() - start)
    return clf


def load_models(out_dir):
    """Load ``(classifier, cluster_model)`` and check they belong together."""
    out_dir = Path(out_dir)
    for name in (MLP_MODEL, CLUSTER_MODEL):
        if not (out_dir / name).exists():
            raise ConfigurationError(f"missing artifact {out_dir / name}")
    clf = io.load_mlp(out_dir / MLP_MODEL)
    cluster_model = io.load_cluster_model(out_dir / CLUSTER_MODEL)
    check_compatible(clf, cluster_model)
    return clf, cluster_model


def evaluate_fidelity(config: PipelineConfig, classifier, cluster_model, requirements) -> list[dict]:
    """Per-requirement errors of the selected matrix, with and without EIRP control."""
    geometry = config.geometry
    rows = []
    for x in requirements:
        req = BeamRequirement.from_array(x)
        index, w, _ = select_matrix(classifier, cluster_model, req, geometry, power_control=False)
        uncontrolled = abs(compute_eirp(geometry, w, req.pointing) - req.eirp_dbw)
        if config.power_control:
            _, w, _ = select_matrix(classifier, cluster_model, req, geometry, power_control=True)
        err = selection_errors(geometry, req, w)
        err["eirp_db_uncontrolled"] = uncontrolled
        err["cluster"] = index
        rows.append(err)
    return rows


FIDELITY_COLUMNS = ("cluster", "bw_az_deg", "bw_el_deg", "sll_az_db", "sll_el_db",
                    "eirp_db", "eirp_db_uncontrolled", "pointing_deg")


def _summary(values):
    v = np.asarray(values, dtype=float)
    return {"median": float(np.median(v)), "mean": float(v.mean()), "p90": float(np.percentile(v, 90)),
            "max": float(v.max())}


def eval_stage(config: PipelineConfig, out_dir=None) -> dict:
    """Held-out classification metrics and pattern fidelity of selected matrices."""
    out_dir = Path(out_dir or config.out_dir)
    verify_artifacts(out_dir, [MLP_MODEL, CLUSTER_MODEL, LABELED])
    start = time.perf_counter()
    clf, cluster_model = load_models(out_dir)
    seed = sub_seed(config.seed, "eval")
    reqs = sample_requirements(config, config.n_eval, seed)
    rows = evaluate_fidelity(config, clf, cluster_model, reqs)
    report = io.load_report(out_dir / REPORT_DIR)
    best = int(np.argmin(report.val_loss)) if report.val_loss else 0
    summary = {
        "n_eval": config.n_eval,
        "best_epoch": best,
        "train_loss": report.train_loss[best] if report.train_loss else None,
        "val_loss": report.val_loss[best] if report.val_loss else None,
        "train_acc": report.train_acc[best] if report.train_acc else None,
        "val_acc": report.val_acc[best] if report.val_acc else None,
        "recall_per_class": report.recall.tolist() if report.confusion is not None else None,
        "fidelity": {c: _summary([r[c] for r in rows]) for c in FIDELITY_COLUMNS[1:]} if rows else {},
    }
    with (out_dir / FIDELITY).open("w", newline="") as fh:
        fh.write(",".join(FIDELITY_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) if c == "cluster" else repr(float(r[c])) for c in FIDELITY_COLUMNS) + "\n")
    io.write_json(out_dir / EVAL_SUMMARY, summary)
    _record_stage(out_dir, config, "eval", [EVAL_SUMMARY, FIDELITY], seed, time.perf_counter() - start)
    return summary


def run_full_pipeline(config: PipelineConfig, out_dir=None) -> Path:
    """Run every stage in order; a failing stage leaves the earlier manifest entries in place."""
    out_dir = Path(out_dir or config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_json(out_dir / "config.json", config.to_dict())
    generate_dataset(config, out_dir)
    cluster_stage(config, out_dir)
    representatives_stage(config, out_dir)
    train_stage(config, out_dir)
    eval_stage(config, out_dir)
    return out_dir


# timing benchmark

@dataclass
class BenchmarkResult:
    oracle_seconds: list = field(default_factory=list)
    inference_seconds: list = field(default_factory=list)
    load_seconds: float = 0.0

    @property
    def total_oracle(self) -> float:
        return float(sum(self.oracle_seconds))

    @property
    def total_inference(self) -> float:
        return float(sum(self.inference_seconds))

    @property
    def speedup(self) -> float:
        return self.total_oracle / self.total_inference if self.total_inference > 0 else 0.0

    def to_dict(self) -> dict:
        return {"oracle_seconds": self.oracle_seconds, "total_oracle_seconds": self.total_oracle,
                "load_seconds": self.load_seconds, "inference_seconds": self.inference_seconds,
                "total_inference_seconds": self.total_inference, "speedup": self.speedup}


def benchmark_timing(config: PipelineConfig, n_beams: int = 10, out_dir=None) -> BenchmarkResult:
    """Time the reference optimizer against classifier selection on the same requirements.

    Model loading is timed once and reported separately from per-beam
    inference.
    """
    if n_beams < 0:
        raise ConfigurationError("n_beams must be >= 0")
    out_dir = Path(out_dir or config.out_dir)
    start = time.perf_counter()
    clf, cluster_model = load_models(out_dir)
    result = BenchmarkResult(load_seconds=time.perf_counter() - start)
    geometry = config.geometry
    reqs = [BeamRequirement.from_array(x)
            for x in sample_requirements(config, n_beams, sub_seed(config.seed, "bench"))]
    for req in reqs:
        t0 = time.perf_counter()
        optimize_matrix(geometry, req, config.cost_weights, config.budget, sub_seed(config.seed, "bench-oracle"),
                        config.eirp_mode)
        result.oracle_seconds.append(time.perf_counter() - t0)
    for req in reqs:
        t0 = time.perf_counter()
        select_matrix(clf, cluster_model, req, geometry, config.power_control)
        result.inference_seconds.append(time.perf_counter() - t0)
    return result


# pattern export

def export_pattern(weights_path, out_dir, geometry: ArrayGeometry | None = None, center=(0.0, 0.0),
                   search_span: float = DEFAULT_HALF_SPAN, half_span: float = DEFAULT_HALF_SPAN,
                   step: float = DEFAULT_STEP) -> dict:
    """Write azimuth/elevation cut CSVs through the pattern peak plus a metrics JSON.

    Returns the metrics dictionary (also written to ``metrics.json``).
    """
    geometry = geometry or ArrayGeometry()
    weights = io.load_weights(weights_path)
    if weights.shape != geometry.subarray_grid:
        raise ConfigurationError(f"weights are {weights.shape}, geometry grid is {geometry.subarray_grid}")
    out_dir = Path(out_dir)
    peak = locate_peak(geometry, weights, center, search_span)
    az = compute_cut(geometry, weights, AZIMUTH, peak, half_span, step)
    el = compute_cut(geometry, weights, ELEVATION, peak, half_span, step)
    metrics = measure_cuts(geometry, az, el, compute_eirp(geometry, weights, peak))
    io.save_cut(out_dir / "azimuth_cut.csv", az)
    io.save_cut(out_dir / "elevation_cut.csv", el)
    doc = metrics.to_dict()
    io.write_json(out_dir / "metrics.json", doc)
    return doc
