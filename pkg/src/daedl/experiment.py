"""Run configuration, dataset assembly, training, evaluation and ablation.

Everything here is a deterministic function of a :class:`RunConfig`; the CLI
is a thin layer over these functions.
"""
import csv
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data, density, metrics, network
from .errors import ConfigError, DomainError
from .predict import predict

logger = logging.getLogger(__name__)

DATASETS = ("two_moons", "blobs", "csv", "idx")
MEASURES = ("aleatoric", "epistemic")
ABLATION_ROWS = ("---", "e--", "ed-", "e-s", "eds")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration. ``dataset`` is the only required key."""
    dataset: str
    # synthetic data
    n_samples: int = 1000
    noise: float = 0.1
    n_blob_classes: int = 3
    blob_std: float = 0.5
    # file data
    train_path: str = ""
    test_path: str = ""
    ood_paths: tuple = ()
    idx_images: str = ""
    idx_labels: str = ""
    idx_ood_images: str = ""
    idx_ood_labels: str = ""
    subset: int = 0
    # splits and OOD sets
    test_ratio: float = 0.2
    val_ratio: float = 0.2
    ood: tuple = ("uniform",)
    ood_n: int = 500
    ood_pad: float = 1.0
    # model
    hidden: tuple = (32, 32, 32, 32, 32)
    residual: bool = True
    exp: bool = True
    de: bool = True
    sn: bool = True
    conventional_activation: str = "relu"
    # training
    learning_rate: float = 1e-3
    lam: float = 5e-2
    batch_size: int = 8
    max_epochs: int = 150
    patience: int = 20
    lr_decay: float = 1.0
    optimizer: str = "adam"
    sn_iterations: int = 1
    seed: int = 0
    # outputs
    out: str = "daedl_run"
    landscape_x: tuple = (-2.5, 3.5)
    landscape_y: tuple = (-2.0, 2.5)
    landscape_resolution: int = 50
    ablate_rows: tuple = ABLATION_ROWS
    ablate_seeds: tuple = (0, 1, 2, 3, 4)

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        for name in ("test_ratio", "val_ratio"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie strictly between 0 and 1")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ConfigError("hidden must list at least one positive layer width")
        if self.conventional_activation not in ("relu", "softplus"):
            raise ConfigError("conventional_activation must be 'relu' or 'softplus'")
        if len(self.landscape_x) != 2 or len(self.landscape_y) != 2:
            raise ConfigError("landscape_x and landscape_y must be lo,hi pairs")
        if self.landscape_x[0] >= self.landscape_x[1] or self.landscape_y[0] >= self.landscape_y[1]:
            raise ConfigError("landscape ranges must have lo < hi")
        if self.landscape_resolution < 2:
            raise ConfigError("landscape_resolution must be at least 2")
        for row in self.ablate_rows:
            if row not in ABLATION_ROWS:
                raise ConfigError(f"unknown ablation row {row!r}; expected one of {ABLATION_ROWS}")
        if not self.ablate_seeds:
            raise ConfigError("ablate_seeds must not be empty")
        if self.ood_n < 1 or self.n_samples < 2 or self.subset < 0:
            raise ConfigError("ood_n, n_samples and subset must be positive")
        try:
            self.train_config()
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def parameterization(self):
        return "exp" if self.exp else f"{self.conventional_activation}_plus_one"

    def train_config(self):
        return network.TrainConfig(
            learning_rate=self.learning_rate, lam=self.lam, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience, lr_decay=self.lr_decay,
            seed=self.seed, optimizer=self.optimizer, sn_iterations=self.sn_iterations)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}

    def replace(self, **changes):
        return from_mapping({**self.to_dict(), **changes})


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}
_ITEM_TYPES = {"ood_paths": str, "ood": str, "hidden": int, "landscape_x": float,
               "landscape_y": float, "ablate_rows": str, "ablate_seeds": int}


def _coerce_scalar(key, value, kind):
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.strip().lower() in _TRUE | _FALSE:
            return value.strip().lower() in _TRUE
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    if kind is int:
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        if isinstance(value, int):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        try:
            return int(str(value).strip())
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
    if kind is float:
        if isinstance(value, bool):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _coerce(key, value):
    if key in _ITEM_TYPES:
        if isinstance(value, str):
            value = [v for v in (p.strip() for p in value.split(",")) if v]
        elif not isinstance(value, (list, tuple)):
            value = [value]
        return tuple(_coerce_scalar(key, v, _ITEM_TYPES[key]) for v in value)
    return _coerce_scalar(key, value, type(_FIELDS[key].default) if key != "dataset" else str)


def from_mapping(mapping):
    """Validate a flat mapping into a :class:`RunConfig`."""
    unknown = sorted(set(mapping) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    if "dataset" not in mapping:
        raise ConfigError("missing required config key: dataset")
    return RunConfig(**{k: _coerce(k, v) for k, v in mapping.items()})


def load_config(path=None, overrides=()):
    """Read a JSON config file (optional) and apply ``key=value`` overrides."""
    mapping = {}
    if path is not None:
        try:
            with open(path) as fh:
                mapping = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        mapping[key.strip()] = value
    return from_mapping(mapping)


# datasets

@dataclass
class Splits:
    train: data.LabeledDataset
    val: data.LabeledDataset
    test: data.LabeledDataset
    ood: dict = field(default_factory=dict)


def _blob_centers(c):
    angles = 2.0 * np.pi * np.arange(c) / c
    return 3.0 * np.column_stack([np.cos(angles), np.sin(angles)])


def _source(cfg):
    if cfg.dataset == "two_moons":
        return data.two_moons(cfg.n_samples, cfg.noise, seed=cfg.seed), None
    if cfg.dataset == "blobs":
        ds = data.gaussian_blobs(cfg.n_samples // cfg.n_blob_classes, _blob_centers(cfg.n_blob_classes),
                                 cfg.blob_std, seed=cfg.seed)
        return ds, None
    if cfg.dataset == "csv":
        if not cfg.train_path:
            raise ConfigError("dataset=csv requires train_path")
        ds = data.read_csv(cfg.train_path, name=Path(cfg.train_path).stem)
        test = data.read_csv(cfg.test_path, name=Path(cfg.test_path).stem) if cfg.test_path else None
        return ds, test
    if not cfg.idx_images or not cfg.idx_labels:
        raise ConfigError("dataset=idx requires idx_images and idx_labels")
    ds = data.load_idx(cfg.idx_images, cfg.idx_labels, name=Path(cfg.idx_images).name.split(".")[0])
    if cfg.subset and cfg.subset < len(ds):
        ds = ds.subset(np.random.default_rng(cfg.seed).permutation(len(ds))[:cfg.subset])
    return ds, None


def _ood_sets(cfg, train, test):
    sets = {}
    lo, hi = train.X.min(axis=0), train.X.max(axis=0)
    pad = cfg.ood_pad * np.maximum(hi - lo, 1e-12)
    for entry in cfg.ood:
        if entry == "uniform":
            sets[entry] = data.uniform_ood(cfg.ood_n, np.column_stack([lo - pad, hi + pad]),
                                           seed=cfg.seed + 2, n_classes=train.n_classes)
        elif entry == "idx":
            if not cfg.idx_ood_images or not cfg.idx_ood_labels:
                raise ConfigError("ood entry 'idx' requires idx_ood_images and idx_ood_labels")
            ds = data.load_idx(cfg.idx_ood_images, cfg.idx_ood_labels, name="idx_ood")
            idx = np.random.default_rng(cfg.seed + 3).permutation(len(ds))[:cfg.ood_n]
            sets[entry] = _as_ood(ds.subset(idx), train.n_classes)
        else:
            kind, _, severity = entry.partition(":")
            try:
                spec = data.CorruptionSpec(kind, int(severity or 0))
            except (ValueError, DomainError) as exc:
                raise ConfigError(f"ood entry {entry!r}: {exc}") from None
            sets[entry] = data.corrupt(test, spec, seed=cfg.seed + 4)
    for path in cfg.ood_paths:
        ds = data.read_csv(path, name=Path(path).stem)
        sets[ds.name] = _as_ood(ds, train.n_classes)
    for name, ds in sets.items():
        if ds.dim != train.dim:
            raise ConfigError(f"OOD set {name} has dimension {ds.dim}, training data has {train.dim}")
    return sets


def _as_ood(ds, n_classes):
    return data.LabeledDataset(ds.X, np.zeros(len(ds), dtype=np.int64), n_classes, ds.name, True)


def build_splits(cfg):
    """Deterministic train/validation/test split plus the configured OOD sets."""
    ds, test = _source(cfg)
    if test is None:
        ds, test = data.split(ds, 1.0 - cfg.test_ratio, seed=cfg.seed)
    elif test.dim != ds.dim:
        raise ConfigError(f"test data has dimension {test.dim}, training data has {ds.dim}")
    n_classes = max(ds.n_classes, test.n_classes)
    ds = dataclasses.replace(ds, n_classes=n_classes)
    test = dataclasses.replace(test, n_classes=n_classes)
    train, val = data.split(ds, 1.0 - cfg.val_ratio, seed=cfg.seed + 1)
    return Splits(train, val, test, _ood_sets(cfg, train, test))


# training

@dataclass
class TrainResult:
    net: network.EvidentialNetwork
    gda: density.GdaModel
    history: list
    splits: Splits


def train_run(cfg, splits=None):
    """Train the configured network and fit the feature density (if ``cfg.de``)."""
    splits = splits or build_splits(cfg)
    n_classes = splits.train.n_classes
    net = network.EvidentialNetwork.create(
        splits.train.dim, list(cfg.hidden), n_classes, seed=cfg.seed, spectral_norm=cfg.sn,
        parameterization=cfg.parameterization, residual=cfg.residual)
    best, history = network.train(net, splits.train, splits.val, cfg.train_config())
    gda = None
    if cfg.de:
        gda = density.fit(best.features(splits.train.X), splits.train.y, n_classes=n_classes)
    return TrainResult(best, gda, history, splits)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "learning_rate", "max_sigma"])
        for r in history:
            writer.writerow([r.epoch] + [_fmt(v) for v in (r.train_loss, r.val_loss, r.learning_rate, r.max_sigma)])


# evaluation

def _fmt(v):
    return "%.17g" % v


def score_table(net, gda, test, ood_sets):
    """Per-sample scores for the ID test set followed by every OOD set."""
    blocks = [("id", test)] + [(f"ood:{name}", ds) for name, ds in ood_sets.items()]
    cols = {k: [] for k in ("set", "label", "predicted", "aleatoric", "epistemic", "entropy", "s", "probs")}
    for tag, ds in blocks:
        out = predict(net, gda, ds.X)
        cols["set"] += [tag] * len(ds)
        cols["label"].append(ds.y)
        cols["predicted"].append(out.predicted_class)
        for key, values in (("aleatoric", out.aleatoric_conf), ("epistemic", out.epistemic_conf),
                            ("entropy", out.entropy), ("s", out.s), ("probs", out.probs)):
            cols[key].append(values)
    table = {k: (np.array(v) if k == "set" else np.concatenate(v)) for k, v in cols.items()}
    return table


def write_scores(path, table):
    n_classes = table["probs"].shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["set", "label", "predicted", "aleatoric", "epistemic", "entropy", "s"]
                        + [f"p{c}" for c in range(n_classes)])
        for i in range(len(table["set"])):
            writer.writerow([table["set"][i], int(table["label"][i]), int(table["predicted"][i])]
                            + [_fmt(table[k][i]) for k in ("aleatoric", "epistemic", "entropy", "s")]
                            + [_fmt(p) for p in table["probs"][i]])


def read_scores(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    n_classes = sum(1 for h in header if h.startswith("p") and h[1:].isdigit())
    cols = list(zip(*rows))
    return {
        "set": np.array(cols[0]),
        "label": np.array(cols[1], dtype=np.int64),
        "predicted": np.array(cols[2], dtype=np.int64),
        "aleatoric": np.array(cols[3], dtype=np.float64),
        "epistemic": np.array(cols[4], dtype=np.float64),
        "entropy": np.array(cols[5], dtype=np.float64),
        "s": np.array(cols[6], dtype=np.float64),
        "probs": np.array(cols[7:7 + n_classes], dtype=np.float64).T,
    }


def _safe(fn, *args):
    try:
        return fn(*args)
    except DomainError:
        # e.g. misclassification AUPR when every test point is correct
        return float("nan")


def metrics_from_table(table, measures=MEASURES):
    """Every reported metric, computed only from the score table."""
    for m in measures:
        if m not in MEASURES:
            raise ConfigError(f"unknown measure {m!r}; expected a subset of {MEASURES}")
    is_id = table["set"] == "id"
    y, pred = table["label"][is_id], table["predicted"][is_id]
    correct = (pred == y).astype(np.int64)
    out = {
        "n_id": int(is_id.sum()),
        "accuracy": metrics.accuracy(pred, y),
        "brier": metrics.brier(table["probs"][is_id], y),
        "misclassification_aupr": _safe(metrics.aupr, table["aleatoric"][is_id], correct),
        "misclassification_auroc": _safe(metrics.auroc, table["aleatoric"][is_id], correct),
        "mean_entropy_id": float(np.mean(table["entropy"][is_id])),
        "mean_s_id": float(np.mean(table["s"][is_id])),
    }
    for tag in dict.fromkeys(table["set"][~is_id]):
        name = tag[len("ood:"):]
        mask = table["set"] == tag
        labels = np.r_[np.ones(is_id.sum(), dtype=np.int64), np.zeros(mask.sum(), dtype=np.int64)]
        out[f"ood/{name}/n"] = int(mask.sum())
        out[f"ood/{name}/mean_entropy"] = float(np.mean(table["entropy"][mask]))
        out[f"ood/{name}/mean_s"] = float(np.mean(table["s"][mask]))
        for m in measures:
            scores = np.r_[table[m][is_id], table[m][mask]]
            out[f"ood/{name}/{m}/auroc"] = metrics.auroc(scores, labels)
            out[f"ood/{name}/{m}/aupr"] = metrics.aupr(scores, labels)
            out[f"ood/{name}/{m}/aupr_trapezoid"] = metrics.aupr_trapezoid(scores, labels)
    return out


@dataclass
class EvalReport:
    metrics: dict
    config: dict
    scores_path: str = ""

    def to_text(self):
        lines = [f"{k} = {_fmt(v) if isinstance(v, float) else v}" for k, v in self.metrics.items()]
        return "\n".join(lines) + "\n"

    def to_json(self):
        clean = {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in self.metrics.items()}
        return json.dumps({"metrics": clean, "config": self.config, "scores": self.scores_path},
                          indent=2, sort_keys=False)


def evaluate(net, gda, test, ood_sets, measures=MEASURES, config=None):
    table = score_table(net, gda, test, ood_sets)
    return EvalReport(metrics_from_table(table, measures), dict(config or {})), table


def write_report(out_dir, report, table):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.scores_path = str(out_dir / "scores.csv")
    write_scores(report.scores_path, table)
    (out_dir / "report.txt").write_text(report.to_text())
    (out_dir / "report.json").write_text(report.to_json())


# landscape

LANDSCAPE_COLUMNS = ("x", "y", "entropy", "aleatoric", "epistemic", "s", "variance")


def landscape(net, gda, cfg):
    """Row-major grid (y outer, x inner) of uncertainty measures over the plane."""
    if net.input_dim != 2:
        raise ConfigError(f"landscape needs a 2-D input model, this one has D={net.input_dim}")
    r = cfg.landscape_resolution
    xs = np.linspace(*cfg.landscape_x, r)
    ys = np.linspace(*cfg.landscape_y, r)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    out = predict(net, gda, grid)
    return np.column_stack([grid[:, 0], grid[:, 1], out.entropy, out.aleatoric_conf,
                            out.epistemic_conf, out.s, out.variance])


def write_table(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


# ablation

def row_toggles(row):
    """``'eds'`` style label to ``(exp, de, sn)`` booleans."""
    return row[0] == "e", row[1] == "d", row[2] == "s"


def _ablation_job(args):
    cfg_dict, row = args
    cfg = from_mapping(cfg_dict)
    result = train_run(cfg)
    report, _ = evaluate(result.net, result.gda, result.splits.test, result.splits.ood)
    return row, cfg.seed, report.metrics


def thread_cap():
    raw = os.environ.get("DAEDL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DAEDL_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"DAEDL_THREADS must be a positive integer, got {raw!r}")
    return n


def ablate(cfg, workers=None):
    """Train and evaluate every requested toggle row for every seed.

    Returns ``(per_run, summary)``: a list of ``(row, seed, metrics)`` and a
    dict mapping each row to its seed-averaged metrics.
    """
    jobs = []
    for row in cfg.ablate_rows:
        exp, de, sn = row_toggles(row)
        for seed in cfg.ablate_seeds:
            jobs.append(({**cfg.to_dict(), "exp": exp, "de": de, "sn": sn, "seed": seed}, row))
    workers = min(workers or thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_run = list(pool.map(_ablation_job, jobs))
    else:
        per_run = [_ablation_job(j) for j in jobs]
    summary = {}
    for row in cfg.ablate_rows:
        runs = [m for r, _, m in per_run if r == row]
        keys = [k for k in runs[0] if all(k in m for m in runs)]
        summary[row] = {k: _nanmean([m[k] for m in runs]) for k in keys}
    return per_run, summary


def _nanmean(values):
    values = np.asarray(values, dtype=np.float64)
    finite = values[~np.isnan(values)]
    return float(finite.mean()) if len(finite) else float("nan")


def ablation_columns(summary):
    first = next(iter(summary.values()))
    ood = [k for k in first if k.startswith("ood/") and k.endswith("/aupr")]
    return ["accuracy", "brier", "misclassification_aupr"] + ood


def write_ablation(path, summary, n_seeds):
    cols = ablation_columns(summary)
    rows = []
    for row, m in summary.items():
        exp, de, sn = row_toggles(row)
        rows.append([f"({row})", str(int(exp)), str(int(de)), str(int(sn)), str(n_seeds)] + [m[c] for c in cols])
    write_table(path, ["row", "exp", "de", "sn", "n_seeds"] + cols, rows)
