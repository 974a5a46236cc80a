"""Model checkpoints: network, GDA density and run metadata in one ``.npz`` file.

The byte layout is documented in ``docs/checkpoint_format.md``. All arrays
are stored as little-endian float64 and the metadata as UTF-8 JSON, so a
save/load round trip is lossless.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .density import GdaModel
from .errors import DomainError, FormatError
from .network import DenseLayer, EvidentialNetwork

FORMAT = "daedl-checkpoint"
VERSION = 1


@dataclass
class Checkpoint:
    net: EvidentialNetwork
    gda: GdaModel = None
    train_config: dict = field(default_factory=dict)
    run_config: dict = field(default_factory=dict)


def _f64(a):
    return np.ascontiguousarray(a, dtype="<f8")


def save(path, net, gda=None, train_config=None, run_config=None):
    arrays = {}
    layers = []
    for i, layer in enumerate(net.layers):
        arrays[f"layer{i}_W"] = _f64(layer.W)
        arrays[f"layer{i}_b"] = _f64(layer.b)
        arrays[f"layer{i}_u"] = _f64(layer.u)
        layers.append({"shape": list(layer.W.shape), "activation": layer.activation,
                       "residual": bool(layer.residual)})
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "layers": layers,
        "parameterization": net.parameterization,
        "spectral_norm": bool(net.spectral_norm_enabled),
        "train_config": train_config or {},
        "run_config": run_config or {},
        "gda": None,
    }
    if gda is not None:
        arrays["gda_weights"] = _f64(gda.weights)
        arrays["gda_means"] = _f64(gda.means)
        arrays["gda_cov_factors"] = _f64(gda.cov_factors)
        arrays["gda_log_dets"] = _f64(gda.log_dets)
        arrays["gda_range"] = _f64([gda.d_min, gda.d_max])
        meta["gda"] = {"diagonal": bool(gda.diagonal)}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load(path):
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: not a checkpoint archive ({exc})") from None
    with archive:
        if "meta" not in archive.files:
            raise FormatError(f"{path}: missing metadata record")
        try:
            meta = json.loads(archive["meta"].tobytes().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}: unreadable metadata ({exc})") from None
        if meta.get("format") != FORMAT:
            raise FormatError(f"{path}: not a {FORMAT} file")
        if meta.get("version") != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        try:
            layers = []
            for i, spec in enumerate(meta["layers"]):
                layer = DenseLayer(archive[f"layer{i}_W"], archive[f"layer{i}_b"], archive[f"layer{i}_u"],
                                   spec["activation"], spec["residual"])
                if list(layer.W.shape) != spec["shape"]:
                    raise FormatError(f"{path}: layer {i} shape does not match its metadata")
                layers.append(layer)
            net = EvidentialNetwork(layers[:-1], layers[-1], meta["spectral_norm"], meta["parameterization"])
            gda = None
            if meta["gda"] is not None:
                d_min, d_max = archive["gda_range"]
                gda = GdaModel(archive["gda_weights"], archive["gda_means"], archive["gda_cov_factors"],
                               archive["gda_log_dets"], float(d_min), float(d_max), meta["gda"]["diagonal"])
        except KeyError as exc:
            raise FormatError(f"{path}: missing record {exc}") from None
        except DomainError as exc:
            raise FormatError(f"{path}: inconsistent layers ({exc})") from None
    return Checkpoint(net, gda, meta["train_config"], meta["run_config"])
