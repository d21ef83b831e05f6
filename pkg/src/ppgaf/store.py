"""On-disk artifacts: dataset bundles, model checkpoints, metric reports.

Every artifact is a directory with a versioned manifest.json beside raw
little-endian float32 blobs and TSV label tables. Writers stage into a
temporary sibling directory and rename into place; readers reject unknown
versions and size mismatches with diagnostics naming the offending field.
All emitted bytes are a pure function of the content, so identical runs
produce identical artifacts.
"""

from __future__ import annotations

import json
import os
import shutil
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import baseline, cdae, multitask, nn
from .errors import FormatError
from .labels import Quality, Rhythm

DATASET_VERSION = 1
CHECKPOINT_VERSION = 1
REPORT_VERSION = 1

_PARTITIONS = ("train", "val", "test")


# ---------------------------------------------------------------------------
# dataset bundles


@dataclass
class WindowLabel:
    window_id: str
    subject_id: str
    partition: str
    rhythm: Rhythm
    qa: Quality
    episode_id: str
    noise_factor: float


@dataclass
class DatasetBundle:
    windows: np.ndarray  # [n, window_len] float32
    labels: list
    fs: float = 32.0
    window_len: int = 800
    seed: int = 0
    clean: Optional[np.ndarray] = None  # aligned clean targets for pretraining

    def validate(self):
        n = self.windows.shape[0]
        if self.windows.ndim != 2 or self.windows.shape[1] != self.window_len:
            raise FormatError(
                f"windows blob shape {self.windows.shape} != (n, {self.window_len})"
            )
        if len(self.labels) != n:
            raise FormatError(f"labels rows {len(self.labels)} != windows rows {n}")
        if self.clean is not None and self.clean.shape != self.windows.shape:
            raise FormatError("clean blob shape differs from windows blob")
        subjects = {}
        for lbl in self.labels:
            if lbl.partition not in _PARTITIONS:
                raise FormatError(f"unknown partition {lbl.partition!r}")
            prev = subjects.setdefault(lbl.subject_id, lbl.partition)
            if prev != lbl.partition:
                raise FormatError(
                    f"subject {lbl.subject_id} appears in partitions {prev} and {lbl.partition}"
                )

    def counts(self) -> dict:
        out: dict = {}
        for lbl in self.labels:
            part = out.setdefault(lbl.partition, {})
            rhy = part.setdefault(lbl.rhythm.value, {})
            rhy[lbl.qa.value] = rhy.get(lbl.qa.value, 0) + 1
        return out

    def select(self, partition: str):
        """Row indices of one partition, in stored order."""
        return np.array(
            [i for i, lbl in enumerate(self.labels) if lbl.partition == partition],
            dtype=np.int64,
        )


def _atomic_dir(path: str):
    tmp = f"{path}.tmp{os.getpid()}"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    return tmp


def _commit_dir(tmp: str, path: str):
    if os.path.exists(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def _write_json(path: str, obj: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise FormatError(f"missing manifest: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"corrupt manifest {path}: {exc}") from exc


def save_dataset(bundle: DatasetBundle, path: str):
    bundle.validate()
    tmp = _atomic_dir(path)
    manifest = {
        "format_version": DATASET_VERSION,
        "kind": "dataset",
        "n_windows": int(bundle.windows.shape[0]),
        "window_len": int(bundle.window_len),
        "fs": float(bundle.fs),
        "seed": int(bundle.seed),
        "has_clean": bundle.clean is not None,
        "counts": bundle.counts(),
    }
    _write_json(os.path.join(tmp, "manifest.json"), manifest)
    bundle.windows.astype("<f4").tofile(os.path.join(tmp, "windows.f32"))
    if bundle.clean is not None:
        bundle.clean.astype("<f4").tofile(os.path.join(tmp, "clean.f32"))
    with open(os.path.join(tmp, "labels.tsv"), "w", encoding="utf-8") as fh:
        fh.write("window_id\tsubject_id\tpartition\trhythm\tqa\tepisode_id\tnoise_factor\n")
        for lbl in bundle.labels:
            fh.write(
                f"{lbl.window_id}\t{lbl.subject_id}\t{lbl.partition}\t"
                f"{lbl.rhythm.value}\t{lbl.qa.value}\t{lbl.episode_id}\t{lbl.noise_factor!r}\n"
            )
    _commit_dir(tmp, path)


def _read_blob(path: str, name: str, rows: int, cols: int) -> np.ndarray:
    blob_path = os.path.join(path, name)
    if not os.path.exists(blob_path):
        raise FormatError(f"missing blob {name}")
    data = np.fromfile(blob_path, dtype="<f4")
    expected = rows * cols
    if data.size != expected:
        raise FormatError(
            f"blob {name} holds {data.size} values, expected {expected} "
            f"(n_windows x window_len)"
        )
    return data.reshape(rows, cols)


def load_dataset(path: str) -> DatasetBundle:
    manifest = _read_json(os.path.join(path, "manifest.json"))
    if manifest.get("format_version") != DATASET_VERSION:
        raise FormatError(
            f"unsupported dataset format_version {manifest.get('format_version')!r}"
        )
    n = int(manifest["n_windows"])
    window_len = int(manifest["window_len"])
    windows = _read_blob(path, "windows.f32", n, window_len)
    clean = _read_blob(path, "clean.f32", n, window_len) if manifest["has_clean"] else None
    labels = []
    labels_path = os.path.join(path, "labels.tsv")
    if not os.path.exists(labels_path):
        raise FormatError("missing labels.tsv")
    with open(labels_path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("window_id\t"):
            raise FormatError("labels.tsv has an unexpected header")
        for line_no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 7:
                raise FormatError(f"labels.tsv line {line_no}: expected 7 fields")
            try:
                rhythm = Rhythm.from_str(parts[3])
                qa = Quality.from_str(parts[4])
            except ValueError as exc:
                raise FormatError(f"labels.tsv line {line_no}: {exc}") from exc
            labels.append(
                WindowLabel(
                    window_id=parts[0],
                    subject_id=parts[1],
                    partition=parts[2],
                    rhythm=rhythm,
                    qa=qa,
                    episode_id=parts[5],
                    noise_factor=float(parts[6]),
                )
            )
    if len(labels) != n:
        raise FormatError(f"manifest n_windows {n} != labels rows {len(labels)}")
    bundle = DatasetBundle(
        windows=windows,
        labels=labels,
        fs=float(manifest["fs"]),
        window_len=window_len,
        seed=int(manifest["seed"]),
        clean=clean,
    )
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# model checkpoints


def _tensor_entries(named_arrays):
    return [{"name": name, "shape": list(arr.shape)} for name, arr in named_arrays]


def _concat_blob(named_arrays) -> bytes:
    if not named_arrays:
        return b""
    return np.concatenate([arr.astype("<f4").ravel() for _, arr in named_arrays]).tobytes()


def _forest_tensors(forest: baseline.MultiOutputForest):
    out = []
    for t, rf in enumerate(forest.forests):
        for i, tree in enumerate(rf.trees):
            prefix = f"target{t}.tree{i}"
            out.append((f"{prefix}.feature", tree.feature.astype(np.float32)))
            out.append((f"{prefix}.threshold", tree.threshold.astype(np.float32)))
            out.append((f"{prefix}.left", tree.left.astype(np.float32)))
            out.append((f"{prefix}.right", tree.right.astype(np.float32)))
            out.append((f"{prefix}.counts", tree.counts.astype(np.float32)))
    return out


def save_checkpoint(model, path: str, config: Optional[dict] = None):
    if isinstance(model, cdae.Cdae):
        kind, arch = model.kind, model.arch()
        tensors = model.state_tensors()
        extra = {"profile": model.profile, "seed": model.seed, "trained": model.trained}
    elif isinstance(model, multitask.MultiTaskModel):
        kind, arch = model.kind, model.arch()
        tensors = model.state_tensors()
        extra = {"profile": model.profile, "seed": model.seed, "trained": model.trained}
    elif isinstance(model, baseline.MultiOutputForest):
        kind = "forest"
        arch = {
            "n_estimators": model.n_estimators,
            "seed": model.seed,
            "target_classes": list(model.TARGET_CLASSES),
        }
        tensors = _forest_tensors(model)
        extra = {"trained": bool(model.forests)}
    else:
        raise FormatError(f"cannot checkpoint object of type {type(model).__name__}")
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "kind": kind,
        "arch": arch,
        "tensors": _tensor_entries(tensors),
        "config": config or {},
    }
    manifest.update(extra)
    tmp = _atomic_dir(path)
    _write_json(os.path.join(tmp, "manifest.json"), manifest)
    with open(os.path.join(tmp, "weights.f32"), "wb") as fh:
        fh.write(_concat_blob(tensors))
    _commit_dir(tmp, path)


def _split_blob(path: str, entries):
    blob_path = os.path.join(path, "weights.f32")
    if not os.path.exists(blob_path):
        raise FormatError("missing weights.f32")
    flat = np.fromfile(blob_path, dtype="<f4")
    expected = sum(int(np.prod(e["shape"])) for e in entries)
    if flat.size != expected:
        raise FormatError(
            f"weights.f32 holds {flat.size} values, manifest declares {expected}"
        )
    out = {}
    pos = 0
    for e in entries:
        size = int(np.prod(e["shape"]))
        out[e["name"]] = flat[pos : pos + size].reshape(e["shape"])
        pos += size
    return out


def _fill_state(named_arrays, tensors: dict):
    for name, arr in named_arrays:
        if name not in tensors:
            raise FormatError(f"checkpoint is missing tensor {name}")
        stored = tensors[name]
        if tuple(stored.shape) != tuple(arr.shape):
            raise FormatError(
                f"tensor {name} shape {tuple(stored.shape)} != expected {tuple(arr.shape)}"
            )
        np.copyto(arr, stored.astype(arr.dtype))


def load_checkpoint(path: str):
    manifest = _read_json(os.path.join(path, "manifest.json"))
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"unsupported checkpoint format_version {manifest.get('format_version')!r}"
        )
    kind = manifest.get("kind")
    tensors = _split_blob(path, manifest.get("tensors", []))
    if kind == "cdae":
        model = _rebuild_cdae(manifest)
        _fill_state(model.state_tensors(), tensors)
        model.trained = bool(manifest.get("trained", False))
        return model
    if kind == "deepbeat":
        model = _rebuild_deepbeat(manifest)
        _fill_state(model.state_tensors(), tensors)
        model.trained = bool(manifest.get("trained", False))
        return model
    if kind == "forest":
        return _rebuild_forest(manifest, tensors)
    raise FormatError(f"unknown checkpoint kind {kind!r}")


def _rebuild_cdae(manifest) -> cdae.Cdae:
    layers = [nn.layer_from_spec(s) for s in manifest["arch"]["layers"]]
    net = nn.Sequential(layers, (cdae.INPUT_LEN, 1), rng=None, name="cdae")
    return cdae.Cdae(net, manifest.get("profile", "paper"), int(manifest.get("seed", 0)))


def _rebuild_deepbeat(manifest) -> multitask.MultiTaskModel:
    arch = manifest["arch"]
    trunk = nn.Sequential(
        [nn.layer_from_spec(s) for s in arch["trunk"]],
        (multitask.INPUT_LEN, 1),
        rng=None,
        name="trunk",
    )
    rhythm = nn.Sequential(
        [nn.layer_from_spec(s) for s in arch["rhythm"]], trunk.output_shape, rng=None, name="rhythm"
    )
    qa = nn.Sequential(
        [nn.layer_from_spec(s) for s in arch["qa"]], trunk.output_shape, rng=None, name="qa"
    )
    return multitask.MultiTaskModel(
        trunk, rhythm, qa, manifest.get("profile", "paper"), int(manifest.get("seed", 0))
    )


def _rebuild_forest(manifest, tensors) -> baseline.MultiOutputForest:
    arch = manifest["arch"]
    forest = baseline.MultiOutputForest(
        n_estimators=int(arch["n_estimators"]), seed=int(arch["seed"])
    )
    forest.forests = []
    for t, n_classes in enumerate(arch["target_classes"]):
        rf = baseline.RandomForest(int(n_classes), forest.n_estimators, seed_key=(forest.seed, t))
        rf.trees = []
        for i in range(forest.n_estimators):
            prefix = f"target{t}.tree{i}"
            try:
                feature = tensors[f"{prefix}.feature"]
                threshold = tensors[f"{prefix}.threshold"]
                left = tensors[f"{prefix}.left"]
                right = tensors[f"{prefix}.right"]
                counts = tensors[f"{prefix}.counts"]
            except KeyError as exc:
                raise FormatError(f"forest checkpoint missing {exc.args[0]}") from exc
            tree = baseline.DecisionTree(int(n_classes), max_features=1)
            tree.feature = feature.astype(np.int32)
            tree.threshold = threshold.astype(np.float32)
            tree.left = left.astype(np.int32)
            tree.right = right.astype(np.int32)
            tree.counts = counts.astype(np.float64)
            rf.trees.append(tree)
        forest.forests.append(rf)
    return forest


# ---------------------------------------------------------------------------
# metric reports


def save_report(report_dict: dict, path: str, pr_points=None):
    """Write a metrics report directory: report.json plus the PR curve."""
    tmp = _atomic_dir(path)
    payload = {"format_version": REPORT_VERSION, "kind": "metrics_report"}
    payload.update(report_dict)
    _write_json(os.path.join(tmp, "report.json"), payload)
    if pr_points is not None:
        precision, recall, thresholds = pr_points
        with open(os.path.join(tmp, "pr_curve.tsv"), "w", encoding="utf-8") as fh:
            fh.write("threshold\tprecision\trecall\n")
            for t, p, r in zip(thresholds, precision, recall):
                fh.write(f"{t!r}\t{p!r}\t{r!r}\n")
    _commit_dir(tmp, path)


def load_report(path: str) -> dict:
    payload = _read_json(os.path.join(path, "report.json"))
    if payload.get("format_version") != REPORT_VERSION:
        raise FormatError(
            f"unsupported report format_version {payload.get('format_version')!r}"
        )
    return payload
