"""End-to-end drivers tying simulation, preprocessing, training and scoring
together, plus the text recipe parser and reproducibility records."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from typing import Optional

import numpy as np

from . import baseline, cdae, dsp, metrics, multitask, sim, store
from .errors import ConfigError, DataError, MetricUndefinedError
from .labels import QUALITY_ORDER, RHYTHM_ORDER, Quality, Rhythm


# ---------------------------------------------------------------------------
# recipe files: `key = value` lines, comma-separated lists, '#' comments


def parse_recipe(path: str) -> sim.SimRecipe:
    fields = {f.name: f.type for f in dataclasses.fields(sim.SimRecipe)}
    defaults = sim.SimRecipe()
    values = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in fields:
                raise ConfigError(f"{path}:{line_no}: unknown recipe key {key!r}")
            values[key] = _coerce(key, text, getattr(defaults, key))
    return dataclasses.replace(defaults, **values)


def _coerce(key: str, text: str, default):
    if isinstance(default, tuple):
        return tuple(float(t) for t in text.split(","))
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


# ---------------------------------------------------------------------------
# simulation -> dataset bundle


def simulate_bundle(recipe: sim.SimRecipe) -> store.DatasetBundle:
    """Simulate, corrupt, preprocess and label every window of a recipe."""
    recipe.validate()
    windows_rows = []
    clean_rows = []
    labels = []
    widx = 0
    for record in sim.iter_sim_records(recipe):
        stride = recipe.train_stride_s if record.partition == "train" else recipe.eval_stride_s
        cfg = dsp.PipelineConfig(stride_s=stride)
        noisy_windows = dsp.preprocess(record.noisy, cfg)
        clean_windows = dsp.preprocess(record.clean, cfg)
        for noisy_w, clean_w in zip(noisy_windows, clean_windows):
            windows_rows.append(noisy_w.samples.astype(np.float32))
            clean_rows.append(clean_w.samples.astype(np.float32))
            labels.append(
                store.WindowLabel(
                    window_id=f"w{widx:06d}",
                    subject_id=record.subject_id,
                    partition=record.partition,
                    rhythm=record.rhythm,
                    qa=record.qa,
                    episode_id=f"{record.subject_id}-e0",
                    noise_factor=record.noise_factor,
                )
            )
            widx += 1
    if not windows_rows:
        raise ConfigError("recipe produced no windows")
    bundle = store.DatasetBundle(
        windows=np.stack(windows_rows),
        labels=labels,
        fs=dsp.TARGET_FS,
        window_len=dsp.WINDOW_LEN,
        seed=recipe.seed,
        clean=np.stack(clean_rows),
    )
    bundle.validate()
    return bundle


def _onehot(indices, width):
    out = np.zeros((len(indices), width), dtype=np.float32)
    out[np.arange(len(indices)), indices] = 1.0
    return out


def partition_tensors(bundle: store.DatasetBundle, partition: str) -> dict:
    idx = bundle.select(partition)
    labels = [bundle.labels[i] for i in idx]
    rhythm_idx = [lbl.rhythm.index for lbl in labels]
    qa_idx = [lbl.qa.index for lbl in labels]
    return {
        "idx": idx,
        "x": bundle.windows[idx],
        "clean": None if bundle.clean is None else bundle.clean[idx],
        "r": _onehot(rhythm_idx, len(RHYTHM_ORDER)),
        "q": _onehot(qa_idx, len(QUALITY_ORDER)),
        "labels": labels,
    }


# ---------------------------------------------------------------------------
# training drivers


def run_pretrain(
    bundle: store.DatasetBundle,
    profile: str = "paper",
    epochs: int = 200,
    batch_size: int = 32,
    lr: float = 1e-3,
    seed: int = 0,
) -> cdae.Cdae:
    if bundle.clean is None:
        raise DataError("dataset has no clean targets; re-simulate with clean windows")
    train = partition_tensors(bundle, "train")
    val = partition_tensors(bundle, "val")
    model = cdae.build_cdae(seed=seed, profile=profile)
    config = cdae.PretrainConfig(epochs=epochs, batch_size=batch_size, lr=lr, seed=seed)
    cdae.pretrain(model, (train["x"], train["clean"]), (val["x"], val["clean"]), config)
    return model


def run_train_deepbeat(
    bundle: store.DatasetBundle,
    profile: str = "paper",
    encoder: Optional[cdae.Cdae] = None,
    single_task: bool = False,
    lambda_qa: float = 1.0,
    epochs: int = 50,
    batch_size: int = 32,
    lr: float = 1e-3,
    seed: int = 0,
) -> multitask.MultiTaskModel:
    train = partition_tensors(bundle, "train")
    val = partition_tensors(bundle, "val")
    model = multitask.build_deepbeat(seed=seed, encoder_source=encoder, profile=profile)
    config = multitask.TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
        lambda_qa=0.0 if single_task else lambda_qa,
        seed=seed,
    )
    data = {
        "x_train": train["x"],
        "r_train": train["r"],
        "q_train": train["q"],
        "x_val": val["x"],
        "r_val": val["r"],
        "q_val": val["q"],
    }
    multitask.train_deepbeat(model, data, config)
    return model


def run_train_baseline(
    bundle: store.DatasetBundle,
    n_estimators: int = 100,
    seed: int = 1,
) -> baseline.MultiOutputForest:
    train = partition_tensors(bundle, "train")
    features = baseline.extract_feature_matrix(train["x"], fs=bundle.fs)
    targets = np.stack(
        [
            [lbl.rhythm.index for lbl in train["labels"]],
            [lbl.qa.index for lbl in train["labels"]],
        ],
        axis=1,
    )
    return baseline.fit_forest(features, targets, n_estimators=n_estimators, seed=seed)


# ---------------------------------------------------------------------------
# evaluation


def build_records(bundle: store.DatasetBundle, model, partition: str = "test"):
    """Score every window of a partition with either model family."""
    part = partition_tensors(bundle, partition)
    if len(part["labels"]) == 0:
        raise DataError(f"partition {partition!r} is empty")
    if isinstance(model, baseline.MultiOutputForest):
        features = baseline.extract_feature_matrix(part["x"], fs=bundle.fs)
        rp, qp = model.predict_proba(features)
    elif isinstance(model, multitask.MultiTaskModel):
        rp, qp = model.predict_batch(part["x"])
    else:
        raise DataError(f"cannot evaluate model of type {type(model).__name__}")
    records = []
    for i, lbl in enumerate(part["labels"]):
        records.append(
            metrics.EvalRecord(
                window_id=lbl.window_id,
                subject_id=lbl.subject_id,
                true_rhythm=lbl.rhythm,
                rhythm_probs=np.asarray(rp[i], dtype=np.float64),
                qa_probs=np.asarray(qp[i], dtype=np.float64),
                true_qa=lbl.qa,
                episode_id=lbl.episode_id,
            )
        )
    return records


def evaluate_records(
    records,
    qa_gate_level: Optional[Quality] = None,
    threshold: float = metrics.DEFAULT_THRESHOLD,
    episodes: bool = False,
):
    """Assemble the metrics report (and PR points) from scored records."""
    if qa_gate_level is not None:
        retained, gated_out = metrics.qa_gate(records, qa_gate_level)
    else:
        retained, gated_out = list(records), 0
    if not retained:
        raise DataError("no windows left after quality gating")
    precision, recall, f1, counts = metrics.prf1(retained, threshold=threshold)
    scores = np.array([r.af_score for r in retained])
    truth = np.array([r.true_rhythm is Rhythm.AF for r in retained], dtype=np.int64)
    try:
        area = metrics.auprc(scores, truth)
        pr_points = metrics.pr_curve(scores, truth)
    except MetricUndefinedError:
        area = float("nan")
        pr_points = None

    episode_sens = None
    extra = {}
    if episodes:
        try:
            episode_sens, detected, total = metrics.episode_sensitivity(retained, threshold)
            extra["episodes_detected"] = detected
            extra["episodes_total"] = total
        except (MetricUndefinedError, DataError):
            episode_sens = None

    fpr = None
    af_subjects = {r.subject_id for r in records if r.true_rhythm is Rhythm.AF}
    af_free = [r for r in retained if r.subject_id not in af_subjects]
    if af_free:
        fpr, n_fp, n_gated = metrics.false_positive_rate(af_free, threshold)
        extra["fpr_false_alarms"] = n_fp
        extra["fpr_windows"] = n_gated

    report = metrics.MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        auprc=area,
        tp=counts["tp"],
        fp=counts["fp"],
        fn=counts["fn"],
        tn=counts["tn"],
        n_windows=len(retained),
        n_gated_out=gated_out,
        episode_sensitivity=episode_sens,
        false_positive_rate=fpr,
        extra=extra,
    )
    return report, pr_points


def evaluate_model(
    bundle: store.DatasetBundle,
    model,
    partition: str = "test",
    qa_gate_level: Optional[Quality] = None,
    threshold: float = metrics.DEFAULT_THRESHOLD,
    episodes: bool = False,
):
    records = build_records(bundle, model, partition)
    return evaluate_records(records, qa_gate_level, threshold, episodes)


# ---------------------------------------------------------------------------
# reproducibility records


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_run_record(artifact_path: str, command: str, config: dict):
    """Drop a run.json beside an artifact; content is timestamp-free so
    identical runs stay byte-identical."""
    from . import __version__

    record = {
        "command": command,
        "config": config,
        "config_sha256": config_digest(config),
        "package_version": __version__,
        "numpy_version": np.__version__,
    }
    tmp = os.path.join(artifact_path, "run.json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(artifact_path, "run.json"))
