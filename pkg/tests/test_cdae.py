"""Autoencoder tests: architecture fidelity, encoding, pretraining."""

import numpy as np
import pytest

from ppgaf import cdae, dsp, sim
from ppgaf.errors import ConfigError, ShapeError

EXPECTED_TABLE = [
    ("Input", (None, 800, 1), 0),
    ("Conv1D", (None, 800, 64), 704),
    ("MaxPool1D", (None, 266, 64), 0),
    ("Conv1D", (None, 266, 45), 23085),
    ("MaxPool1D", (None, 88, 45), 0),
    ("Conv1D", (None, 88, 50), 11300),
    ("MaxPool1D", (None, 44, 50), 0),
    ("Conv1D", (None, 44, 50), 12550),
    ("UpSample1D", (None, 88, 50), 0),
    ("Conv1D", (None, 88, 45), 18045),
    ("UpSample1D", (None, 264, 45), 0),
    ("Conv1D", (None, 264, 64), 28864),
    ("UpSample1D", (None, 792, 64), 0),
    ("Flatten", (None, 50688), 0),
    ("Dense", (None, 800), 40551200),
]


def test_paper_profile_matches_published_table():
    assert cdae.describe_cdae("paper") == EXPECTED_TABLE


def test_total_parameter_count():
    total = sum(params for _, _, params in cdae.describe_cdae("paper"))
    assert total == 40645748


def test_mini_profile_same_topology():
    rows = cdae.describe_cdae("mini")
    assert [k for k, _, _ in rows] == [k for k, _, _ in EXPECTED_TABLE]
    assert [s[1] for _, s, _ in rows[:-2]] == [s[1] for _, s, _ in EXPECTED_TABLE[:-2]]
    assert rows[-1][1] == (None, 800)


def test_unknown_profile_rejected():
    with pytest.raises(ConfigError):
        cdae.build_cdae(profile="huge")


def test_encode_shape_and_determinism():
    model = cdae.build_cdae(seed=3, profile="mini")
    window = np.random.default_rng(0).random(800)
    latent = model.encode(window)
    assert latent.shape == (44, cdae.PROFILES["mini"][2])
    assert np.array_equal(latent, model.encode(window))


def test_encode_paper_latent_shape():
    model = cdae.build_cdae(seed=0, profile="paper")
    latent = model.encode(np.random.default_rng(1).random(800))
    assert latent.shape == (44, 50)


def test_encode_distinguishes_windows():
    model = cdae.build_cdae(seed=3, profile="mini")
    rng = np.random.default_rng(5)
    a = model.encode(rng.random(800))
    b = model.encode(rng.random(800))
    assert np.max(np.abs(a - b)) > 0


def test_encode_rejects_wrong_length():
    model = cdae.build_cdae(seed=0, profile="mini")
    with pytest.raises(ShapeError):
        model.encode(np.zeros(799))


def test_denoise_output_shape_and_finiteness():
    model = cdae.build_cdae(seed=1, profile="mini")
    out = model.denoise(np.random.default_rng(2).random(800))
    assert out.shape == (800,)
    assert np.all(np.isfinite(out))


def test_build_deterministic_given_seed():
    a = cdae.build_cdae(seed=11, profile="mini")
    b = cdae.build_cdae(seed=11, profile="mini")
    for (_, ta), (_, tb) in zip(a.state_tensors(), b.state_tensors()):
        assert np.array_equal(ta, tb)


# ---------------------------------------------------------------------------
# learning-rate schedule contract


def test_plateau_schedule_flat_loss_reduces_at_25_and_50():
    schedule = cdae.PlateauSchedule(lr=1e-3, factor=0.1, patience=25)
    rates = [schedule.step(1.0) for _ in range(60)]
    assert all(r == 1e-3 for r in rates[:25])
    assert rates[25] == pytest.approx(1e-4)
    assert all(r == pytest.approx(1e-4) for r in rates[25:50])
    assert rates[50] == pytest.approx(1e-5)


def test_plateau_schedule_resets_on_improvement():
    schedule = cdae.PlateauSchedule(lr=1e-3, patience=3)
    for loss in (1.0, 1.0, 1.0, 0.5, 1.0, 1.0):
        schedule.step(loss)
    assert schedule.lr == 1e-3  # improvement at step 3 reset the counter


def test_plateau_schedule_floor():
    schedule = cdae.PlateauSchedule(lr=1e-5, factor=0.1, patience=1, floor=1e-6)
    schedule.step(1.0)
    schedule.step(1.0)
    schedule.step(1.0)
    assert schedule.lr == 1e-6


# ---------------------------------------------------------------------------
# pretraining


def tiny_pairs(n, seed):
    recipe = sim.SimRecipe(
        seed=seed,
        train_subjects=n // 2,
        val_subjects=0,
        test_subjects=0,
        noise_factors=(0.25, 1.0),
        noise_mode="cycle",
    )
    noisy, clean = [], []
    for record in sim.iter_sim_records(recipe):
        noisy.append(dsp.preprocess(record.noisy)[0].samples)
        clean.append(dsp.preprocess(record.clean)[0].samples)
    return np.asarray(noisy, dtype=np.float32), np.asarray(clean, dtype=np.float32)


def test_pretrain_overfits_tiny_set():
    noisy, clean = tiny_pairs(64, seed=31)
    model = cdae.build_cdae(seed=0, profile="mini")
    config = cdae.PretrainConfig(epochs=30, batch_size=16, seed=0)
    history = cdae.pretrain(model, (noisy, clean), (noisy[:8], clean[:8]), config)
    assert len(history) == 30
    assert history[-1]["train_mse"] < history[0]["train_mse"]
    assert model.trained


def test_pretrain_deterministic():
    noisy, clean = tiny_pairs(16, seed=32)

    def run():
        model = cdae.build_cdae(seed=4, profile="mini")
        cdae.pretrain(
            model,
            (noisy, clean),
            (noisy[:4], clean[:4]),
            cdae.PretrainConfig(epochs=3, batch_size=8, seed=4),
        )
        return [t.copy() for _, t in model.state_tensors()]

    for ta, tb in zip(run(), run()):
        assert np.array_equal(ta, tb)


def test_pretrain_rejects_empty_dataset():
    model = cdae.build_cdae(seed=0, profile="mini")
    empty = np.zeros((0, 800), dtype=np.float32)
    with pytest.raises(ConfigError):
        cdae.pretrain(model, (empty, empty), (empty, empty), cdae.PretrainConfig(epochs=1))
