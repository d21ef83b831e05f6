"""Synthetic single-channel PPG generation.

A pulse train is rendered from per-beat RR intervals using a two-Gaussian
morphology (systolic peak + dicrotic bump), then shaped by an amplitude
modulation envelope and a baseline-wander sinusoid. Rhythm irregularity
enters only through the RR sequence: sinus beats get a mild sinusoidal
(respiration-like) modulation, while AF beats draw i.i.d. uniform
perturbations sized to a target coefficient of variation. Additive
Gaussian noise scaled by the clean signal's own standard deviation
produces controlled corruption levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError, DataError
from .labels import Quality, Rhythm

# Corruption levels available by default (union of the two conventional lists).
DEFAULT_NOISE_FACTORS = (0.001, 0.15, 0.25, 0.5, 0.75, 1.0, 2.0, 5.0)

# Sinus-rhythm RR modulation: depth as a fraction of the base period, at a
# breathing-like rate. Active only when fm_cv > 0.
SINUS_RR_DEPTH = 0.05
SINUS_RR_FREQ = 0.25


@dataclass(frozen=True)
class PulseTemplate:
    """Two-Gaussian beat morphology; positions/widths are fractions of RR."""

    systolic_frac: float = 0.30
    systolic_amp: float = 1.0
    systolic_width: float = 0.10
    dicrotic_frac: float = 0.65
    dicrotic_amp: float = 0.35
    dicrotic_width: float = 0.15

    @property
    def peak_amp(self) -> float:
        # loose upper bound on the rendered template's peak value
        return self.systolic_amp + self.dicrotic_amp


@dataclass(frozen=True)
class SimConfig:
    bpm: float = 60.0
    duration_s: float = 25.0
    fs: float = 128.0
    rhythm: Rhythm = Rhythm.SINUS
    bw_amp: float = 0.1
    bw_freq: float = 0.25
    am_depth: float = 0.1
    am_freq: float = 0.25
    fm_cv: float = 0.0
    noise_factor: float = 0.0
    seed: int = 0
    template: PulseTemplate = field(default_factory=PulseTemplate)

    def validate(self) -> None:
        if not 30.0 <= self.bpm <= 220.0:
            raise ConfigError(f"bpm must be in [30, 220], got {self.bpm}")
        if self.duration_s <= 0:
            raise ConfigError("duration_s must be positive")
        if self.fs <= 0:
            raise ConfigError("fs must be positive")
        if self.noise_factor < 0:
            raise ConfigError("noise_factor must be >= 0")
        if self.fm_cv < 0:
            raise ConfigError("fm_cv must be >= 0")
        if self.rhythm is Rhythm.AF:
            if self.fm_cv <= 0:
                raise ConfigError("AF simulation requires fm_cv > 0")
            if self.fm_cv >= 1.0 / math.sqrt(3.0):
                raise ConfigError("fm_cv too large: RR intervals could go non-positive")
        if min(self.bw_amp, self.am_depth) < 0:
            raise ConfigError("modulation depths must be >= 0")
        # pulse spectral content reaches roughly 3 sigma of the systolic Gaussian
        rr = 60.0 / self.bpm
        pulse_bw = 3.0 / (2.0 * math.pi * self.template.systolic_width * rr)
        highest = max(self.bw_freq, self.am_freq, pulse_bw)
        if self.fs <= 2.0 * highest:
            raise ConfigError(
                f"fs={self.fs} does not satisfy fs > 2 x highest simulated "
                f"frequency ({highest:.1f} Hz)"
            )


@dataclass
class Signal:
    """A raw single-channel trace plus provenance metadata."""

    samples: np.ndarray
    fs: float
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.samples.size == 0:
            raise DataError("signal has no samples")
        if self.fs <= 0:
            raise DataError("signal fs must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("signal contains non-finite samples")


def gen_rr(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """Generate RR intervals (seconds) covering the configured duration.

    Sinus: base period 60/bpm with a small sinusoidal modulation
    (disabled when fm_cv == 0). AF: base period times (1 + u) with
    u ~ Uniform(-sqrt(3)*cv, +sqrt(3)*cv), i.i.d. per beat, which gives a
    population coefficient of variation equal to fm_cv.
    """
    config.validate()
    base = 60.0 / config.bpm
    intervals = []
    t = 0.0
    if config.rhythm is Rhythm.AF:
        half_range = math.sqrt(3.0) * config.fm_cv
        while t < config.duration_s:
            u = rng.uniform(-half_range, half_range)
            rr = base * (1.0 + u)
            intervals.append(rr)
            t += rr
    else:
        while t < config.duration_s:
            if config.fm_cv > 0:
                rr = base * (1.0 + SINUS_RR_DEPTH * math.sin(2.0 * math.pi * SINUS_RR_FREQ * t))
            else:
                rr = base
            intervals.append(rr)
            t += rr
    return np.asarray(intervals, dtype=np.float64)


def synth_ppg(rr: np.ndarray, config: SimConfig) -> Signal:
    """Render a pulse train from RR intervals with AM and baseline wander."""
    rr = np.asarray(rr, dtype=np.float64)
    if rr.size == 0:
        raise DataError("rr must be non-empty")
    if np.any(rr <= 0):
        raise DataError("rr intervals must all be positive")
    config.validate()
    fs = config.fs
    n = int(round(config.duration_s * fs))
    t = np.arange(n) / fs
    tpl = config.template
    pulses = np.zeros(n)
    onset = 0.0
    for interval in rr:
        for frac, amp, width in (
            (tpl.systolic_frac, tpl.systolic_amp, tpl.systolic_width),
            (tpl.dicrotic_frac, tpl.dicrotic_amp, tpl.dicrotic_width),
        ):
            mu = onset + frac * interval
            sigma = width * interval
            lo = max(0, int((mu - 4.0 * sigma) * fs))
            hi = min(n, int((mu + 4.0 * sigma) * fs) + 1)
            if lo < hi:
                seg = t[lo:hi]
                pulses[lo:hi] += amp * np.exp(-0.5 * ((seg - mu) / sigma) ** 2)
        onset += interval
        if onset - 4.0 * tpl.dicrotic_width * interval > config.duration_s:
            break
    envelope = 1.0 + config.am_depth * np.sin(2.0 * math.pi * config.am_freq * t)
    wander = config.bw_amp * tpl.peak_amp * np.sin(2.0 * math.pi * config.bw_freq * t)
    samples = pulses * envelope + wander
    return Signal(samples=samples, fs=fs, meta={"rhythm": config.rhythm.value})


def corrupt(x: Signal, noise_factor: float, rng: np.random.Generator) -> Signal:
    """Add white Gaussian noise scaled by the signal's own std deviation."""
    x.validate()
    if noise_factor < 0:
        raise DataError(f"noise_factor must be >= 0, got {noise_factor}")
    if noise_factor == 0:
        return Signal(samples=x.samples.copy(), fs=x.fs, meta=dict(x.meta))
    scale = noise_factor * float(np.std(x.samples))
    noisy = x.samples + scale * rng.standard_normal(x.samples.shape)
    meta = dict(x.meta)
    meta["noise_factor"] = noise_factor
    return Signal(samples=noisy, fs=x.fs, meta=meta)


# ---------------------------------------------------------------------------
# dataset recipes


@dataclass(frozen=True)
class SimRecipe:
    """Declarative description of a simulated labeled dataset."""

    seed: int = 0
    fs: float = 128.0
    duration_s: float = 25.0
    train_subjects: int = 10  # per rhythm
    val_subjects: int = 2
    test_subjects: int = 2
    noise_mode: str = "cycle"  # "cycle": one factor per subject; "grid": all factors
    noise_factors: tuple = DEFAULT_NOISE_FACTORS
    bpm_min: float = 55.0
    bpm_max: float = 105.0
    af_fm_cv: float = 0.25
    sinus_fm_cv: float = 0.05
    bw_amp: float = 0.1
    bw_freq: float = 0.25
    am_depth: float = 0.1
    am_freq: float = 0.25
    train_stride_s: float = 12.5
    eval_stride_s: float = 25.0
    qa_excellent_max: float = 0.15
    qa_acceptable_max: float = 0.75

    def validate(self) -> None:
        counts = (self.train_subjects, self.val_subjects, self.test_subjects)
        if any(c < 0 for c in counts):
            raise ConfigError("subject counts must be >= 0")
        if sum(counts) == 0:
            raise ConfigError("recipe is empty: no subjects in any partition")
        if len(self.noise_factors) == 0:
            raise ConfigError("recipe needs at least one noise factor")
        if any(nf < 0 for nf in self.noise_factors):
            raise ConfigError("noise factors must be >= 0")
        if self.noise_mode not in ("cycle", "grid"):
            raise ConfigError(f"noise_mode must be 'cycle' or 'grid', got {self.noise_mode!r}")
        if not 30.0 <= self.bpm_min <= self.bpm_max <= 220.0:
            raise ConfigError("bpm range must satisfy 30 <= bpm_min <= bpm_max <= 220")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not 0 <= self.qa_excellent_max <= self.qa_acceptable_max:
            raise ConfigError("QA thresholds must satisfy 0 <= excellent <= acceptable")


def qa_from_noise(noise_factor: float, recipe: SimRecipe) -> Quality:
    """Map a corruption level to its quality proxy label."""
    if noise_factor <= recipe.qa_excellent_max:
        return Quality.EXCELLENT
    if noise_factor <= recipe.qa_acceptable_max:
        return Quality.ACCEPTABLE
    return Quality.POOR


@dataclass
class SimRecord:
    """One (clean, corrupted) signal pair with its labels."""

    subject_id: str
    partition: str
    rhythm: Rhythm
    qa: Quality
    noise_factor: float
    clean: Signal
    noisy: Signal


def _subject_rng(seed: int, subject_index: int, tag: int) -> np.random.Generator:
    # independent stream per (seed, subject, purpose): parallel == serial
    return np.random.default_rng(np.random.SeedSequence([seed, subject_index, tag]))


def iter_sim_records(recipe: SimRecipe) -> Iterator[SimRecord]:
    """Yield labeled (clean, noisy) records; deterministic in the recipe."""
    recipe.validate()
    partitions = (
        ("train", recipe.train_subjects),
        ("val", recipe.val_subjects),
        ("test", recipe.test_subjects),
    )
    sidx = 0
    for partition, n_subjects in partitions:
        for rhythm in (Rhythm.SINUS, Rhythm.AF):
            for local in range(n_subjects):
                subject_id = f"sub{sidx:05d}"
                rng = _subject_rng(recipe.seed, sidx, 0)
                bpm = float(rng.uniform(recipe.bpm_min, recipe.bpm_max))
                fm_cv = recipe.af_fm_cv if rhythm is Rhythm.AF else recipe.sinus_fm_cv
                config = SimConfig(
                    bpm=bpm,
                    duration_s=recipe.duration_s,
                    fs=recipe.fs,
                    rhythm=rhythm,
                    bw_amp=recipe.bw_amp,
                    bw_freq=recipe.bw_freq,
                    am_depth=recipe.am_depth,
                    am_freq=recipe.am_freq,
                    fm_cv=fm_cv,
                    seed=recipe.seed,
                )
                rr = gen_rr(config, rng)
                clean = synth_ppg(rr, config)
                clean.meta.update(subject_id=subject_id, bpm=bpm)
                if recipe.noise_mode == "grid":
                    chosen = list(enumerate(recipe.noise_factors))
                else:
                    k = local % len(recipe.noise_factors)
                    chosen = [(k, recipe.noise_factors[k])]
                for nf_idx, nf in chosen:
                    noise_rng = _subject_rng(recipe.seed, sidx, 1 + nf_idx)
                    noisy = corrupt(clean, nf, noise_rng)
                    yield SimRecord(
                        subject_id=subject_id,
                        partition=partition,
                        rhythm=rhythm,
                        qa=qa_from_noise(nf, recipe),
                        noise_factor=nf,
                        clean=clean,
                        noisy=noisy,
                    )
                sidx += 1


def make_sim_dataset(recipe: SimRecipe) -> list:
    """Materialize the full record list for a recipe."""
    return list(iter_sim_records(recipe))
