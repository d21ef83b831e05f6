"""Synthetic-PPG atrial fibrillation toolkit.

Simulates labeled PPG waveforms, preprocesses them into unit-interval
windows, pretrains a convolutional denoising autoencoder, fine-tunes a
multi-task rhythm/quality classifier from its encoder, and evaluates
against a hand-crafted-feature random forest baseline.
"""

__version__ = "0.1.0"
