"""Synthetic harmonic-tone corpus so training and tests need no real audio."""

import numpy as np

from .audio_io import AudioBuffer
from .mdct import mdct_forward_fast

FUNDAMENTAL_RANGE_HZ = (110.0, 880.0)
MAX_HARMONICS = 4


def synthetic_tone(rng, sample_rate_hz, num_samples, channels=1):
    """One random tone: fundamental in 110-880 Hz, 1-4 harmonics, an
    attack/decay amplitude envelope, peak level in [0.3, 0.8]."""
    f0 = rng.uniform(*FUNDAMENTAL_RANGE_HZ)
    n_harmonics = int(rng.integers(1, MAX_HARMONICS + 1))
    t = np.arange(num_samples) / sample_rate_hz
    wave = np.zeros(num_samples)
    nyquist = sample_rate_hz / 2.0
    for h in range(n_harmonics):
        freq = f0 * (h + 1)
        if freq >= nyquist:
            break
        amp = rng.uniform(0.3, 1.0) / (h + 1)
        wave += amp * np.sin(2.0 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))

    attack = max(1, int(rng.uniform(0.02, 0.2) * num_samples))
    decay = rng.uniform(0.5, 4.0)
    envelope = np.minimum(np.arange(num_samples) / attack, 1.0)
    envelope *= np.exp(-decay * t / t[-1])
    wave *= envelope

    peak = np.max(np.abs(wave))
    if peak > 0:
        wave *= rng.uniform(0.3, 0.8) / peak
    samples = np.repeat(wave[:, np.newaxis], channels, axis=1)
    return AudioBuffer(samples, sample_rate_hz)


def synthetic_tone_dataset(rng, count, sample_rate_hz, num_blocks, band_count,
                           channels=1):
    """`count` MDCT tensors of shape (num_blocks, band_count, channels)."""
    num_samples = num_blocks * band_count
    return [
        mdct_forward_fast(
            synthetic_tone(rng, sample_rate_hz, num_samples, channels), band_count
        )
        for _ in range(count)
    ]
