"""Hearing thresholds, masking, tonality and the quantization-noise layer.

Intensities live in signal units: a full-scale amplitude of 1.0 in a single
band corresponds to `db_reference` dB SPL (96 by default), so absolute
thresholds from the hearing-threshold curve are directly comparable to band
energies of [-1, 1] audio.

Masking is computed on the critical-band (Bark) scale. Band energies spread
to neighbours through the classic spreading curve
15.81 + 7.5(dz + 0.474) - 17.5*sqrt(1 + (dz + 0.474)^2) dB with
dz = maskee - masker, combined with a non-linear superposition exponent
alpha, and reduced by the tonality-dependent offset
O_j = tau*(14.5 + j) + (1 - tau)*5.5.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .mdct import MdctTensor, band_center_hz

# Zwicker critical-band boundaries (Hz). Clipped to Nyquist at partition time.
ZWICKER_EDGES_HZ = (
    0, 100, 200, 300, 400, 510, 630, 770, 920, 1080, 1270, 1480, 1720,
    2000, 2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700, 9500, 12000, 15500,
)

DEFAULT_ALPHA = 0.3
DEFAULT_DB_REFERENCE = 96.0
AMPLITUDE_FLOOR = 1e-12


@dataclass
class BarkPartition:
    """Assignment of MDCT bins to critical bands.

    band_edges_hz has J+1 ascending entries starting at 0 and ending at
    Nyquist; bin_to_band maps each of the N bins (by center frequency) to
    one of the J contiguous bands; band_mid_hz is the midpoint of each band.
    """

    band_edges_hz: np.ndarray
    bin_to_band: np.ndarray
    band_mid_hz: np.ndarray
    sample_rate_hz: int

    @property
    def band_count(self):
        return len(self.band_mid_hz)

    @property
    def bin_count(self):
        return len(self.bin_to_band)

    def pooling_matrix(self):
        """(N, J) 0/1 matrix summing per-bin values into bands."""
        w = np.zeros((self.bin_count, self.band_count))
        w[np.arange(self.bin_count), self.bin_to_band] = 1.0
        return w


def bark_partition(sample_rate_hz, band_count):
    """Partition `band_count` MDCT bins at `sample_rate_hz` into Bark bands.

    Table edges at or above Nyquist are dropped; the remaining range up to
    Nyquist forms the final band. Bins are assigned by center frequency.
    """
    nyquist = sample_rate_hz / 2.0
    edges = [e for e in ZWICKER_EDGES_HZ if e < nyquist]
    edges.append(nyquist)
    edges = np.asarray(edges, dtype=np.float64)

    centers = band_center_hz(sample_rate_hz, band_count)
    bin_to_band = np.searchsorted(edges, centers, side="right") - 1
    bin_to_band = np.clip(bin_to_band, 0, len(edges) - 2)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return BarkPartition(edges, bin_to_band.astype(np.intp), mids, int(sample_rate_hz))


def absolute_threshold_db(freq_hz):
    """Hearing threshold in dB SPL at freq_hz (scalar or array).

    3.64 f^-0.8 - 6.5 exp(-0.6 (f - 3.3)^2) + 1e-3 f^4 with f in kHz.
    """
    f = np.asarray(freq_hz, dtype=np.float64) / 1000.0
    return 3.64 * f ** -0.8 - 6.5 * np.exp(-0.6 * (f - 3.3) ** 2) + 1e-3 * f ** 4


def absolute_threshold(partition, db_reference=DEFAULT_DB_REFERENCE):
    """Per-band absolute threshold as signal-unit intensity."""
    level_db = absolute_threshold_db(partition.band_mid_hz)
    return 10.0 ** ((level_db - db_reference) / 10.0)


def tonality(block_amplitudes):
    """Tonality tau in [0, 1] from the flatness of the power spectrum.

    tau = min(1, 10/(-60 dB) * log10(gmean(A^2) / amean(A^2))) on magnitudes
    floored at 1e-12, then clamped at 0. Flat spectra (and all-zero blocks)
    give 0, a single occupied bin gives 1. Leading axes are preserved.
    """
    power = np.maximum(np.abs(np.asarray(block_amplitudes, dtype=np.float64)),
                       AMPLITUDE_FLOOR) ** 2
    # both means in the log10 domain so a flat spectrum cancels exactly
    log_gmean = np.mean(np.log10(power), axis=-1)
    flatness_db = 10.0 * (log_gmean - np.log10(np.mean(power, axis=-1)))
    return np.clip(flatness_db / -60.0, 0.0, 1.0)


def spreading_gain_db(delta_bands):
    """Masking gain in dB at a maskee `delta_bands` above the masker."""
    u = np.asarray(delta_bands, dtype=np.float64) + 0.474
    return 15.81 + 7.5 * u - 17.5 * np.sqrt(1.0 + u * u)


def _spreading_matrix(band_count, alpha):
    """(J, J) matrix of 10^(alpha/10 * gain(masker i -> maskee j))."""
    i = np.arange(band_count)[:, np.newaxis]
    j = np.arange(band_count)[np.newaxis, :]
    return 10.0 ** (alpha / 10.0 * spreading_gain_db(j - i))


def band_energies(block_amplitudes, partition):
    """Sum of squared amplitudes per Bark band. Leading axes preserved."""
    amps = np.asarray(block_amplitudes, dtype=np.float64)
    return (amps * amps) @ partition.pooling_matrix()


def masking_threshold(block_amplitudes, partition, alpha=DEFAULT_ALPHA):
    """Per-band masking intensity I_mask,j for one or more spectra.

    I_mask,j = (sum_i E_i^alpha 10^(alpha/10 (f(j-i) - O_j)))^(1/alpha) with
    band energies E, spreading f and tonality-dependent offset O. Input may
    have leading axes before the bin axis; output replaces bins with bands.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    energies = band_energies(block_amplitudes, partition)
    tau = tonality(block_amplitudes)[..., np.newaxis]
    offset_db = tau * (14.5 + np.arange(partition.band_count)) + (1.0 - tau) * 5.5
    spread = energies ** alpha @ _spreading_matrix(partition.band_count, alpha)
    return (spread * 10.0 ** (-alpha / 10.0 * offset_db)) ** (1.0 / alpha)


@dataclass
class MaskingThresholds:
    """Per-block hearing thresholds of an amplitude tensor.

    absolute: (J,) intensities; mask and combined: (M, J, C);
    tonality_per_block: (M, C) values in [0, 1].
    """

    absolute: np.ndarray
    mask: np.ndarray
    combined: np.ndarray
    tonality_per_block: np.ndarray


def compute_thresholds(tensor, partition=None, alpha=DEFAULT_ALPHA,
                       db_reference=DEFAULT_DB_REFERENCE):
    """Absolute, masking and combined thresholds for every block/channel."""
    if partition is None:
        partition = bark_partition(tensor.sample_rate_hz, tensor.band_count)
    amps = np.moveaxis(tensor.amplitudes, 2, 0)          # (C, M, N)
    mask = np.moveaxis(masking_threshold(amps, partition, alpha), 0, 2)
    tau = np.moveaxis(tonality(amps), 0, 1)
    absolute = absolute_threshold(partition, db_reference)
    combined = np.maximum(mask, absolute[np.newaxis, :, np.newaxis])
    return MaskingThresholds(absolute, mask, combined, tau)


def quantization_step(combined, partition):
    """Per-bin amplitude step: sqrt of the band intensity, broadcast to bins.

    combined may be (J,) or (M, J, C); the band axis is expanded to bins.
    """
    combined = np.asarray(combined, dtype=np.float64)
    steps = np.sqrt(combined)
    if steps.ndim == 1:
        return steps[partition.bin_to_band]
    if steps.ndim == 3:
        return steps[:, partition.bin_to_band, :]
    raise ValueError("combined must have shape (J,) or (M, J, C)")


def quantize(amplitudes, step):
    """Round amplitudes to integer multiples of step; zero step is identity."""
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    step = np.broadcast_to(np.asarray(step, dtype=np.float64), amplitudes.shape)
    out = amplitudes.copy()
    nz = step > 0
    out[nz] = np.round(amplitudes[nz] / step[nz]) * step[nz]
    return out


def psychoacoustic_noise(tensor, scale=1.0, rng_seed=0, partition=None,
                         alpha=DEFAULT_ALPHA, db_reference=DEFAULT_DB_REFERENCE):
    """Add zero-mean gaussian noise with std scale * step / 2 per bin.

    The step is the psychoacoustic quantization step of the input tensor's
    own thresholds, so the noise is inaudible at scale = 1. Deterministic
    given rng_seed; scale = 0 returns the input unchanged.
    """
    if scale < 0:
        raise ValueError("scale must be non-negative")
    if scale == 0.0:
        return MdctTensor(tensor.amplitudes.copy(), tensor.sample_rate_hz)
    sigma = scale * 0.5 * noise_step(tensor, partition, alpha, db_reference)
    rng = np.random.default_rng(rng_seed)
    eta = rng.standard_normal(tensor.amplitudes.shape) * sigma
    return MdctTensor(tensor.amplitudes + eta, tensor.sample_rate_hz)


def noise_step(tensor, partition=None, alpha=DEFAULT_ALPHA,
               db_reference=DEFAULT_DB_REFERENCE):
    """Per-bin quantization step (M, N, C) of the tensor's own thresholds."""
    if partition is None:
        partition = bark_partition(tensor.sample_rate_hz, tensor.band_count)
    thresholds = compute_thresholds(tensor, partition, alpha, db_reference)
    return quantization_step(thresholds.combined, partition)


def write_thresholds_csv(tensor, path, partition=None, alpha=DEFAULT_ALPHA,
                         db_reference=DEFAULT_DB_REFERENCE):
    """Dump per-block per-band thresholds (channel-averaged) as CSV."""
    if partition is None:
        partition = bark_partition(tensor.sample_rate_hz, tensor.band_count)
    thr = compute_thresholds(tensor, partition, alpha, db_reference)
    mask = thr.mask.mean(axis=2)
    combined = thr.combined.mean(axis=2)
    tau = thr.tonality_per_block.mean(axis=1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block", "bark_band", "I_abs", "I_mask", "combined", "tau"])
        for m in range(tensor.num_blocks):
            for j in range(partition.band_count):
                writer.writerow([
                    m, j,
                    f"{thr.absolute[j]:.12e}",
                    f"{mask[m, j]:.12e}",
                    f"{combined[m, j]:.12e}",
                    f"{tau[m]:.9f}",
                ])
