"""Spectrogram rendering, tonality reporting and octave folding.

Images are 8-bit binary PGM (P5) with time on the x-axis and band 0 at the
bottom. Intensities are shown on a dB scale clipped `db_floor` dB below the
maximum.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import IoError, ShapeError
from .psycho import tonality

DEFAULT_DB_FLOOR = -100.0


@dataclass
class Spectrogram:
    """Squared amplitudes (blocks M, bands N, channels C), all >= 0."""

    values: np.ndarray
    sample_rate_hz: int
    db_floor: float = DEFAULT_DB_FLOOR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, np.newaxis]
        if values.ndim != 3:
            raise ShapeError("values must have shape (blocks, bands[, channels])")
        if np.any(values < 0):
            raise ValueError("spectrogram values must be non-negative")
        self.values = values

    @property
    def num_blocks(self):
        return self.values.shape[0]

    @property
    def band_count(self):
        return self.values.shape[1]


@dataclass
class ReducedSpectrogram:
    """Original grid plus one channel-summed grid per fold."""

    levels: list = field(default_factory=list)
    fold_count: int = 0


def spectrogram(tensor):
    """Per-channel squared amplitudes of an MDCT tensor."""
    return Spectrogram(tensor.amplitudes ** 2, tensor.sample_rate_hz)


def write_pgm(pixels, path):
    """Write a 2-D uint8 array as binary PGM (P5), row 0 at the top."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    if pixels.ndim != 2:
        raise ShapeError("PGM pixels must be 2-D")
    height, width = pixels.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
            fh.write(pixels.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def db_pixels(values, db_floor=DEFAULT_DB_FLOOR):
    """Map non-negative values onto [0, 255] over [max_dB + db_floor, max_dB].

    values is (M, N); output is (N, M) with band 0 in the last row.
    An all-zero input maps to all-zero pixels.
    """
    values = np.asarray(values, dtype=np.float64)
    peak = values.max(initial=0.0)
    if peak <= 0.0:
        return np.zeros((values.shape[1], values.shape[0]), dtype=np.uint8)
    floor = peak * 10.0 ** (db_floor / 10.0)
    level_db = 10.0 * np.log10(np.maximum(values, floor))
    top = 10.0 * np.log10(peak)
    scaled = (level_db - (top + db_floor)) / -db_floor
    pixels = np.round(255.0 * np.clip(scaled, 0.0, 1.0)).astype(np.uint8)
    return pixels.T[::-1]


def to_db_image(spec, path):
    """Render the channel-averaged power grid as a dB-scale PGM."""
    write_pgm(db_pixels(spec.values.mean(axis=2), spec.db_floor), path)


def signed_db_pixels(amplitudes, db_floor=DEFAULT_DB_FLOOR):
    """Map signed amplitudes around mid-gray 128.

    The offset from 128 grows with the dB magnitude of |A| above the floor
    and the sign selects the side, so negating the input reflects the image
    about mid-gray (pixel -> 256 - pixel).
    """
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    magnitude = np.abs(amplitudes)
    peak = magnitude.max(initial=0.0)
    if peak <= 0.0:
        return np.full((amplitudes.shape[1], amplitudes.shape[0]), 128, dtype=np.uint8)
    floor = peak * 10.0 ** (db_floor / 20.0)
    level_db = 20.0 * np.log10(np.maximum(magnitude, floor))
    top = 20.0 * np.log10(peak)
    scaled = np.clip((level_db - (top + db_floor)) / -db_floor, 0.0, 1.0)
    offset = np.round(127.0 * scaled) * np.sign(amplitudes)
    pixels = (128 + offset).astype(np.uint8)
    return pixels.T[::-1]


def signed_db_image(tensor, path, db_floor=DEFAULT_DB_FLOOR):
    """Render channel 0 signed amplitudes as a PGM around mid-gray."""
    write_pgm(signed_db_pixels(tensor.amplitudes[:, :, 0], db_floor), path)


def blur_time(values):
    """Average adjacent block pairs: (M, N, ...) -> (M/2, N, ...)."""
    if values.shape[0] % 2:
        raise ShapeError("block count must be even to blur the time axis")
    return 0.5 * (values[0::2] + values[1::2])


def fold_frequency(values):
    """Fold the top half of the bands onto the second quarter.

    out[k] = in[k] for k < N/4, and in[k] + in[2k] + in[2k+1] for
    N/4 <= k < N/2. Linear and energy conserving; a component at frequency f
    in the top half lands in the same output band as one at f/2.
    """
    bands = values.shape[1]
    if bands % 4:
        raise ShapeError("band count must be divisible by 4 to fold")
    quarter = bands // 4
    out = values[:, :2 * quarter].copy()
    top = values[:, 2 * quarter:]
    out[:, quarter:] += top[:, 0::2] + top[:, 1::2]
    return out


def reduce_spectrogram(spec, folds):
    """Repeatedly blur the time axis (x2) and fold the top octave.

    Both axes halve per fold; level 0 is the input grid.
    """
    folds = int(folds)
    if folds < 0:
        raise ValueError("folds must be non-negative")
    values = spec.values
    if spec.num_blocks % (2 ** folds) or spec.band_count % (2 ** folds):
        raise ShapeError(
            f"grid {spec.num_blocks}x{spec.band_count} is not divisible by 2^{folds}"
        )
    levels = [values]
    for _ in range(folds):
        values = fold_frequency(blur_time(values))
        levels.append(values)
    return ReducedSpectrogram(levels, folds)


def tonality_series(tensor):
    """Channel-averaged per-block tonality tau(m)."""
    amps = np.moveaxis(tensor.amplitudes, 2, 0)   # (C, M, N)
    return tonality(amps).mean(axis=0)


def mean_tonality(tensor):
    """Scalar tonality: the per-block series averaged over blocks."""
    return float(tonality_series(tensor).mean())


def write_tonality_csv(tensor, path):
    """CSV rows (block_index, time_seconds, tau)."""
    series = tonality_series(tensor)
    block_seconds = tensor.band_count / tensor.sample_rate_hz
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["block_index", "time_seconds", "tau"])
        for m, tau in enumerate(series):
            writer.writerow([m, f"{m * block_seconds:.6f}", f"{tau:.9f}"])
