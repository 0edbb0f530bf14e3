"""Range-Doppler processing: raw FMCW samples to time-range-Doppler cubes.

Cubes are plain ``float64`` arrays of shape ``(T, M, N)`` (frame, range bin,
Doppler bin) holding ``log(1 + |X|)``. Zero Doppler sits at bin ``N // 2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .radar_sim import RawSignal


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int) -> np.ndarray:
    tw = np.exp(-2j * np.pi * np.arange(size // 2) / size)
    tw.setflags(write=False)
    return tw


def fft(x, axis: int = -1) -> np.ndarray:
    """Forward unnormalized DFT along ``axis`` (iterative radix-2 Cooley-Tukey).

    ``X[k] = sum_n x[n] exp(-2j pi k n / L)``. Any leading/trailing axes are
    treated as a batch, so a whole cube of chirps is transformed in one call.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 0:
        raise ValueError("fft needs at least one dimension")
    n = x.shape[axis]
    if not is_power_of_two(n):
        raise ValueError(f"fft length must be a power of two, got {n}")
    a = np.moveaxis(x, axis, -1)
    lead = a.shape[:-1]
    a = a[..., _bit_reversal(n)]
    size = 2
    while size <= n:
        half = size // 2
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(size)
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return np.moveaxis(a, -1, axis)


def ifft(x, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`fft` via the conjugation identity."""
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x), axis=axis)) / x.shape[axis]


def naive_dft(x) -> np.ndarray:
    """O(L^2) reference DFT of a 1D sequence; kept for oracle checks."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def slice_and_frame(raw: "RawSignal") -> np.ndarray:
    """Rearrange the flat sample stream into a ``(T, N, M)`` chirp tensor.

    Element ``[t, p, m]`` is ``samples[(t * N + p) * M + m]``.
    """
    p = raw.params
    samples = np.asarray(raw.samples)
    expected = p.samples_per_chirp * p.chirps_per_frame * p.frames
    if samples.ndim != 1 or samples.shape[0] != expected:
        raise ValueError(
            f"raw signal has {samples.size} samples, expected M*N*T = {expected}")
    return samples.reshape(p.frames, p.chirps_per_frame, p.samples_per_chirp)


def clutter_filter(frames: np.ndarray, enabled: bool = True) -> np.ndarray:
    """Remove the per-frame mean chirp (static returns). Identity when disabled."""
    if not enabled:
        return frames
    return frames - frames.mean(axis=1, keepdims=True)


@dataclass(frozen=True)
class RdpOptions:
    window: bool = True
    clutter_filter: bool = False
    doppler_shift: bool = True


def _window(n: int, enabled: bool) -> np.ndarray:
    return np.hamming(n) if enabled else np.ones(n)


def range_doppler_magnitude(raw: "RawSignal", options: RdpOptions = RdpOptions()) -> np.ndarray:
    """``|X|`` for every frame's range-Doppler map, shape ``(T, M, N)``."""
    frames = clutter_filter(slice_and_frame(raw), options.clutter_filter)
    _, n_chirps, m_samples = frames.shape
    rng = fft(frames * _window(m_samples, options.window), axis=-1)
    # (T, N, M) -> (T, M, N): Doppler FFT runs over the chirps of each range bin
    rng = np.swapaxes(rng, 1, 2)
    rd = fft(rng * _window(n_chirps, options.window), axis=-1)
    if options.doppler_shift:
        rd = np.roll(rd, n_chirps // 2, axis=-1)
    return np.abs(rd)


def range_doppler_process(raw: "RawSignal", options: RdpOptions = RdpOptions()) -> np.ndarray:
    """Raw signal to TRD cube ``log(1 + |X|)`` of shape ``(T, M, N)``."""
    return np.log1p(range_doppler_magnitude(raw, options))


def spectrogram(raw: "RawSignal", stft_window: int, hop: int, window: bool = True) -> np.ndarray:
    """Range-summed micro-Doppler spectrogram, shape ``(n_columns, stft_window)``.

    Each chirp is range-FFT'd; for every range bin an STFT runs over slow time
    (all chirps of the recording in order); magnitudes are summed over range
    bins and log-compressed. Zero Doppler is centred at ``stft_window // 2``.
    """
    if not is_power_of_two(stft_window):
        raise ValueError(f"stft_window must be a power of two, got {stft_window}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    frames = slice_and_frame(raw)
    m_samples = frames.shape[-1]
    chirps = frames.reshape(-1, m_samples)
    slow_len = chirps.shape[0]
    if stft_window > slow_len:
        raise ValueError(
            f"stft_window {stft_window} longer than slow-time axis {slow_len}")
    rng = fft(chirps * _window(m_samples, window), axis=-1).T  # (M, slow)
    starts = np.arange(0, slow_len - stft_window + 1, hop)
    segments = rng[:, starts[:, None] + np.arange(stft_window)]  # (M, F, W)
    spec = fft(segments * _window(stft_window, window), axis=-1)
    spec = np.roll(spec, stft_window // 2, axis=-1)
    return np.log1p(np.abs(spec).sum(axis=0))


def crop_offsets(frames: int, crop_len: int, crop_count: int) -> list[int]:
    if crop_count < 1:
        raise ValueError("crop_count must be >= 1")
    if crop_len < 1 or crop_len > frames:
        raise ValueError(f"crop_len {crop_len} does not fit in {frames} frames")
    if crop_count == 1:
        return [0]
    span = frames - crop_len
    return [(i * span) // (crop_count - 1) for i in range(crop_count)]


def crop_cube(cube: np.ndarray, crop_len: int, crop_count: int) -> list[np.ndarray]:
    """Evenly spaced contiguous crops along the time axis."""
    return [cube[s:s + crop_len] for s in crop_offsets(cube.shape[0], crop_len, crop_count)]
