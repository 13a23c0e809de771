"""Length and power spectra of swept transmission amplitudes.

The length spectrum is the windowed transform t(L) = sum_k t(k) e^{-ikL} dk
taken as a plain Riemann sum on the uniform physical-k grid (no 2/pi
normalization), so peak heights are convention-dependent but positions are
not. Peaks sit at geometric path lengths; the Fourier-limited resolution is
2*pi over the k-window width, and zero-padding only interpolates between
those independent bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.signal import find_peaks

from .scattering import SweepResult

Array = NDArray[np.float64]
CArray = NDArray[np.complex128]

GRID_RTOL = 1e-9


@dataclass(frozen=True)
class SpectrumSeries:
    """Uniform t_nm(k) samples over a window, ready for the transform."""

    k_window: tuple[float, float]  # pi/w units
    lead_width: float
    k: Array  # physical wave numbers, uniform ascending
    samples: CArray  # (n_k, n_modes, n_modes)

    @property
    def n_modes(self) -> int:
        return self.samples.shape[1]

    @property
    def resolution(self) -> float:
        """Fourier-limited length resolution 2*pi/(k_max - k_min)."""
        return 2.0 * math.pi / (self.k[-1] - self.k[0])


def uniform_series(
    result: SweepResult, window: tuple[float, float], n_modes: int
) -> SpectrumSeries:
    """Extract uniform t_nm(k) samples from a sweep, filling skipped points.

    `window` is in units pi/w like the sweep grid. Every computed point in
    the window must have at least `n_modes` channels open; skipped points
    are filled by linear interpolation per matrix entry.
    """
    lo, hi = window
    if not lo < hi:
        raise ValueError(f"empty window {window}")
    if n_modes < 1:
        raise ValueError("n_modes must be at least 1")
    scale = math.pi / result.lead_width
    mask = (result.k_requested >= lo - GRID_RTOL) & (
        result.k_requested <= hi + GRID_RTOL
    )
    grid = result.k_requested[mask]
    if grid.size < 8:
        raise ValueError(f"window {window} covers only {grid.size} sweep points")
    steps = np.diff(grid)
    if np.max(steps) - np.min(steps) > GRID_RTOL * max(abs(lo), abs(hi)):
        raise ValueError("sweep grid is not uniform inside the window")

    kept = {}
    for i, k_val in enumerate(result.k):
        if lo - GRID_RTOL <= k_val <= hi + GRID_RTOL:
            if result.n_open[i] < n_modes:
                raise ValueError(
                    f"only {result.n_open[i]} channels open at k={k_val:.6g}, "
                    f"need {n_modes}"
                )
            kept[float(k_val)] = result.t_blocks[i][:n_modes, :n_modes]
    if not kept:
        raise ValueError("no computed sweep points inside the window")
    kept_k = np.asarray(sorted(kept))
    kept_t = np.stack([kept[k_val] for k_val in kept_k])

    samples = np.empty((grid.size, n_modes, n_modes), dtype=complex)
    for a in range(n_modes):
        for b in range(n_modes):
            col = kept_t[:, a, b]
            samples[:, a, b] = np.interp(grid, kept_k, col.real) + 1j * np.interp(
                grid, kept_k, col.imag
            )
    return SpectrumSeries(
        k_window=(float(lo), float(hi)),
        lead_width=result.lead_width,
        k=grid * scale,
        samples=samples,
    )


def length_spectrum(
    series: SpectrumSeries, pad_factor: int = 8, hann: bool = False
) -> tuple[Array, CArray]:
    """Transform samples to t_nm(L) on L_j = 2*pi*j/(n_pad*dk), j >= 0.

    Zero-padding by `pad_factor` refines the L readout without adding
    information; the optional Hann taper trades resolution for sidelobes.
    """
    if pad_factor < 1:
        raise ValueError("pad_factor must be >= 1")
    k = series.k
    if k.size < 2:
        raise ValueError("need at least two samples")
    steps = np.diff(k)
    dk = float(steps[0])
    if np.max(steps) - np.min(steps) > GRID_RTOL * abs(k[-1]):
        raise ValueError("sample grid is not uniform")
    samples = series.samples
    if hann:
        samples = samples * np.hanning(k.size)[:, None, None]
    n_pad = pad_factor * k.size
    transform = np.fft.fft(samples, n=n_pad, axis=0)
    lengths = 2.0 * math.pi * np.arange(n_pad) / (n_pad * dk)
    phase = np.exp(-1j * k[0] * lengths)
    return lengths, dk * phase[:, None, None] * transform


def power_spectrum(
    series: SpectrumSeries, pad_factor: int = 8, hann: bool = False
) -> tuple[Array, Array]:
    """P(L) = sum over the retained n, m of |t_nm(L)|^2."""
    lengths, amplitudes = length_spectrum(series, pad_factor=pad_factor, hann=hann)
    return lengths, np.sum(np.abs(amplitudes) ** 2, axis=(1, 2))


def peak_positions(
    lengths: Array,
    values: Array,
    band: tuple[float, float] | None = None,
    min_prominence: float = 0.1,
) -> Array:
    """Peak locations inside `band`, strongest prominence first.

    `min_prominence` is relative to the largest value inside the band.
    """
    lengths = np.asarray(lengths, dtype=float)
    values = np.asarray(values, dtype=float)
    if band is None:
        mask = np.ones(lengths.size, dtype=bool)
    else:
        mask = (lengths >= band[0]) & (lengths <= band[1])
    if not np.any(mask):
        return np.empty(0)
    sub_l = lengths[mask]
    sub_v = values[mask]
    idx, props = find_peaks(sub_v, prominence=min_prominence * np.max(sub_v))
    order = np.argsort(props["prominences"])[::-1]
    return sub_l[idx[order]]


def write_amplitude_csv(path, lengths: Array, amplitude: CArray, header_lines=()):
    """One t_nm(L) series: columns L, Re, Im, modulus."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("L,re_t,im_t,abs_t\n")
        for l_val, amp in zip(lengths, amplitude):
            fh.write(
                f"{l_val:.12g},{amp.real:.12g},{amp.imag:.12g},{abs(amp):.12g}\n"
            )


def write_power_csv(path, lengths: Array, power: Array, header_lines=()):
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("L,P\n")
        for l_val, p_val in zip(lengths, power):
            fh.write(f"{l_val:.12g},{p_val:.12g}\n")
