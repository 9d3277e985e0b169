"""Free-space electromagnetic primitives: medium constants, frequency grids,
the scalar Green's function, and source spectra."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# CODATA 2018 vacuum constants.
VACUUM_PERMITTIVITY = 8.8541878128e-12  # F/m
VACUUM_PERMEABILITY = 1.25663706212e-6  # H/m


@dataclass(frozen=True)
class MediumParams:
    """Homogeneous background medium. Defaults are vacuum."""

    permittivity: float = VACUUM_PERMITTIVITY
    permeability: float = VACUUM_PERMEABILITY

    def speed(self) -> float:
        """Propagation speed 1/sqrt(mu*eps) in m/s."""
        return 1.0 / np.sqrt(self.permeability * self.permittivity)


VACUUM = MediumParams()


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform sampling of a band [center - B/2, center + B/2].

    Band edges are included; a single-bin grid collapses to the center
    frequency.
    """

    center_hz: float = 5.8e9
    bandwidth_hz: float = 1.6e8
    n_bins: int = 128

    def __post_init__(self):
        if self.center_hz <= 0:
            raise ValueError("center frequency must be positive")
        if self.bandwidth_hz < 0:
            raise ValueError("bandwidth must be non-negative")
        if self.n_bins < 1:
            raise ValueError("need at least one frequency bin")
        if self.bandwidth_hz / 2 >= self.center_hz:
            raise ValueError("band extends to non-positive frequencies")

    def frequencies(self) -> np.ndarray:
        if self.n_bins == 1:
            return np.array([self.center_hz])
        lo = self.center_hz - self.bandwidth_hz / 2
        hi = self.center_hz + self.bandwidth_hz / 2
        return np.linspace(lo, hi, self.n_bins)

    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * self.frequencies()

    def center_omega(self) -> float:
        return 2.0 * np.pi * self.center_hz


def wavenumber(omega, medium: MediumParams = VACUUM):
    """Background wavenumber omega*sqrt(mu*eps) in rad/m."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega <= 0):
        raise ValueError("angular frequency must be positive")
    k = omega * np.sqrt(medium.permeability * medium.permittivity)
    return float(k) if k.ndim == 0 else k


def greens(r, rp, omega, medium: MediumParams = VACUUM):
    """Scalar free-space Green's function between two points.

    Parameters
    ----------
    r, rp : array_like, shape (..., 3)
        Observation and source positions in metres. Leading axes broadcast.
    omega : float
        Angular frequency in rad/s.

    Returns
    -------
    complex or ndarray
        exp(1j*k*d) / (4*pi*d) with d = |r - rp|.
    """
    r = np.asarray(r, dtype=float)
    rp = np.asarray(rp, dtype=float)
    d = np.linalg.norm(r - rp, axis=-1)
    if np.any(d == 0.0):
        raise ValueError("Green's function is singular at coincident points")
    k = wavenumber(omega, medium)
    g = np.exp(1j * k * d) / (4.0 * np.pi * d)
    return complex(g) if np.ndim(g) == 0 else g


@dataclass(frozen=True)
class SourceWaveform:
    """Transmit spectrum sampled on a frequency grid."""

    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)
    kind: str = "flat"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n_bins,):
            raise ValueError("spectrum length must match the frequency grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectrum contains non-finite samples")
        if np.sum(np.abs(v) ** 2) <= 0:
            raise ValueError("source spectrum has no energy")
        object.__setattr__(self, "values", v)


def flat_spectrum(grid: FrequencyGrid, amplitude: float = 1.0) -> SourceWaveform:
    """Constant real spectrum: amplitude at every bin, zero phase."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    vals = np.full(grid.n_bins, amplitude, dtype=complex)
    return SourceWaveform(grid=grid, values=vals, kind="flat")


def lfm_spectrum(grid: FrequencyGrid, amplitude: float = 1.0) -> SourceWaveform:
    """Linear-FM source spectrum: flat magnitude, quadratic spectral phase.

    The phase is quadratic in the bin index about the band centre,
    phi_b = -pi*(b - (n-1)/2)**2 / n, so its second difference is the
    constant -2*pi/n. Magnitude equals `amplitude` at every bin.
    """
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    n = grid.n_bins
    b = np.arange(n, dtype=float)
    phase = -np.pi * (b - (n - 1) / 2.0) ** 2 / n
    vals = amplitude * np.exp(1j * phase)
    return SourceWaveform(grid=grid, values=vals, kind="lfm")
