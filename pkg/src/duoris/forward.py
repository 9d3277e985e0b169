"""Measurement simulation for the two complementary receive chains.

Receiver 1 sits on the transmitter side of the forward panel and records the
reflection path: transmitter -> forward panel -> scene cell -> receiver,
plus the static direct leak transmitter -> receiver. Receiver 2 sits behind
the backward panel and records two transmission contributions: the two-hop
relay forward panel -> backward panel (each element pair gated by a binary
line-of-sight flag through the scene), and the scatter relay forward panel
-> scene cell -> backward panel.

The per-cell inner sum over forward elements is shared between the
reflection path and the scatter relay, and is evaluated once per
(pattern, bin) for all schedule entries at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emcore import MediumParams, SourceWaveform, VACUUM, wavenumber
from .hashing import content_hash
from .illumination import IlluminationSchedule, RisPattern, ScheduleEntry
from .raymarch import segments_blocked
from .scene import SceneGrid, SystemLayout, element_positions


@dataclass(frozen=True)
class NoiseModel:
    """Circularly-symmetric Gaussian receiver noise.

    Noise power per complex sample is the empty-scene mean received power of
    that receiver scaled by 10**(-snr_db/10). The stream is counter-based
    (one draw per receiver, entry, bin), so worker scheduling cannot change
    the result.
    """

    snr_db: float
    seed: int = 0
    enabled: bool = True

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("noise seed must be non-negative")


@dataclass
class Measurement:
    """Complex spectra for both receivers, shape (n_entries, n_bins) each.

    `shadow` is the element-to-element relay component of the transmission
    spectra on its own (receiver noise included). A physical receiver only
    sees the sum; the simulator keeps this component because the shadow
    tomography stage is calibrated against it.
    """

    reflection: np.ndarray
    transmission: np.ndarray
    shadow: np.ndarray | None = None

    def __post_init__(self):
        self.reflection = np.asarray(self.reflection, dtype=complex)
        self.transmission = np.asarray(self.transmission, dtype=complex)
        if self.reflection.shape != self.transmission.shape:
            raise ValueError("receiver arrays must have matching shape")
        if self.reflection.ndim != 2:
            raise ValueError("expected (n_entries, n_bins) arrays")
        if self.shadow is not None:
            self.shadow = np.asarray(self.shadow, dtype=complex)
            if self.shadow.shape != self.reflection.shape:
                raise ValueError("shadow spectra must match receiver shape")

    @property
    def shape(self):
        return self.reflection.shape

    def psd(self) -> np.ndarray:
        return np.stack([np.abs(self.reflection) ** 2,
                         np.abs(self.transmission) ** 2])

    def copy(self) -> "Measurement":
        shadow = None if self.shadow is None else self.shadow.copy()
        return Measurement(self.reflection.copy(), self.transmission.copy(),
                           shadow)


@dataclass(frozen=True)
class PsdTensor:
    """Power spectra, shape (2 receivers, n_entries, n_bins)."""

    values: np.ndarray
    scale: str = "custom"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != 2:
            raise ValueError("power tensor must have shape (2, entries, bins)")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("power values must be finite and non-negative")
        object.__setattr__(self, "values", v)


def transmission_flag(grid: SceneGrid, a, b) -> int:
    """Binary line-of-sight flag for the segment a -> b.

    0 when the segment pierces any cell with positive contrast, else 1.
    Segments that miss the grid box entirely are unobstructed.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    blocked = segments_blocked(grid, a[None, :], b[None, :])
    return int(not blocked[0])


def transmission_flags(grid: SceneGrid, starts, ends) -> np.ndarray:
    """Vectorized `transmission_flag` over paired start/end points."""
    blocked = segments_blocked(grid, starts, ends)
    return (~blocked).astype(np.uint8)


def _spherical(dist: np.ndarray, k: float) -> np.ndarray:
    return np.exp(1j * k * dist) / (4.0 * np.pi * dist)


def _dist(a, b) -> np.ndarray:
    return np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float),
                          axis=-1)


class _CaptureWorkspace:
    """Distance tables and the pair visibility mask for one scene, shared by
    every entry and bin of a capture."""

    def __init__(self, layout: SystemLayout, scene: SceneGrid,
                 medium: MediumParams = VACUUM):
        if not np.array_equal(np.asarray(scene.counts),
                              np.asarray(layout.soi.counts)) \
                or not np.allclose(scene.origin, layout.soi.origin) \
                or not np.allclose(scene.size, layout.soi.size):
            raise ValueError("scene grid does not match the layout volume")
        self.layout = layout
        self.scene = scene
        self.medium = medium
        self.fpos = element_positions(layout.forward)
        self.bpos = element_positions(layout.backward)

        flat = scene.values.ravel()
        self.occ_idx = np.flatnonzero(flat > 0)
        self.chi = flat[self.occ_idx]
        centers = scene.cell_centers()[self.occ_idx]

        self.d_tx_f = _dist(self.fpos, layout.tx)
        self.d_rx2_b = _dist(self.bpos, layout.rx2)
        self.d_tx_rx1 = float(_dist(layout.tx, layout.rx1))
        self.d_fb = _dist(self.fpos[:, None, :], self.bpos[None, :, :])
        if self.occ_idx.size:
            self.d_nf = _dist(centers[:, None, :], self.fpos[None, :, :])
            self.d_nb = _dist(centers[:, None, :], self.bpos[None, :, :])
            self.d_n_rx1 = _dist(centers, layout.rx1)
        else:
            kf, kb = len(self.fpos), len(self.bpos)
            self.d_nf = np.empty((0, kf))
            self.d_nb = np.empty((0, kb))
            self.d_n_rx1 = np.empty(0)
        self.cell_area = scene.cell_area
        self._mu = None

    @property
    def mu(self) -> np.ndarray:
        """Pair visibility flags, shape (n_forward, n_backward)."""
        if self._mu is None:
            kf, kb = len(self.fpos), len(self.bpos)
            if self.occ_idx.size == 0:
                self._mu = np.ones((kf, kb))
            else:
                starts = np.repeat(self.fpos, kb, axis=0)
                ends = np.tile(self.bpos, (kf, 1))
                blocked = segments_blocked(self.scene, starts, ends)
                self._mu = (~blocked).astype(float).reshape(kf, kb)
        return self._mu

    def _coeff_matrix(self, patterns) -> np.ndarray:
        return np.stack([p.coefficients() for p in patterns], axis=1)

    def run(self, forward_patterns, backward_patterns,
            waveform: SourceWaveform, direct_path: bool = True,
            split_terms: bool = False):
        """Spectra for every pattern at every bin.

        Returns a dict with key 'reflection' and, when backward patterns are
        given, 'transmission' (plus 'two_hop'/'scatter_relay' when
        split_terms).
        """
        omegas = waveform.grid.omegas()
        s = waveform.values
        n_p, n_f = len(forward_patterns), len(omegas)
        ca = self._coeff_matrix(forward_patterns)
        y1 = np.zeros((n_p, n_f), dtype=complex)
        out = {"reflection": y1}
        want_transmission = backward_patterns is not None
        if want_transmission:
            cb = self._coeff_matrix(backward_patterns)
            two_hop = np.zeros((n_p, n_f), dtype=complex)
            relay = np.zeros((n_p, n_f), dtype=complex)
            mu = self.mu

        have_cells = self.occ_idx.size > 0
        for f, omega in enumerate(omegas):
            k = wavenumber(omega, self.medium)
            k2 = k * k
            t_f = k2 * _spherical(self.d_tx_f, k)  # tx -> forward elements
            weighted = ca * t_f[:, None]
            if have_cells:
                g_nf = _spherical(self.d_nf, k)
                e_all = g_nf @ weighted  # per-cell inner sum, all entries
                w1 = k2 * self.cell_area * self.chi * _spherical(self.d_n_rx1, k)
                y1[:, f] = s[f] * (w1 @ e_all)
            if direct_path:
                y1[:, f] += s[f] * _spherical(np.asarray(self.d_tx_rx1), k)
            if not want_transmission:
                continue
            w_b = k2 * _spherical(self.d_rx2_b, k)  # backward elements -> rx2
            gated = mu * _spherical(self.d_fb, k)
            inner_a = gated.T @ weighted
            two_hop[:, f] = s[f] * np.einsum("jp,jp->p", cb * w_b[:, None],
                                             inner_a)
            if have_cells:
                g_nb = _spherical(self.d_nb, k)
                w_scat = k2 * self.cell_area * self.chi
                relay_in = g_nb.T @ (w_scat[:, None] * e_all)
                relay[:, f] = s[f] * np.einsum("jp,jp->p", cb * w_b[:, None],
                                               relay_in)
        if want_transmission:
            out["transmission"] = two_hop + relay
            if split_terms:
                out["two_hop"] = two_hop
                out["scatter_relay"] = relay
        return out


def simulate_reflection(layout: SystemLayout, scene: SceneGrid,
                        pattern: RisPattern, waveform: SourceWaveform,
                        direct_path: bool = True,
                        medium: MediumParams = VACUUM) -> np.ndarray:
    """Receiver-1 spectrum for one forward pattern, shape (n_bins,)."""
    ws = _CaptureWorkspace(layout, scene, medium)
    out = ws.run([pattern], None, waveform, direct_path=direct_path)
    return out["reflection"][0]


def simulate_transmission(layout: SystemLayout, scene: SceneGrid,
                          entry: ScheduleEntry, waveform: SourceWaveform,
                          split_terms: bool = False,
                          medium: MediumParams = VACUUM):
    """Receiver-2 spectrum for one schedule entry, shape (n_bins,).

    With split_terms, returns (total, two_hop, scatter_relay).
    """
    ws = _CaptureWorkspace(layout, scene, medium)
    out = ws.run([entry.forward], [entry.backward], waveform,
                 split_terms=split_terms)
    if split_terms:
        return (out["transmission"][0], out["two_hop"][0],
                out["scatter_relay"][0])
    return out["transmission"][0]


_BASELINE_CACHE: dict[str, Measurement] = {}


def _waveform_signature(w: SourceWaveform):
    return {"center": w.grid.center_hz, "bandwidth": w.grid.bandwidth_hz,
            "bins": w.grid.n_bins, "values": w.values, "kind": w.kind}


def empty_baseline(layout: SystemLayout, schedule: IlluminationSchedule,
                   waveform: SourceWaveform,
                   medium: MediumParams = VACUUM) -> Measurement:
    """Noise-free measurement of the empty scene, cached by content."""
    key = content_hash({"layout": layout.signature(),
                        "schedule": schedule.signature(),
                        "waveform": _waveform_signature(waveform)})
    hit = _BASELINE_CACHE.get(key)
    if hit is not None:
        return hit.copy()
    ws = _CaptureWorkspace(layout, layout.soi.empty_like(), medium)
    entries = list(schedule)
    out = ws.run([e.forward for e in entries], [e.backward for e in entries],
                 waveform, split_terms=True)
    meas = Measurement(out["reflection"], out["transmission"],
                       shadow=out["two_hop"])
    _BASELINE_CACHE[key] = meas.copy()
    return meas


def apply_noise(meas: Measurement, noise: NoiseModel | None,
                reference_power: np.ndarray) -> Measurement:
    """Additive receiver noise scaled against per-receiver reference power.

    One noise realization per receiver; the shadow component, being a view
    of receiver 2, gets the same receiver-2 draw.
    """
    if noise is None or not noise.enabled:
        return meas.copy()
    n_p, n_f = meas.shape
    rng = np.random.Generator(np.random.Philox(key=noise.seed))
    z = rng.standard_normal(size=(2, n_p, n_f, 2))
    power = np.asarray(reference_power, dtype=float) * 10.0 ** (-noise.snr_db / 10.0)
    sig = np.sqrt(power / 2.0)
    n2 = sig[1] * (z[1, ..., 0] + 1j * z[1, ..., 1])
    shadow = None if meas.shadow is None else meas.shadow + n2
    return Measurement(
        meas.reflection + sig[0] * (z[0, ..., 0] + 1j * z[0, ..., 1]),
        meas.transmission + n2,
        shadow,
    )


def _scale_tag(layout: SystemLayout) -> str:
    side = layout.forward.nx
    return {16: "desk", 64: "full"}.get(side, "custom")


def capture_measurement(layout: SystemLayout, scene: SceneGrid,
                        schedule: IlluminationSchedule,
                        waveform: SourceWaveform,
                        noise: NoiseModel | None = None,
                        medium: MediumParams = VACUUM) -> Measurement:
    """Noisy complex spectra for a full schedule over one scene."""
    ws = _CaptureWorkspace(layout, scene, medium)
    entries = list(schedule)
    out = ws.run([e.forward for e in entries], [e.backward for e in entries],
                 waveform, split_terms=True)
    meas = Measurement(out["reflection"], out["transmission"],
                       shadow=out["two_hop"])
    if noise is not None and noise.enabled:
        base = empty_baseline(layout, schedule, waveform, medium)
        reference = np.mean(base.psd(), axis=(1, 2))
        meas = apply_noise(meas, noise, reference)
    return meas


def capture_psd(layout: SystemLayout, scene: SceneGrid,
                schedule: IlluminationSchedule, waveform: SourceWaveform,
                noise: NoiseModel | None = None,
                medium: MediumParams = VACUUM) -> tuple[Measurement, PsdTensor]:
    """Complex spectra plus the power tensor (2, n_entries, n_bins)."""
    meas = capture_measurement(layout, scene, schedule, waveform, noise, medium)
    return meas, PsdTensor(values=meas.psd(), scale=_scale_tag(layout))
