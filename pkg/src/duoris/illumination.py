"""Panel pattern synthesis and the measurement illumination schedule.

Patterns are one-bit: each element multiplies the incident field by
element_area * gamma * exp(1j*pi*bit), i.e. a sign. An amplitude-switching
mode (bit gates the element on or off) is available as a flag. A schedule
holds 70 entries built at the band-centre frequency: 35 beams focused on a
7 x 5 grid of points at mid-depth of the imaged volume, 25 beams focused on
a 5 x 5 grid across the backward panel, and 10 random patterns of increasing
fill ratio.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from .emcore import MediumParams, VACUUM, greens, wavenumber
from .hashing import content_hash
from .scene import RisPanel, SystemLayout, element_positions

DEFAULT_GAMMA = 0.8
MAX_GREEDY_SWEEPS = 10

SCENE_FOCUS_COLS = 7  # across the volume width
SCENE_FOCUS_ROWS = 5  # down the volume height
PANEL_FOCUS_SIDE = 5
N_RANDOM = 10


@dataclass(frozen=True)
class RisPattern:
    """One-bit element states plus the scalar coefficient rule."""

    bits: np.ndarray
    element_area: float
    gamma: float = DEFAULT_GAMMA
    mode: str = "phase"

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1:
            raise ValueError("bits must be a flat vector")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("bits must be 0 or 1")
        if self.mode not in ("phase", "amplitude"):
            raise ValueError(f"unknown pattern mode {self.mode!r}")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        object.__setattr__(self, "bits", bits)

    @property
    def n_elements(self) -> int:
        return self.bits.size

    def coefficients(self) -> np.ndarray:
        """Per-element complex reflection coefficients.

        Phase mode maps bits {0, 1} to signs {+1, -1} exactly, so flipping
        every bit negates the coefficients without rounding error.
        """
        scale = self.element_area * self.gamma
        if self.mode == "phase":
            signs = 1.0 - 2.0 * self.bits.astype(float)
            return (scale * signs).astype(complex)
        return (scale * self.bits.astype(float)).astype(complex)

    def signature(self):
        return {"bits": self.bits, "element_area": self.element_area,
                "gamma": self.gamma, "mode": self.mode}


@dataclass(frozen=True)
class ScheduleEntry:
    forward: RisPattern
    backward: RisPattern
    tag: str  # "I", "II", or "III"
    focus_index: int | None = None

    def signature(self):
        return {"forward": self.forward.signature(),
                "backward": self.backward.signature(),
                "tag": self.tag, "focus_index": self.focus_index}


@dataclass(frozen=True)
class IlluminationSchedule:
    entries: tuple
    seed: int = 0
    omega: float = 0.0  # rad/s the schedule was optimized at

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def tags(self) -> list[str]:
        return [e.tag for e in self.entries]

    def signature(self):
        return {"entries": [e.signature() for e in self.entries],
                "seed": self.seed, "omega": self.omega}

    def content_hash(self) -> str:
        return content_hash(self.signature())


def field_at(panel: RisPanel, pattern: RisPattern, source, target,
             omega: float, medium: MediumParams = VACUUM) -> complex:
    """Two-hop field source -> panel -> target through one pattern."""
    if pattern.n_elements != panel.n_elements:
        raise ValueError("pattern size does not match the panel")
    pos = element_positions(panel)
    k = wavenumber(omega, medium)
    hop = greens(pos, np.asarray(target, dtype=float), omega, medium) \
        * greens(pos, np.asarray(source, dtype=float), omega, medium)
    return complex(k**2 * np.sum(pattern.coefficients() * hop))


def _pattern_terms(panel, source, target, omega, medium):
    pos = element_positions(panel)
    k = wavenumber(omega, medium)
    return k**2 * greens(pos, np.asarray(target, dtype=float), omega, medium) \
        * greens(pos, np.asarray(source, dtype=float), omega, medium)


def greedy_focus(panel: RisPanel, source, focus, omega: float,
                 gamma: float = DEFAULT_GAMMA, mode: str = "phase",
                 max_sweeps: int = MAX_GREEDY_SWEEPS,
                 medium: MediumParams = VACUUM,
                 return_history: bool = False):
    """One-bit focusing by coordinate ascent on the focal intensity.

    Starts from the all-zero pattern and sweeps the elements in index
    order, flipping a bit only when that strictly increases |field| at the
    focus. Stops after a sweep with no accepted flip, or `max_sweeps`.
    """
    focus = np.asarray(focus, dtype=float)
    if abs(np.dot(focus - panel.center, panel.normal)) < 1e-12:
        raise ValueError("focus point lies on the panel plane")
    terms = _pattern_terms(panel, source, focus, omega, medium)
    scale = panel.element_area * gamma
    if mode == "phase":
        coef = (scale, -scale)
    elif mode == "amplitude":
        coef = (0.0, scale)
    else:
        raise ValueError(f"unknown pattern mode {mode!r}")

    bits = np.zeros(panel.n_elements, dtype=np.uint8)
    total = coef[0] * terms.sum()
    history = [abs(total) ** 2]
    for _ in range(max_sweeps):
        flipped = False
        for i in range(bits.size):
            delta = (coef[1 - bits[i]] - coef[bits[i]]) * terms[i]
            candidate = total + delta
            if abs(candidate) > abs(total):
                total = candidate
                bits[i] ^= 1
                flipped = True
                history.append(abs(total) ** 2)
        if not flipped:
            break
    pattern = RisPattern(bits=bits, element_area=panel.element_area,
                         gamma=gamma, mode=mode)
    if return_history:
        return pattern, history
    return pattern


def _cophase_bits(amplitudes: np.ndarray) -> np.ndarray:
    """Sign choice aligning each term with the aggregate phase.

    Two passes: bits are chosen against the current reference phase, then
    the reference is re-derived from the new aggregate and the choice is
    repeated. Each pass can only grow the aggregate magnitude. Exact ties
    keep bit 0.
    """
    total = amplitudes.sum()
    ref = np.angle(total) if total != 0 else 0.0
    bits = np.zeros(amplitudes.size, dtype=np.uint8)
    for _ in range(2):
        bits = (np.cos(np.angle(amplitudes) - ref) < 0.0).astype(np.uint8)
        signed = amplitudes * (1.0 - 2.0 * bits.astype(float))
        total = signed.sum()
        ref = np.angle(total) if total != 0 else ref
    return bits


def backward_aggregate(layout: SystemLayout, forward_pattern: RisPattern,
                       omega: float, gamma: float = DEFAULT_GAMMA,
                       medium: MediumParams = VACUUM) -> RisPattern:
    """Backward-panel pattern co-phasing the relayed field at receiver 2.

    Each backward element's contribution is the forward-panel field arriving
    at that element (empty scene) times its hop to the receiver; bits align
    those contributions in phase.
    """
    bpos = element_positions(layout.backward)
    fpos = element_positions(layout.forward)
    k = wavenumber(omega, medium)
    # incident field at each backward element, relayed from the transmitter
    hop_tx = greens(fpos, layout.tx, omega, medium)
    g_fb = greens(fpos[:, None, :], bpos[None, :, :], omega, medium)
    incident = k**2 * (forward_pattern.coefficients() * hop_tx) @ g_fb
    amp = layout.backward.element_area * gamma * k**2 \
        * greens(bpos, layout.rx2, omega, medium) * incident
    bits = _cophase_bits(amp)
    return RisPattern(bits=bits, element_area=layout.backward.element_area,
                      gamma=gamma, mode=forward_pattern.mode)


def planewave_backward(layout: SystemLayout, omega: float,
                       gamma: float = DEFAULT_GAMMA,
                       medium: MediumParams = VACUUM) -> RisPattern:
    """Backward pattern for unfocused illumination: assume a plane wave
    arriving from the forward panel centre direction and co-phase the
    outgoing spherical hops at receiver 2."""
    bpos = element_positions(layout.backward)
    k = wavenumber(omega, medium)
    direction = layout.backward.center - layout.forward.center
    direction = direction / np.linalg.norm(direction)
    arrival = np.exp(1j * k * ((bpos - layout.backward.center) @ direction))
    amp = arrival * greens(bpos, layout.rx2, omega, medium)
    bits = _cophase_bits(amp)
    return RisPattern(bits=bits, element_area=layout.backward.element_area,
                      gamma=gamma, mode="phase")


def scene_focus_points(layout: SystemLayout) -> np.ndarray:
    """The 7 x 5 grid of focus points at mid-depth, row-major from the
    top-left as seen from the forward panel."""
    soi = layout.soi
    x_mid = soi.origin[0] + soi.size[0] / 2
    y = soi.origin[1] + (np.arange(SCENE_FOCUS_COLS) + 0.5) \
        * (soi.size[1] / SCENE_FOCUS_COLS)
    z = soi.origin[2] + soi.size[2] \
        - (np.arange(SCENE_FOCUS_ROWS) + 0.5) * (soi.size[2] / SCENE_FOCUS_ROWS)
    pts = [(x_mid, yc, zr) for zr in z for yc in y]
    return np.asarray(pts)


def panel_focus_points(layout: SystemLayout) -> np.ndarray:
    """The 5 x 5 grid of focus points across the backward panel face."""
    panel = layout.backward
    u_axis = np.cross(panel.normal, panel.up)
    side_u = panel.nx * panel.pitch
    side_v = panel.ny * panel.pitch
    us = (np.arange(PANEL_FOCUS_SIDE) + 0.5) * (side_u / PANEL_FOCUS_SIDE) \
        - side_u / 2
    vs = side_v / 2 - (np.arange(PANEL_FOCUS_SIDE) + 0.5) \
        * (side_v / PANEL_FOCUS_SIDE)
    pts = [panel.center + u * u_axis + v * panel.up for v in vs for u in us]
    return np.asarray(pts)


def scene_focus_entries(layout, omega, gamma=DEFAULT_GAMMA,
                        medium=VACUUM) -> list[ScheduleEntry]:
    entries = []
    for j, pt in enumerate(scene_focus_points(layout)):
        fwd = greedy_focus(layout.forward, layout.tx, pt, omega, gamma,
                           medium=medium)
        bwd = backward_aggregate(layout, fwd, omega, gamma, medium)
        entries.append(ScheduleEntry(forward=fwd, backward=bwd, tag="I",
                                     focus_index=j + 1))
    return entries


def panel_focus_entries(layout, omega, gamma=DEFAULT_GAMMA,
                        medium=VACUUM) -> list[ScheduleEntry]:
    entries = []
    base = SCENE_FOCUS_COLS * SCENE_FOCUS_ROWS
    for j, pt in enumerate(panel_focus_points(layout)):
        fwd = greedy_focus(layout.forward, layout.tx, pt, omega, gamma,
                           medium=medium)
        bwd = backward_aggregate(layout, fwd, omega, gamma, medium)
        entries.append(ScheduleEntry(forward=fwd, backward=bwd, tag="II",
                                     focus_index=base + j + 1))
    return entries


def random_entries(layout, omega, seed, gamma=DEFAULT_GAMMA,
                   medium=VACUUM) -> list[ScheduleEntry]:
    """Random forward patterns with fill probability t/11 for t = 1..10."""
    rng = np.random.default_rng(seed)
    bwd = planewave_backward(layout, omega, gamma, medium)
    entries = []
    for t in range(1, N_RANDOM + 1):
        p = t / (N_RANDOM + 1)
        bits = (rng.random(layout.forward.n_elements) < p).astype(np.uint8)
        fwd = RisPattern(bits=bits, element_area=layout.forward.element_area,
                         gamma=gamma, mode="phase")
        entries.append(ScheduleEntry(forward=fwd, backward=bwd, tag="III",
                                     focus_index=None))
    return entries


def build_schedule(layout: SystemLayout, seed: int, omega: float,
                   gamma: float = DEFAULT_GAMMA,
                   medium: MediumParams = VACUUM) -> IlluminationSchedule:
    """The full 70-entry schedule, optimized at the given frequency."""
    entries = scene_focus_entries(layout, omega, gamma, medium) \
        + panel_focus_entries(layout, omega, gamma, medium) \
        + random_entries(layout, omega, seed, gamma, medium)
    return IlluminationSchedule(entries=tuple(entries), seed=seed, omega=omega)


def _bits_to_b64(bits: np.ndarray) -> str:
    return base64.b64encode(np.packbits(bits).tobytes()).decode("ascii")


def _bits_from_b64(text: str, n: int) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(text), dtype=np.uint8)
    return np.unpackbits(raw)[:n].astype(np.uint8)


def _pattern_to_dict(p: RisPattern) -> dict:
    return {"bits": _bits_to_b64(p.bits), "n": int(p.n_elements),
            "element_area": p.element_area, "gamma": p.gamma, "mode": p.mode}


def _pattern_from_dict(d: dict) -> RisPattern:
    return RisPattern(bits=_bits_from_b64(d["bits"], d["n"]),
                      element_area=d["element_area"], gamma=d["gamma"],
                      mode=d["mode"])


def schedule_to_json(schedule: IlluminationSchedule) -> str:
    """Serialize a schedule; element bits are packed row-major over
    (rows, columns) and base64-encoded."""
    doc = {
        "format": "duoris-schedule",
        "version": 1,
        "seed": schedule.seed,
        "omega": schedule.omega,
        "entries": [
            {"tag": e.tag, "focus_index": e.focus_index,
             "forward": _pattern_to_dict(e.forward),
             "backward": _pattern_to_dict(e.backward)}
            for e in schedule.entries
        ],
    }
    return json.dumps(doc, indent=1)


def schedule_from_json(text: str) -> IlluminationSchedule:
    doc = json.loads(text)
    if doc.get("format") != "duoris-schedule":
        raise ValueError("not a schedule document")
    entries = tuple(
        ScheduleEntry(forward=_pattern_from_dict(e["forward"]),
                      backward=_pattern_from_dict(e["backward"]),
                      tag=e["tag"], focus_index=e["focus_index"])
        for e in doc["entries"]
    )
    return IlluminationSchedule(entries=entries, seed=doc["seed"],
                                omega=doc["omega"])
