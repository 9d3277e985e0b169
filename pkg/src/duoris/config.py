"""JSON run configuration with desk and full scale profiles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .emcore import FrequencyGrid, SourceWaveform, flat_spectrum, lfm_spectrum
from .hashing import content_hash
from .illumination import DEFAULT_GAMMA, IlluminationSchedule, build_schedule
from .forward import NoiseModel
from .scene import PANEL_SIDE, RisPanel, SceneGrid, SystemLayout, SOI_ORIGIN, \
    SOI_SIZE, default_layout

CENTER_HZ = 5.8e9
BANDWIDTH_HZ = 1.6e8

PROFILES = {
    "desk": {"n_bins": 128, "n_side": 16, "counts": (10, 20, 20),
             "image": (96, 80)},
    "full": {"n_bins": 8192, "n_side": 64, "counts": (20, 40, 40),
             "image": (1080, 980)},
}

_TOP_KEYS = {"scale_profile", "frequency", "panels", "soi", "schedule_seed",
             "noise", "gamma", "direct_path", "image", "waveform"}


class ConfigError(ValueError):
    """Invalid run configuration."""


def _require(cond, message):
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class Config:
    """Validated run configuration; see `load_config` for the JSON schema."""

    scale_profile: str
    center_hz: float
    bandwidth_hz: float
    n_bins: int
    n_side: int
    panel_side_m: float
    soi_counts: tuple[int, int, int]
    schedule_seed: int
    noise_enabled: bool
    snr_db: float
    noise_seed: int
    gamma: float
    direct_path: bool
    image_height: int
    image_width: int
    waveform_kind: str

    def layout(self) -> SystemLayout:
        base = default_layout("desk" if self.scale_profile == "desk" else "full")
        pitch = self.panel_side_m / self.n_side
        forward = RisPanel(center=base.forward.center, normal=base.forward.normal,
                           up=base.forward.up, nx=self.n_side, ny=self.n_side,
                           pitch=pitch)
        backward = RisPanel(center=base.backward.center, normal=base.backward.normal,
                            up=base.backward.up, nx=self.n_side, ny=self.n_side,
                            pitch=pitch)
        soi = SceneGrid(origin=SOI_ORIGIN, size=SOI_SIZE, counts=self.soi_counts)
        return SystemLayout(forward=forward, backward=backward, tx=base.tx,
                            rx1=base.rx1, rx2=base.rx2, soi=soi)

    def frequency_grid(self) -> FrequencyGrid:
        return FrequencyGrid(center_hz=self.center_hz,
                             bandwidth_hz=self.bandwidth_hz, n_bins=self.n_bins)

    def waveform(self) -> SourceWaveform:
        grid = self.frequency_grid()
        if self.waveform_kind == "flat":
            return flat_spectrum(grid)
        return lfm_spectrum(grid)

    def noise_model(self) -> NoiseModel | None:
        if not self.noise_enabled:
            return None
        return NoiseModel(snr_db=self.snr_db, seed=self.noise_seed, enabled=True)

    def schedule(self) -> IlluminationSchedule:
        return build_schedule(self.layout(), seed=self.schedule_seed,
                              omega=2.0 * math.pi * self.center_hz,
                              gamma=self.gamma)

    def to_dict(self) -> dict:
        return {
            "scale_profile": self.scale_profile,
            "frequency": {"center_hz": self.center_hz,
                          "bandwidth_hz": self.bandwidth_hz,
                          "n_bins": self.n_bins},
            "panels": {"n_side": self.n_side, "side_m": self.panel_side_m},
            "soi": {"counts": list(self.soi_counts)},
            "schedule_seed": self.schedule_seed,
            "noise": {"enabled": self.noise_enabled, "snr_db": self.snr_db,
                      "seed": self.noise_seed},
            "gamma": self.gamma,
            "direct_path": self.direct_path,
            "image": {"height": self.image_height, "width": self.image_width},
            "waveform": self.waveform_kind,
        }

    def content_hash(self) -> str:
        return content_hash(self.to_dict())


def make_config(doc: dict | None = None) -> Config:
    """Build a validated Config from a plain dict (JSON document shape).

    Unknown keys are rejected. Every field defaults from the scale profile
    ("desk" unless specified) and can be overridden individually.
    """
    doc = dict(doc or {})
    unknown = set(doc) - _TOP_KEYS
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")

    profile = doc.get("scale_profile", "desk")
    _require(profile in PROFILES, f"unknown scale_profile {profile!r}")
    prof = PROFILES[profile]

    freq = dict(doc.get("frequency") or {})
    _require(set(freq) <= {"center_hz", "bandwidth_hz", "n_bins"},
             "unknown keys under 'frequency'")
    center = float(freq.get("center_hz", CENTER_HZ))
    bandwidth = float(freq.get("bandwidth_hz", BANDWIDTH_HZ))
    n_bins = int(freq.get("n_bins", prof["n_bins"]))
    _require(center > 0 and bandwidth >= 0, "invalid frequency band")
    _require(n_bins >= 1, "n_bins must be at least 1")

    panels = dict(doc.get("panels") or {})
    _require(set(panels) <= {"n_side", "side_m"}, "unknown keys under 'panels'")
    n_side = int(panels.get("n_side", prof["n_side"]))
    side_m = float(panels.get("side_m", PANEL_SIDE))
    _require(n_side >= 1 and side_m > 0, "invalid panel geometry")

    soi = dict(doc.get("soi") or {})
    _require(set(soi) <= {"counts"}, "unknown keys under 'soi'")
    counts = tuple(int(c) for c in soi.get("counts", prof["counts"]))
    _require(len(counts) == 3 and all(c >= 1 for c in counts),
             "soi counts must be three positive integers")

    noise = dict(doc.get("noise") or {})
    _require(set(noise) <= {"enabled", "snr_db", "seed"},
             "unknown keys under 'noise'")
    noise_enabled = bool(noise.get("enabled", False))
    snr_db = float(noise.get("snr_db", 30.0))
    noise_seed = int(noise.get("seed", 0))
    _require(noise_seed >= 0, "noise seed must be non-negative")

    image = dict(doc.get("image") or {})
    _require(set(image) <= {"height", "width"}, "unknown keys under 'image'")
    height = int(image.get("height", prof["image"][0]))
    width = int(image.get("width", prof["image"][1]))
    _require(height >= 1 and width >= 1, "invalid image size")

    gamma = float(doc.get("gamma", DEFAULT_GAMMA))
    _require(0 < gamma <= 1, "gamma must lie in (0, 1]")

    direct = doc.get("direct_path", True)
    if isinstance(direct, str):
        _require(direct in ("on", "off"), "direct_path must be on/off or bool")
        direct = direct == "on"
    _require(isinstance(direct, bool), "direct_path must be on/off or bool")

    kind = doc.get("waveform", "lfm")
    _require(kind in ("lfm", "flat"), "waveform must be 'lfm' or 'flat'")

    schedule_seed = int(doc.get("schedule_seed", 0))

    return Config(
        scale_profile=profile, center_hz=center, bandwidth_hz=bandwidth,
        n_bins=n_bins, n_side=n_side, panel_side_m=side_m, soi_counts=counts,
        schedule_seed=schedule_seed, noise_enabled=noise_enabled,
        snr_db=snr_db, noise_seed=noise_seed, gamma=gamma, direct_path=direct,
        image_height=height, image_width=width, waveform_kind=kind,
    )


def load_config(path) -> Config:
    """Read and validate a JSON configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "config root must be a JSON object")
    return make_config(doc)
