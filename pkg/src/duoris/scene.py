"""System geometry and scene content.

Coordinate frame: the forward reflecting panel lies in the x = 0 plane and
faces +x, the backward panel lies in the x = 3 plane and faces -x, z is up.
The imaged volume sits between the panels; its front face (the one seen from
the forward panel) is the projection plane for ground-truth images, with
image rows running top-down in z and columns along +y.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .hashing import content_hash

# Imaged-volume box, shared by both scale profiles: 1 m deep (x), 2 m wide
# (y), 2 m tall (z), centred between the panels.
SOI_ORIGIN = np.array([1.0, -1.0, 0.0])
SOI_SIZE = np.array([1.0, 2.0, 2.0])

PANEL_SIDE = 1.4  # m, square aperture at either scale

POSE_FAMILIES = ("stand", "arms_out", "sit", "lean")


@dataclass(frozen=True)
class RisPanel:
    """Square lattice of phase-switched elements."""

    center: np.ndarray
    normal: np.ndarray
    up: np.ndarray
    nx: int
    ny: int
    pitch: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        n = np.asarray(self.normal, dtype=float)
        u = np.asarray(self.up, dtype=float)
        if self.nx < 1 or self.ny < 1 or self.pitch <= 0:
            raise ValueError("panel needs positive element counts and pitch")
        nn, uu = np.linalg.norm(n), np.linalg.norm(u)
        if nn == 0 or uu == 0 or abs(np.dot(n / nn, u / uu)) > 1e-9:
            raise ValueError("normal and up must be non-zero and orthogonal")
        object.__setattr__(self, "normal", n / nn)
        object.__setattr__(self, "up", u / uu)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def element_area(self) -> float:
        return self.pitch**2

    def signature(self):
        return {
            "center": self.center, "normal": self.normal, "up": self.up,
            "nx": self.nx, "ny": self.ny, "pitch": self.pitch,
        }


def element_positions(panel: RisPanel) -> np.ndarray:
    """Element centres, shape (nx*ny, 3), row-major over (ny, nx).

    The lattice is centred on the panel centre with spacing `pitch` along
    `up` and `normal x up`.
    """
    u_axis = np.cross(panel.normal, panel.up)
    ix = np.arange(panel.nx) - (panel.nx - 1) / 2.0
    iy = np.arange(panel.ny) - (panel.ny - 1) / 2.0
    offs_u = ix[None, :, None] * panel.pitch * u_axis
    offs_v = iy[:, None, None] * panel.pitch * panel.up
    pos = panel.center + offs_u + offs_v
    return pos.reshape(-1, 3)


@dataclass
class SceneGrid:
    """Voxel grid over the imaged volume; `values` holds the contrast."""

    origin: np.ndarray
    size: np.ndarray
    counts: tuple[int, int, int]
    values: np.ndarray = None

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float)
        self.size = np.asarray(self.size, dtype=float)
        self.counts = tuple(int(c) for c in self.counts)
        if any(c < 1 for c in self.counts):
            raise ValueError("grid counts must be positive")
        if np.any(self.size <= 0):
            raise ValueError("grid size must be positive")
        if self.values is None:
            self.values = np.zeros(self.counts)
        else:
            self.values = np.asarray(self.values, dtype=float)
            if self.values.shape != self.counts:
                raise ValueError("values shape must match grid counts")

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    @property
    def cell_size(self) -> np.ndarray:
        return self.size / np.asarray(self.counts, dtype=float)

    @property
    def cell_area(self) -> float:
        """Transverse face area of one cell (the face seen along x)."""
        d = self.cell_size
        return float(d[1] * d[2])

    def cell_centers(self) -> np.ndarray:
        """Centres of all cells, shape (n_cells, 3), C-order over (x, y, z)."""
        d = self.cell_size
        axes = [self.origin[a] + (np.arange(self.counts[a]) + 0.5) * d[a]
                for a in range(3)]
        xx, yy, zz = np.meshgrid(*axes, indexing="ij")
        return np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)

    def empty_like(self) -> "SceneGrid":
        return SceneGrid(self.origin, self.size, self.counts)

    def with_values(self, values: np.ndarray) -> "SceneGrid":
        return SceneGrid(self.origin, self.size, self.counts, values)

    def signature(self):
        return {"origin": self.origin, "size": self.size,
                "counts": list(self.counts), "values": self.values}

    def geometry_signature(self):
        return {"origin": self.origin, "size": self.size,
                "counts": list(self.counts)}


@dataclass(frozen=True)
class SystemLayout:
    """Panels, transceiver positions, and the imaged-volume grid geometry."""

    forward: RisPanel
    backward: RisPanel
    tx: np.ndarray
    rx1: np.ndarray
    rx2: np.ndarray
    soi: SceneGrid

    def __post_init__(self):
        for name in ("tx", "rx1", "rx2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def signature(self):
        return {
            "forward": self.forward.signature(),
            "backward": self.backward.signature(),
            "tx": self.tx, "rx1": self.rx1, "rx2": self.rx2,
            "soi": self.soi.geometry_signature(),
        }

    def content_hash(self) -> str:
        return content_hash(self.signature())


def default_layout(scale: str = "desk") -> SystemLayout:
    """Reference geometry at either scale.

    Positions are identical at both scales; the desk profile only thins out
    element and voxel counts. The transmitter and first receiver sit 2 m in
    front of the forward panel, symmetrically left and right; the second
    receiver sits 2 m behind the backward panel. All three are at 1 m height.
    """
    if scale == "desk":
        n_side, grid_counts = 16, (10, 20, 20)
    elif scale == "full":
        n_side, grid_counts = 64, (20, 40, 40)
    else:
        raise ValueError(f"unknown scale profile {scale!r}")
    pitch = PANEL_SIDE / n_side
    forward = RisPanel(center=(0.0, 0.0, 1.0), normal=(1.0, 0.0, 0.0),
                       up=(0.0, 0.0, 1.0), nx=n_side, ny=n_side, pitch=pitch)
    backward = RisPanel(center=(3.0, 0.0, 1.0), normal=(-1.0, 0.0, 0.0),
                        up=(0.0, 0.0, 1.0), nx=n_side, ny=n_side, pitch=pitch)
    soi = SceneGrid(origin=SOI_ORIGIN, size=SOI_SIZE, counts=grid_counts)
    return SystemLayout(
        forward=forward, backward=backward,
        tx=(-1.2, -1.6, 1.0), rx1=(-1.2, 1.6, 1.0), rx2=(5.0, 0.0, 1.0),
        soi=soi,
    )


def rot_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


@dataclass(frozen=True)
class Ellipsoid:
    """Solid ellipsoid, optionally rotated about its own centre."""

    center: np.ndarray
    semi_axes: np.ndarray
    rotation: np.ndarray = None  # 3x3, None means axis-aligned

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        ax = np.asarray(self.semi_axes, dtype=float)
        if np.any(ax <= 0):
            raise ValueError("semi-axes must be positive")
        object.__setattr__(self, "semi_axes", ax)
        if self.rotation is not None:
            object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))

    def contains(self, points: np.ndarray) -> np.ndarray:
        q = np.asarray(points, dtype=float) - self.center
        if self.rotation is not None:
            q = q @ self.rotation  # row-vector form of R^T @ q
        return np.sum((q / self.semi_axes) ** 2, axis=-1) <= 1.0

    def crosses_x_line(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Whether lines parallel to x through (y, z) intersect the solid."""
        R = self.rotation if self.rotation is not None else np.eye(3)
        u = R.T @ np.array([1.0, 0.0, 0.0])
        base = np.stack([np.zeros_like(y), y, z], axis=-1) - self.center
        w = base @ R
        inv2 = 1.0 / self.semi_axes**2
        a = np.sum(u**2 * inv2)
        b = 2.0 * np.sum(w * (u * inv2), axis=-1)
        c = np.sum(w**2 * inv2, axis=-1) - 1.0
        return b**2 - 4.0 * a * c >= 0.0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        R = self.rotation if self.rotation is not None else np.eye(3)
        # Half-extent of a rotated ellipsoid along axis e is |diag(a) R^T e|.
        half = np.sqrt(((R * self.semi_axes[None, :]) ** 2).sum(axis=1))
        return self.center - half, self.center + half


@dataclass(frozen=True)
class Box:
    """Axis-aligned solid box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(hi <= lo):
            raise ValueError("box must have positive extent")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all((p >= self.lo) & (p <= self.hi), axis=-1)

    def crosses_x_line(self, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        return ((y >= self.lo[1]) & (y <= self.hi[1])
                & (z >= self.lo[2]) & (z <= self.hi[2]))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.lo, self.hi


@dataclass(frozen=True)
class Phantom:
    """Union of solid parts with a single contrast value."""

    parts: tuple
    chi: float = 1.0
    pose_family: str = "custom"

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        inside = np.zeros(points.shape[:-1], dtype=bool)
        for part in self.parts:
            inside |= part.contains(points)
        return inside

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        los, his = zip(*(p.bounds() for p in self.parts))
        return np.min(los, axis=0), np.max(his, axis=0)


def rasterize_phantom(phantom: Phantom, grid: SceneGrid) -> SceneGrid:
    """Fill a grid with the phantom contrast at every cell whose centre lies
    inside some part. Warns when nothing lands inside the volume."""
    centers = grid.cell_centers()
    inside = phantom.contains(centers).reshape(grid.counts)
    values = np.where(inside, phantom.chi, 0.0)
    if phantom.parts and not inside.any():
        warnings.warn("phantom lies entirely outside the imaged volume",
                      stacklevel=2)
    return grid.with_values(values)


def _humanoid_parts(rng: np.random.Generator, family: str) -> tuple:
    """Body solids for one pose family, feet centred at the origin."""
    h = rng.uniform(1.55, 1.85)
    head_r = 0.065 * h
    torso = np.array([0.11, 0.17, 0.30]) * (h / 1.7)
    leg_len = 0.25 * h
    arm_len = 0.18 * h
    sway = rng.uniform(-0.08, 0.08)  # arm angle jitter, rad

    parts = []
    if family == "sit":
        seat = 0.26 * h
        torso_c = seat + torso[2] * 0.9
        # thighs run forward along x, shins drop to the floor
        parts.append(Ellipsoid((0.12, -0.09, seat), (leg_len * 0.55, 0.07, 0.08)))
        parts.append(Ellipsoid((0.12, 0.09, seat), (leg_len * 0.55, 0.07, 0.08)))
        parts.append(Ellipsoid((0.24, -0.09, seat / 2), (0.07, 0.07, seat / 2)))
        parts.append(Ellipsoid((0.24, 0.09, seat / 2), (0.07, 0.07, seat / 2)))
    else:
        torso_c = 0.72 * h
        parts.append(Ellipsoid((0.0, -0.09, leg_len), (0.07, 0.08, leg_len)))
        parts.append(Ellipsoid((0.0, 0.09, leg_len), (0.07, 0.08, leg_len)))

    lean = rot_y(np.deg2rad(rng.uniform(12, 22))) if family == "lean" else None
    parts.append(Ellipsoid((0.0, 0.0, torso_c), torso, rotation=lean))
    head_c = np.array([0.0, 0.0, torso_c + torso[2] + head_r * 0.9])
    if lean is not None:
        pivot = np.array([0.0, 0.0, torso_c])
        head_c = pivot + lean @ (head_c - pivot)
    parts.append(Ellipsoid(head_c, (head_r, head_r, head_r * 1.15)))

    shoulder_z = torso_c + torso[2] * 0.75
    for side in (-1.0, 1.0):
        if family == "arms_out":
            ang = side * (np.pi / 2 + sway)
        else:
            ang = side * (np.deg2rad(8) + abs(sway))
        R = rot_x(ang)
        shoulder = np.array([0.0, side * (torso[1] + 0.04), shoulder_z])
        center = shoulder + R @ np.array([0.0, 0.0, -arm_len])
        parts.append(Ellipsoid(center, (0.05, 0.05, arm_len), rotation=R))
    return tuple(parts)


def sample_random_humanoid(seed: int, pose_family: str | None = None,
                           chi: float = 1.0) -> Phantom:
    """Deterministic random humanoid phantom inside the imaged volume.

    A seed fixes the pose family (unless given), the body proportions, and
    a uniformly random floor position that keeps every part inside the box.
    """
    rng = np.random.default_rng(seed)
    family = pose_family or str(rng.choice(POSE_FAMILIES))
    if family not in POSE_FAMILIES:
        raise ValueError(f"unknown pose family {family!r}")
    parts = _humanoid_parts(rng, family)
    lo, hi = Phantom(parts=parts, chi=chi).bounds()

    margin = 0.02
    x_lo = SOI_ORIGIN[0] - lo[0] + margin
    x_hi = SOI_ORIGIN[0] + SOI_SIZE[0] - hi[0] - margin
    y_lo = SOI_ORIGIN[1] - lo[1] + margin
    y_hi = SOI_ORIGIN[1] + SOI_SIZE[1] - hi[1] - margin
    if x_hi < x_lo or y_hi < y_lo:
        raise ValueError("phantom does not fit inside the imaged volume")
    shift = np.array([rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), 0.0])

    placed = []
    for part in parts:
        placed.append(Ellipsoid(part.center + shift, part.semi_axes, part.rotation))
    return Phantom(parts=tuple(placed), chi=chi, pose_family=family)


def render_ground_truth(phantom: Phantom, width: int, height: int) -> np.ndarray:
    """Binary orthographic silhouette on the front face of the imaged volume.

    Returns an (height, width) array of {0.0, 1.0}: row 0 is the top of the
    volume, columns run along +y, projection is along the depth axis.
    """
    if width < 1 or height < 1:
        raise ValueError("image dimensions must be positive")
    y = SOI_ORIGIN[1] + (np.arange(width) + 0.5) * (SOI_SIZE[1] / width)
    z = SOI_ORIGIN[2] + SOI_SIZE[2] - (np.arange(height) + 0.5) * (SOI_SIZE[2] / height)
    yy, zz = np.meshgrid(y, z)
    hit = np.zeros((height, width), dtype=bool)
    for part in phantom.parts:
        hit |= part.crosses_x_line(yy, zz)
    return hit.astype(float)
