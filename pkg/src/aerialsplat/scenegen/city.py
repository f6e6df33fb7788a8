"""Procedural box-building cities made of flat disc Gaussians."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..splat.gaussians import GaussianScene

GROUND, ROOF, FACADE = 0, 1, 2
LABEL_NAMES = {GROUND: "ground", ROOF: "roof", FACADE: "facade"}

DEFAULT_PALETTE = {
    "roof": [[0.62, 0.22, 0.18], [0.35, 0.36, 0.42], [0.72, 0.62, 0.45], [0.22, 0.42, 0.30]],
    "facade": [[0.85, 0.80, 0.68], [0.55, 0.62, 0.75], [0.80, 0.55, 0.40], [0.65, 0.65, 0.60]],
    "ground": [[0.24, 0.24, 0.26], [0.42, 0.50, 0.34]],
}


@dataclass
class CityConfig:
    """Layout knobs for :func:`generate_city`.

    The city is ``grid`` lots of side ``lot_size`` centered on the origin,
    with the ground plane extended by ``ground_margin``. Faces are tiled with
    discs on a grid of spacing at most ``cell_size`` (ground uses
    ``ground_cell_factor`` times coarser cells). ``footprint_range`` is a
    fraction of the lot side. ``stagger`` adds a second, half-cell offset
    disc layer on roofs and facades so they block what lies behind them;
    ``disc_spread`` is the in-plane std-dev as a fraction of the cell step.
    ``edge_inset`` is how many steps the outermost disc rows sit inside a face
    edge; 1.48 puts the 50% opacity contour of a spread-0.85 staggered face
    on the edge itself, so rendered silhouettes match the boxes.
    Palette entries are lists of RGB triples; the
    ground palette is (street, lot).
    """

    grid: tuple[int, int] = (3, 3)
    lot_size: float = 1.0
    building_probability: float = 0.75
    height_range: tuple[float, float] = (0.35, 1.0)
    footprint_range: tuple[float, float] = (0.45, 0.72)
    palette: dict = field(default_factory=lambda: {k: [list(c) for c in v] for k, v in DEFAULT_PALETTE.items()})
    cell_size: float = 0.08
    ground_cell_factor: float = 1.5
    ground_margin: float = 1.2
    street_width: float = 0.18
    color_jitter: float = 0.03
    stagger: bool = True
    disc_spread: float = 0.85
    edge_inset: float = 1.48
    seed: int = 0

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        self.height_range = tuple(float(h) for h in self.height_range)
        self.footprint_range = tuple(float(f) for f in self.footprint_range)
        if len(self.grid) != 2 or min(self.grid) < 1:
            raise ValueError("grid must be two positive integers")
        if not 0.0 <= self.building_probability <= 1.0:
            raise ValueError("building_probability must lie in [0, 1]")
        for name in ("height_range", "footprint_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be a positive, ordered range")
        if self.footprint_range[1] > 1.0:
            raise ValueError("footprint_range is a fraction of the lot and must be <= 1")
        for name in ("lot_size", "cell_size", "ground_cell_factor", "disc_spread"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.edge_inset < 0:
            raise ValueError("edge_inset must be non-negative")
        if self.ground_margin < 0 or self.street_width < 0:
            raise ValueError("ground_margin and street_width must be non-negative")
        for key in ("roof", "facade", "ground"):
            if not self.palette.get(key):
                raise ValueError(f"palette needs a non-empty '{key}' list")
        if len(self.palette["ground"]) < 2:
            raise ValueError("ground palette needs (street, lot) colors")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        d["height_range"] = list(self.height_range)
        d["footprint_range"] = list(self.footprint_range)
        return d

    @property
    def thickness(self) -> float:
        """Disc thickness (shortest std-dev), 1% of the cell size."""
        return 0.01 * self.cell_size


@dataclass
class Box:
    x0: float
    y0: float
    x1: float
    y1: float
    height: float
    roof_color: list
    facade_color: list

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CityLayout:
    boxes: list[Box]
    ground: tuple[float, float, float, float]  # x0, y0, x1, y1
    config: CityConfig

    def to_dict(self) -> dict:
        return {"boxes": [b.to_dict() for b in self.boxes], "ground": list(self.ground),
                "config": self.config.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CityLayout":
        cfg = d["config"]
        return cls([Box(**b) for b in d["boxes"]], tuple(d["ground"]), CityConfig(**cfg))


def build_layout(config: CityConfig) -> CityLayout:
    """Draw building boxes for every lot; deterministic in ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    rows, cols = config.grid
    L = config.lot_size
    ox, oy = -cols * L / 2.0, -rows * L / 2.0
    pal = config.palette

    def draw_box(r: int, c: int) -> Box:
        fw = rng.uniform(*config.footprint_range) * L
        fd = rng.uniform(*config.footprint_range) * L
        h = rng.uniform(*config.height_range)
        cx = ox + (c + 0.5) * L + rng.uniform(-1, 1) * 0.5 * (L - fw) * 0.5
        cy = oy + (r + 0.5) * L + rng.uniform(-1, 1) * 0.5 * (L - fd) * 0.5
        roof = pal["roof"][rng.integers(len(pal["roof"]))]
        facade = pal["facade"][rng.integers(len(pal["facade"]))]
        return Box(cx - fw / 2, cy - fd / 2, cx + fw / 2, cy + fd / 2, h, list(roof), list(facade))

    boxes = []
    for r in range(rows):
        for c in range(cols):
            if rng.uniform() < config.building_probability:
                boxes.append(draw_box(r, c))
    if not boxes and config.building_probability > 0:
        # never hand back an empty city when buildings were asked for
        k = int(rng.integers(rows * cols))
        boxes.append(draw_box(k // cols, k % cols))
    m = config.ground_margin
    ground = (ox - m, oy - m, -ox + m, -oy + m)
    return CityLayout(boxes, ground, config)


def _grid(length: float, cell: float, inset: float = 0.5) -> tuple[np.ndarray, float]:
    """Row positions along ``length``: the outer rows sit ``inset`` steps in from each end."""
    n = max(1, int(math.ceil(length / cell - 2.0 * inset + 1.0 - 1e-9)))
    step = length / (n - 1 + 2.0 * inset)
    return (np.arange(n) + inset) * step, step


def _discs(centers, normal_axis: int, step_u: float, step_v: float, thickness: float, spread: float):
    """Log-scales for axis-aligned discs whose shortest axis is ``normal_axis``."""
    n = len(centers)
    scales = np.empty((n, 3))
    in_plane = [a for a in range(3) if a != normal_axis]
    scales[:, in_plane[0]] = spread * step_u
    scales[:, in_plane[1]] = spread * step_v
    scales[:, normal_axis] = thickness
    return np.log(scales)


def _stagger(length: float, cell: float, inset: float) -> tuple[np.ndarray, np.ndarray]:
    """Midpoints between :func:`_grid` rows and their fractional row index."""
    pos, step = _grid(length, cell, inset)
    k = np.arange(1, len(pos))
    return pos[1:] - 0.5 * step, k - 0.5


def _face(len_u: float, len_v: float, cell: float, stagger: bool, inset: float):
    """In-plane disc offsets on a face: ``(u, v, iu, iv, step_u, step_v)``.

    The base layer sits on cell centers; with ``stagger`` a second layer sits
    on interior cell corners so the face stays opaque between disc centers.
    ``iu``/``iv`` are (fractional) cell indices used for texturing.
    """
    us, su = _grid(len_u, cell, inset)
    vs, sv = _grid(len_v, cell, inset)
    U, V = np.meshgrid(us, vs, indexing="xy")
    IU, IV = np.meshgrid(np.arange(len(us)), np.arange(len(vs)), indexing="xy")
    u, v, iu, iv = [U.ravel()], [V.ravel()], [IU.ravel().astype(float)], [IV.ravel().astype(float)]
    if stagger:
        cu, ku = _stagger(len_u, cell, inset)
        cv, kv = _stagger(len_v, cell, inset)
        U, V = np.meshgrid(cu, cv, indexing="xy")
        IU, IV = np.meshgrid(ku, kv, indexing="xy")
        u += [U.ravel()]
        v += [V.ravel()]
        iu += [IU.ravel()]
        iv += [IV.ravel()]
    return np.concatenate(u), np.concatenate(v), np.concatenate(iu), np.concatenate(iv), su, sv


def _checker(iu: np.ndarray, iv: np.ndarray) -> np.ndarray:
    """Facade tint from 2x2-cell checker blocks, averaged at cell corners."""
    def tint(a, b):
        return np.where(((a // 2 + b // 2) % 2) == 0, 1.15, 0.8)
    out = np.zeros(len(iu))
    for du in (-0.5, 0.5):
        for dv in (-0.5, 0.5):
            out += tint(np.round(iu + du).astype(int), np.round(iv + dv).astype(int))
    return np.where(iu == np.round(iu), tint(iu.astype(int), iv.astype(int)), out / 4.0)


def _jitter(rng, base, n: int, amount: float) -> np.ndarray:
    return np.clip(np.asarray(base, dtype=np.float64)[None, :] + rng.normal(0, amount, (n, 1)), 0.0, 1.0)


def generate_city(config: CityConfig, layout: CityLayout | None = None) -> GaussianScene:
    """Ground plane plus box buildings, every face tiled with flat discs.

    Disc shortest axes coincide with face normals (all rotations are identity;
    the thin axis is picked through the scales). ``labels`` marks ground,
    roof and facade discs; ``meta['building']`` holds the owning box (-1 for
    ground).
    """
    layout = layout or build_layout(config)
    rng = np.random.default_rng([config.seed, 1])
    thick = config.thickness
    street, lot = config.palette["ground"][0], config.palette["ground"][1]
    rows, cols = config.grid
    L = config.lot_size
    half_street = config.street_width / 2.0

    means, log_scales, colors, labels, owner = [], [], [], [], []

    # ground, skipping cells hidden under a footprint
    gx0, gy0, gx1, gy1 = layout.ground
    gcell = config.cell_size * config.ground_cell_factor
    us, su = _grid(gx1 - gx0, gcell, config.edge_inset)
    vs, sv = _grid(gy1 - gy0, gcell, config.edge_inset)
    X, Y = np.meshgrid(gx0 + us, gy0 + vs, indexing="xy")
    pts = np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1)
    covered = np.zeros(len(pts), dtype=bool)
    for b in layout.boxes:
        covered |= (pts[:, 0] > b.x0) & (pts[:, 0] < b.x1) & (pts[:, 1] > b.y0) & (pts[:, 1] < b.y1)
    pts = pts[~covered]
    # streets run along lot boundaries and around the city block
    fx = (pts[:, 0] + cols * L / 2.0) / L
    fy = (pts[:, 1] + rows * L / 2.0) / L
    dist_x = np.abs(fx - np.round(np.clip(fx, 0, cols))) * L
    dist_y = np.abs(fy - np.round(np.clip(fy, 0, rows))) * L
    outside = (fx < 0) | (fx > cols) | (fy < 0) | (fy > rows)
    is_street = (dist_x < half_street) | (dist_y < half_street) | outside
    base = np.where(is_street[:, None], np.asarray(street)[None, :], np.asarray(lot)[None, :])
    means.append(pts)
    log_scales.append(_discs(pts, 2, su, sv, thick, config.disc_spread))
    colors.append(np.clip(base + rng.normal(0, config.color_jitter, (len(pts), 1)), 0, 1))
    labels.append(np.full(len(pts), GROUND))
    owner.append(np.full(len(pts), -1))

    for bi, b in enumerate(layout.boxes):
        # roof
        u, v, _, _, su, sv = _face(b.x1 - b.x0, b.y1 - b.y0, config.cell_size, config.stagger, config.edge_inset)
        pts = np.stack([b.x0 + u, b.y0 + v, np.full(len(u), b.height)], axis=1)
        means.append(pts)
        log_scales.append(_discs(pts, 2, su, sv, thick, config.disc_spread))
        colors.append(_jitter(rng, b.roof_color, len(pts), config.color_jitter))
        labels.append(np.full(len(pts), ROOF))
        owner.append(np.full(len(pts), bi))
        # four facades with a checker tint
        for axis, fixed, lo, hi in ((0, b.x0, b.y0, b.y1), (0, b.x1, b.y0, b.y1),
                                    (1, b.y0, b.x0, b.x1), (1, b.y1, b.x0, b.x1)):
            t, z, it, iz, st, sz = _face(hi - lo, b.height, config.cell_size, config.stagger, config.edge_inset)
            pts = np.zeros((len(t), 3))
            pts[:, axis] = fixed
            pts[:, 1 - axis] = lo + t
            pts[:, 2] = z
            col = np.clip(np.asarray(b.facade_color)[None, :] * _checker(it, iz)[:, None], 0, 1)
            means.append(pts)
            log_scales.append(_discs(pts, axis, st, sz, thick, config.disc_spread))
            colors.append(np.clip(col + rng.normal(0, config.color_jitter, (len(pts), 1)), 0, 1))
            labels.append(np.full(len(pts), FACADE))
            owner.append(np.full(len(pts), bi))

    means = np.concatenate(means)
    n = len(means)
    rot = np.zeros((n, 4))
    rot[:, 0] = 1.0
    scene = GaussianScene(means, np.concatenate(log_scales), rot, np.full(n, 6.0), np.concatenate(colors),
                          labels=np.concatenate(labels))
    scene.meta["building"] = np.concatenate(owner)
    scene.meta["layout"] = layout
    return scene
