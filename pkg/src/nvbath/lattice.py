"""Proton geometries above a shallow NV center.

Two generators are provided:

* ``placement="layered"`` (default): the layer idealization used for
  magnetometry and the scenario defaults. Protons sit on coplanar
  triangular nets, one sheet per molecular bilayer (or two half-density
  sheets with ``grouping="sublayer"``), at a configurable areal density.
* ``placement="tetrahedral"``: a fully three-dimensional ordered
  hexagonal-ice slab. Oxygen sites follow the lonsdaleite stacking of
  ice Ih and every molecule carries two protons at ideal tetrahedral
  positions. A deterministic donor pattern keeps one proton per
  hydrogen bond in the bulk, so no disorder sampling is involved.

The NV center is at the origin, quantization axis +z, and the first
proton layer of a slab sits at z = depth_z0. All outputs are
deterministic functions of their inputs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .constants import (
    DEFAULT_A_LATTICE,
    DEFAULT_C_LATTICE,
    DEFAULT_RHO_2D,
)
from .errors import ResourceLimitError

_SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of the proton slab.

    a_lattice, c_lattice : nm, hexagonal in-plane and stacking constants.
    n_layers : number of molecular bilayers.
    lateral_radius : nm, in-plane truncation radius of the slab.
    placement : "layered" or "tetrahedral".
    rho_2d : protons/nm^2 per bilayer (layered placement only).
    grouping : "bilayer" (one sheet per bilayer) or "sublayer" (two
        half-density sheets per bilayer), layered placement only.
    oh_bond : nm, O-H bond length for tetrahedral placement.
    max_protons : resource guard on the generated proton count.
    """

    a_lattice: float = DEFAULT_A_LATTICE
    c_lattice: float = DEFAULT_C_LATTICE
    n_layers: int = 1
    lateral_radius: float = 12.0
    placement: str = "layered"
    rho_2d: float = DEFAULT_RHO_2D
    grouping: str = "bilayer"
    oh_bond: float = 0.101
    max_protons: int = 5_000_000

    def __post_init__(self):
        if self.a_lattice <= 0 or self.c_lattice <= 0:
            raise ValueError("lattice constants must be positive")
        if self.n_layers < 1:
            raise ValueError("n_layers must be >= 1")
        if self.lateral_radius <= 0:
            raise ValueError("lateral_radius must be positive")
        if self.placement not in ("layered", "tetrahedral"):
            raise ValueError(f"unknown placement {self.placement!r}")
        if self.grouping not in ("bilayer", "sublayer"):
            raise ValueError(f"unknown grouping {self.grouping!r}")
        if self.rho_2d <= 0:
            raise ValueError("rho_2d must be positive")
        if not 0 < self.oh_bond < 0.2:
            raise ValueError("oh_bond out of range")


@dataclass(frozen=True)
class NvPlacement:
    """Vertical distance (nm) from the NV to the first proton layer."""

    depth_z0: float = 3.0

    def __post_init__(self):
        if self.depth_z0 <= 0:
            raise ValueError("depth_z0 must be positive")


@dataclass(frozen=True)
class DetectionVolume:
    """Hemispherical detection volume of radius R_M centered on the NV."""

    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("detection radius must be positive")


@dataclass
class ProtonSet:
    """Proton positions (nm, NV at origin) with per-layer metadata.

    layer_index is -1 for liquid-phase sets. layer_z / layer_area hold the
    plane height and covered disc area of each solid layer, aligned with
    sorted unique layer indices.
    """

    positions: np.ndarray
    layer_index: np.ndarray
    layer_z: np.ndarray = field(default_factory=lambda: np.empty(0))
    layer_area: np.ndarray = field(default_factory=lambda: np.empty(0))
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.layer_index = np.asarray(self.layer_index, dtype=int).reshape(-1)
        if len(self.layer_index) != len(self.positions):
            raise ValueError("layer_index length mismatch")
        if len(self.positions) and np.any(
            np.linalg.norm(self.positions, axis=1) <= 0
        ):
            raise ValueError("proton at the NV origin")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def is_solid(self) -> bool:
        return len(self) > 0 and bool(np.all(self.layer_index >= 0))


@dataclass(frozen=True)
class LayerInfo:
    z: float
    rho_2d: float
    count: int


def _disc_sites(origin_xy, a1, a2, radius) -> np.ndarray:
    """Lattice translations of one 2-D site within a disc of given radius."""
    # index bound from the cell geometry: |i| <= R |a2| / |a1 x a2| etc.
    cross = abs(a1[0] * a2[1] - a1[1] * a2[0])
    span = int(np.ceil(
        radius * max(np.linalg.norm(a1), np.linalg.norm(a2)) / cross
    )) + 2
    idx = np.arange(-span, span + 1)
    i, j = np.meshgrid(idx, idx, indexing="ij")
    xy = (
        origin_xy[None, None, :]
        + i[..., None] * a1[None, None, :]
        + j[..., None] * a2[None, None, :]
    ).reshape(-1, 2)
    keep = np.einsum("ij,ij->i", xy, xy) <= radius * radius
    return xy[keep]


def _triangular_net(density: float, radius: float, offset_xy=(0.0, 0.0)) -> np.ndarray:
    """Triangular point net of the requested areal density within a disc."""
    s = np.sqrt(2.0 / (_SQRT3 * density))
    a1 = np.array([s, 0.0])
    a2 = np.array([0.5 * s, 0.5 * _SQRT3 * s])
    return _disc_sites(np.asarray(offset_xy, dtype=float), a1, a2, radius)


def _build_layered(spec: LatticeSpec, nv: NvPlacement) -> ProtonSet:
    d_bilayer = spec.c_lattice / 2.0
    if spec.grouping == "bilayer":
        sheet_z = [nv.depth_z0 + k * d_bilayer for k in range(spec.n_layers)]
        sheet_rho = [spec.rho_2d] * len(sheet_z)
    else:
        # two sub-sheets per bilayer, separated by c/8, half density each
        sheet_z, sheet_rho = [], []
        for k in range(spec.n_layers):
            base = nv.depth_z0 + k * d_bilayer
            sheet_z += [base, base + spec.c_lattice / 8.0]
            sheet_rho += [spec.rho_2d / 2.0] * 2

    est = sum(r * np.pi * spec.lateral_radius**2 for r in sheet_rho)
    if est > spec.max_protons:
        raise ResourceLimitError(
            f"layered slab would hold ~{est:.0f} protons "
            f"(cap {spec.max_protons})"
        )

    pos_blocks, idx_blocks = [], []
    s = np.sqrt(2.0 / (_SQRT3 * max(sheet_rho)))
    for li, (z, rho) in enumerate(zip(sheet_z, sheet_rho)):
        # alternate the in-plane registry so sheets do not stack in columns
        off = (0.0, 0.0) if li % 2 == 0 else (0.5 * s, s / (2.0 * _SQRT3))
        xy = _triangular_net(rho, spec.lateral_radius, off)
        pos_blocks.append(
            np.column_stack([xy, np.full(len(xy), z)])
        )
        idx_blocks.append(np.full(len(xy), li, dtype=int))

    positions = np.vstack(pos_blocks)
    layer_index = np.concatenate(idx_blocks)
    area = np.pi * spec.lateral_radius**2
    return ProtonSet(
        positions,
        layer_index,
        layer_z=np.asarray(sheet_z, dtype=float),
        layer_area=np.full(len(sheet_z), area),
        meta={
            "placement": "layered",
            "grouping": spec.grouping,
            "a": spec.a_lattice,
            "c": spec.c_lattice,
            "rho_2d": spec.rho_2d,
            "n_layers": spec.n_layers,
            "lateral_radius": spec.lateral_radius,
            "depth_z0": nv.depth_z0,
        },
    )


def _ice_columns(a: float):
    """In-plane origins and oblique bond azimuth sets of the two
    oxygen columns of the hexagonal ice stacking."""
    col_a = np.array([0.0, a / _SQRT3])
    col_b = np.array([a / 2.0, a * _SQRT3 / 6.0])
    azim_a = np.deg2rad([90.0, -30.0, -150.0])  # A -> B bond azimuths
    azim_b = np.deg2rad([-90.0, 30.0, 150.0])  # B -> A bond azimuths
    return (col_a, azim_a), (col_b, azim_b)


def _molecule_proton_offsets(
    kind: str, azimuths: np.ndarray, a: float, c: float, oh: float
) -> np.ndarray:
    """Proton displacement vectors for one molecule.

    kind "lower": the molecule whose vertical bond points down; it
    donates along two of its three upward oblique bonds.
    kind "upper": vertical bond points up; it donates the vertical bond
    and one downward oblique bond.

    Donor selection is by azimuth sector, which singles out one proton
    per hydrogen bond for every bulk bond of the slab.
    """
    lat = a / _SQRT3  # in-plane reach of an oblique bond
    dz_ob = c / 8.0
    len_ob = np.hypot(lat, dz_ob)
    out = []
    if kind == "lower":
        for phi in azimuths:
            deg = np.rad2deg(phi) % 360.0
            if 0.0 <= deg < 240.0:
                u = np.array([lat * np.cos(phi), lat * np.sin(phi), dz_ob]) / len_ob
                out.append(oh * u)
    else:
        out.append(np.array([0.0, 0.0, oh]))  # vertical bond, upward
        for phi in azimuths:
            deg = np.rad2deg(phi) % 360.0
            if 60.0 <= deg < 180.0:
                u = np.array([lat * np.cos(phi), lat * np.sin(phi), -dz_ob]) / len_ob
                out.append(oh * u)
    if len(out) != 2:
        raise AssertionError("donor pattern must yield two protons per molecule")
    return np.asarray(out)


def _build_tetrahedral(spec: LatticeSpec, nv: NvPlacement) -> ProtonSet:
    a, c, oh = spec.a_lattice, spec.c_lattice, spec.oh_bond
    cols = _ice_columns(a)

    # per-cell area and a quick count estimate for the resource guard
    cell_area = a * a * _SQRT3 / 2.0
    est = 4.0 * spec.n_layers * np.pi * spec.lateral_radius**2 / cell_area
    if est > spec.max_protons:
        raise ResourceLimitError(
            f"tetrahedral slab would hold ~{est:.0f} protons "
            f"(cap {spec.max_protons})"
        )

    a1 = np.array([a, 0.0])
    a2 = np.array([-a / 2.0, a * _SQRT3 / 2.0])

    pos_blocks = []
    for k in range(spec.n_layers):
        z_lower = (7.0 / 16.0 + k / 2.0) * c
        z_upper = (9.0 / 16.0 + k / 2.0) * c
        # column types alternate between consecutive bilayers (ABAB stacking)
        (lo_col, lo_az), (up_col, up_az) = (
            cols if k % 2 == 0 else (cols[1], cols[0])
        )
        for (col, az), z_o, kind in (
            ((lo_col, lo_az), z_lower, "lower"),
            ((up_col, up_az), z_upper, "upper"),
        ):
            xy = _disc_sites(col, a1, a2, spec.lateral_radius)
            offs = _molecule_proton_offsets(kind, az, a, c, oh)
            for off in offs:
                block = np.column_stack(
                    [xy[:, 0] + off[0], xy[:, 1] + off[1],
                     np.full(len(xy), z_o + off[2])]
                )
                pos_blocks.append(block)

    positions = np.vstack(pos_blocks)
    # anchor: lowest proton plane sits exactly at depth_z0
    positions[:, 2] += nv.depth_z0 - positions[:, 2].min()

    # group protons into planes; ideal placement makes the z values exact
    zr = np.round(positions[:, 2] / 1e-9).astype(np.int64)
    layer_z_int, layer_index = np.unique(zr, return_inverse=True)
    layer_z = layer_z_int * 1e-9
    area = np.pi * spec.lateral_radius**2
    return ProtonSet(
        positions,
        layer_index,
        layer_z=layer_z,
        layer_area=np.full(len(layer_z), area),
        meta={
            "placement": "tetrahedral",
            "a": a,
            "c": c,
            "oh_bond": oh,
            "n_layers": spec.n_layers,
            "lateral_radius": spec.lateral_radius,
            "depth_z0": nv.depth_z0,
        },
    )


def build_ice_lattice(spec: LatticeSpec, nv: NvPlacement) -> ProtonSet:
    """Generate the proton slab described by ``spec`` above the NV."""
    if spec.placement == "layered":
        return _build_layered(spec, nv)
    return _build_tetrahedral(spec, nv)


def truncate_to_volume(protons: ProtonSet, vol: DetectionVolume) -> ProtonSet:
    """Keep protons with |r| <= R_M and z > 0; layer metadata follows."""
    r = np.linalg.norm(protons.positions, axis=1)
    keep = (r <= vol.radius) & (protons.positions[:, 2] > 0)
    positions = protons.positions[keep]
    layer_index = protons.layer_index[keep]

    layer_z = protons.layer_z
    layer_area = protons.layer_area
    if len(layer_z):
        lens = vol.radius**2 - layer_z**2
        lens_area = np.pi * np.clip(lens, 0.0, None)
        layer_area = np.minimum(protons.layer_area, lens_area)
    out = ProtonSet(
        positions,
        layer_index,
        layer_z=layer_z.copy(),
        layer_area=layer_area.copy(),
        meta=dict(protons.meta, truncated_radius=vol.radius),
    )
    return out


def interaction_fraction(
    protons: ProtonSet,
    r_m: float,
    couplings_fn: Callable[[np.ndarray], np.ndarray],
    r_ref: float,
    mode: str = "rss",
) -> float:
    """Fraction of the NV-bath interaction captured inside radius r_m.

    couplings_fn maps an (N, 3) position array to complex couplings g_i.
    Modes: "rss" (default) compares sqrt(sum |g|^2), the collective
    exchange rate; "abs" compares sum |g|; "signed" compares |sum g|.
    The signed sum nearly cancels for symmetric slabs and "abs" diverges
    with slab depth, so "rss" is the figure of merit that reproduces the
    expected ~80% capture at R_M = 2 z0.
    """
    if len(protons) == 0:
        raise ValueError("empty proton set")
    if r_ref < r_m:
        raise ValueError("r_ref must be >= r_m")
    if mode not in ("rss", "abs", "signed"):
        raise ValueError(f"unknown mode {mode!r}")

    r = np.linalg.norm(protons.positions, axis=1)
    g = np.asarray(couplings_fn(protons.positions))
    inner = r <= r_m
    ref = r <= r_ref
    if mode == "rss":
        num = np.sqrt(np.sum(np.abs(g[inner]) ** 2))
        den = np.sqrt(np.sum(np.abs(g[ref]) ** 2))
    elif mode == "abs":
        num = np.sum(np.abs(g[inner]))
        den = np.sum(np.abs(g[ref]))
    else:
        num = np.abs(np.sum(g[inner]))
        den = np.abs(np.sum(g[ref]))
    if den == 0:
        raise ValueError("reference interaction sum is zero")
    return float(num / den)


def layer_table(protons: ProtonSet) -> list[LayerInfo]:
    """Per-layer (z, areal density, count), sorted by z ascending."""
    if len(protons) == 0:
        raise ValueError("empty proton set")
    if np.any(protons.layer_index < 0):
        raise ValueError("layer table requires a solid-phase proton set")

    out = []
    for li in np.unique(protons.layer_index):
        sel = protons.layer_index == li
        count = int(np.sum(sel))
        if count == 0:
            continue
        z = float(np.mean(protons.positions[sel, 2]))
        if li < len(protons.layer_area) and protons.layer_area[li] > 0:
            rho = count / protons.layer_area[li]
        else:
            lateral = np.max(
                np.hypot(protons.positions[sel, 0], protons.positions[sel, 1])
            )
            rho = count / (np.pi * max(lateral, 1e-12) ** 2)
        out.append(LayerInfo(z=z, rho_2d=float(rho), count=count))
    out.sort(key=lambda rec: rec.z)
    return out


def write_protons(protons: ProtonSet, path_or_buf) -> None:
    """Columnar text export: '# key=value' header, then x y z layer_index."""

    def _emit(fh):
        for key, val in sorted(protons.meta.items()):
            fh.write(f"# {key}={val}\n")
        fh.write("# columns=x_nm y_nm z_nm layer_index\n")
        for p, li in zip(protons.positions, protons.layer_index):
            fh.write(f"{p[0]:.12g} {p[1]:.12g} {p[2]:.12g} {li:d}\n")

    if hasattr(path_or_buf, "write"):
        _emit(path_or_buf)
    else:
        with open(path_or_buf, "w", encoding="utf-8") as fh:
            _emit(fh)


def read_protons(path_or_buf) -> ProtonSet:
    """Read the columnar text format written by :func:`write_protons`."""
    if hasattr(path_or_buf, "read"):
        text = path_or_buf.read()
    else:
        with open(path_or_buf, "r", encoding="utf-8") as fh:
            text = fh.read()

    meta = {}
    rows = []
    for line in io.StringIO(text):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, val = body.split("=", 1)
                meta[key.strip()] = val.strip()
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"malformed proton row: {line!r}")
        rows.append((float(parts[0]), float(parts[1]), float(parts[2]), int(parts[3])))
    if not rows:
        raise ValueError("no proton rows found")
    arr = np.asarray(rows)
    positions = arr[:, :3]
    layer_index = arr[:, 3].astype(int)

    layer_z = np.empty(0)
    layer_area = np.empty(0)
    solid = np.all(layer_index >= 0)
    if solid:
        uniq = np.unique(layer_index)
        layer_z = np.array(
            [np.mean(positions[layer_index == li, 2]) for li in uniq]
        )
    return ProtonSet(positions, layer_index, layer_z=layer_z,
                     layer_area=layer_area, meta=meta)
