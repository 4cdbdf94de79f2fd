"""Scenario configuration: one JSON document describing a full experiment.

A scenario pins the medium, the source grid and its contents, the
measurement sphere, the frequency set, the noise model, and the inversion
hyperparameters. All module preconditions (sources strictly inside the grid,
grid strictly inside the surface, at least one frequency) are validated at
load time so the command-line drivers can fail fast with a readable message.

All randomness derives from the single scenario ``seed``; consumers derive
sub-seeds by fixed offsets (noise uses seed + 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import (FrequencySet, Medium, SurfaceMesh, VectorField,
                       VoxelGrid, make_ball_source, make_sphere_mesh)
from .inverse import FistaConfig

__all__ = ["ScenarioError", "SourceSpec", "Scenario", "load_scenario",
           "scenario_from_dict", "scenario_to_dict", "save_scenario"]

SCHEMA_VERSION = 1
NOISE_SEED_OFFSET = 1


class ScenarioError(ValueError):
    """A scenario document is malformed or violates a module precondition."""


@dataclass(frozen=True)
class SourceSpec:
    """One source term: a constant-moment ball or a single-voxel dipole."""

    kind: str                      # "ball" | "dipole"
    center: tuple[float, float, float]
    moment: tuple[float, float, float]
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ball", "dipole"):
            raise ScenarioError(f"unknown source kind {self.kind!r}")
        if self.kind == "ball" and not self.radius > 0:
            raise ScenarioError("ball sources need a positive radius")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "moment", tuple(float(c) for c in self.moment))

    def rasterize(self, grid: VoxelGrid) -> VectorField:
        if self.kind == "ball":
            return make_ball_source(grid, self.center, self.radius, self.moment)
        # Dipole: concentrate the moment in the voxel holding the center, so
        # the grid integral of the field equals the moment.
        values = np.zeros((grid.n_voxels, 3))
        ix, iy, iz = grid.voxel_of(self.center)
        values[grid.linear_index(ix, iy, iz)] = (
            np.array(self.moment) / grid.voxel_volume)
        return VectorField(grid, values)


@dataclass(frozen=True)
class Scenario:
    medium: Medium
    grid: VoxelGrid
    surface_center: tuple[float, float, float]
    surface_radius: float
    surface_points: int
    sources: tuple[SourceSpec, ...]
    freqs: FrequencySet
    noise_level: float = 0.0
    seed: int = 0
    fista: FistaConfig = dataclass_field(default_factory=FistaConfig)
    use_fft: bool = True
    init_mode: str = "zero"        # "zero" | "mean_image"
    output_dir: Optional[str] = None
    file_format: str = "csv"       # "csv" | "bin"

    def __post_init__(self):
        if self.init_mode not in ("zero", "mean_image"):
            raise ScenarioError("init_mode must be 'zero' or 'mean_image'")
        if self.file_format not in ("csv", "bin"):
            raise ScenarioError("file_format must be 'csv' or 'bin'")
        if self.noise_level < 0:
            raise ScenarioError("noise level must be >= 0")
        self._validate_geometry()

    def _validate_geometry(self):
        lo, hi = self.grid.min_corner, self.grid.max_corner
        for src in self.sources:
            c = np.array(src.center)
            r = src.radius if src.kind == "ball" else 0.0
            if np.any(c - r <= lo) or np.any(c + r >= hi):
                raise ScenarioError(
                    f"source at {src.center} does not fit strictly inside the grid")
        center = np.array(self.surface_center)
        corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                            for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
        if np.max(np.linalg.norm(corners - center, axis=1)) >= self.surface_radius:
            raise ScenarioError("grid box must lie strictly inside the surface sphere")

    @property
    def noise_seed(self) -> int:
        return self.seed + NOISE_SEED_OFFSET

    def build_mesh(self) -> SurfaceMesh:
        return make_sphere_mesh(self.surface_center, self.surface_radius,
                                self.surface_points)

    def build_source(self, grid: Optional[VoxelGrid] = None) -> VectorField:
        grid = grid if grid is not None else self.grid
        if not self.sources:
            return VectorField.zeros(grid)
        total = self.sources[0].rasterize(grid)
        for src in self.sources[1:]:
            total = total + src.rasterize(grid)
        return total


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ScenarioError(f"missing key {key!r} in {context}")
    return mapping[key]


def scenario_from_dict(doc: dict) -> Scenario:
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported scenario schema version {version}")

    med = doc.get("medium", {})
    medium = Medium(float(med.get("epsilon0", 1.0)), float(med.get("mu0", 1.0)))

    g = _require(doc, "grid", "scenario")
    try:
        grid = VoxelGrid(tuple(_require(g, "origin", "grid")),
                         float(_require(g, "spacing", "grid")),
                         tuple(_require(g, "dims", "grid")))
    except ValueError as exc:
        raise ScenarioError(f"bad grid: {exc}") from exc

    s = _require(doc, "surface", "scenario")
    radius = float(_require(s, "radius", "surface"))
    n_points = int(_require(s, "n_points", "surface"))
    if radius <= 0 or n_points < 4:
        raise ScenarioError("surface needs a positive radius and >= 4 points")

    sources = []
    for i, entry in enumerate(doc.get("sources", [])):
        kind = entry.get("type", "ball")
        try:
            sources.append(SourceSpec(kind,
                                      tuple(_require(entry, "center", f"source {i}")),
                                      tuple(_require(entry, "moment", f"source {i}")),
                                      float(entry.get("radius", 0.0))))
        except ScenarioError:
            raise
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"bad source {i}: {exc}") from exc

    f = _require(doc, "frequencies", "scenario")
    try:
        if "omegas" in f:
            freqs = FrequencySet(np.asarray(f["omegas"], dtype=float))
        elif "band" in f:
            kmin, kmax = (float(v) for v in f["band"])
            freqs = FrequencySet.from_band(kmin, kmax, int(f.get("count", 1)), medium)
        else:
            raise ScenarioError("frequencies need either 'omegas' or 'band'")
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"bad frequencies: {exc}") from exc

    noise = doc.get("noise", {})
    inv = doc.get("inversion", {})
    try:
        fista = FistaConfig(
            lam=float(inv.get("lambda", 0.0)),
            gamma0=float(inv.get("gamma0", 1.0)),
            eta=float(inv.get("eta", 2.0)),
            max_iters=int(inv.get("max_iters", 500)),
            rel_tol=float(inv.get("rel_tol", 1e-6)),
            momentum=inv.get("momentum", "standard"),
            l1_mode=inv.get("l1_mode", "component"),
        )
    except ValueError as exc:
        raise ScenarioError(f"bad inversion config: {exc}") from exc

    out = doc.get("output", {})
    try:
        return Scenario(
            medium=medium,
            grid=grid,
            surface_center=tuple(s.get("center", (0.0, 0.0, 0.0))),
            surface_radius=radius,
            surface_points=n_points,
            sources=tuple(sources),
            freqs=freqs,
            noise_level=float(noise.get("level", 0.0)),
            seed=int(doc.get("seed", 0)),
            fista=fista,
            use_fft=bool(inv.get("use_fft", True)),
            init_mode=inv.get("init", "zero"),
            output_dir=out.get("dir"),
            file_format=out.get("format", "csv"),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "medium": {"epsilon0": sc.medium.epsilon0, "mu0": sc.medium.mu0},
        "grid": {"origin": list(sc.grid.origin), "spacing": sc.grid.spacing,
                 "dims": list(sc.grid.dims)},
        "surface": {"center": list(sc.surface_center),
                    "radius": sc.surface_radius,
                    "n_points": sc.surface_points},
        "sources": [
            {"type": src.kind, "center": list(src.center),
             "moment": list(src.moment),
             **({"radius": src.radius} if src.kind == "ball" else {})}
            for src in sc.sources
        ],
        "frequencies": {"omegas": sc.freqs.omegas.tolist()},
        "noise": {"level": sc.noise_level},
        "seed": sc.seed,
        "inversion": {
            "lambda": sc.fista.lam,
            "gamma0": sc.fista.gamma0,
            "eta": sc.fista.eta,
            "max_iters": sc.fista.max_iters,
            "rel_tol": sc.fista.rel_tol,
            "momentum": sc.fista.momentum,
            "l1_mode": sc.fista.l1_mode,
            "use_fft": sc.use_fft,
            "init": sc.init_mode,
        },
        "output": {"dir": sc.output_dir, "format": sc.file_format},
    }


def load_scenario(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    return scenario_from_dict(doc)


def save_scenario(sc: Scenario, path):
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2,
                                     sort_keys=True) + "\n")
