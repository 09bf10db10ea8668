"""Declarative cube-chain specifications and their JSON form.

A chain spec lists axis-aligned cubes (center, side), which consecutive
pairs are glued, which sphere families to place on exposed faces, and how
the free radius R of the origin sphere is fixed.  The bundled specs are:

    reference   one floating unit cube sealed by vertex + dome spheres;
                every sphere pair is disjoint or meets at pi/2 or pi/3.
    loop        eleven straddling unit cubes arcing from the x2-axis over
                the x3-axis to the x1-axis, vertex spheres only; the origin
                sphere plugs both end cubes.  Wall crossings at pi/6 make
                this config permissive-only.
    paper_full  a unit cube with ring / center / top-ring families and a
                mounted small cube, following the published construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np


@dataclass(frozen=True)
class CubeSpec:
    center: tuple
    side: float
    end_cube: bool = False

    def __post_init__(self):
        if self.side <= 0:
            raise ValueError("cube side must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class ChainSpec:
    name: str
    cubes: tuple
    gluings: tuple = ()  # pairs (i, j) of cube indices sharing a face
    families: tuple = ("vertex",)  # subset of {vertex, dome, ring, center, top_ring}
    angle_policy: str = "strict"  # strict: {pi/2, pi/3}; permissive: pi/m
    seal_note: str = ""

    def __post_init__(self):
        object.__setattr__(
            self, "cubes", tuple(c if isinstance(c, CubeSpec) else CubeSpec(**c) for c in self.cubes)
        )
        object.__setattr__(self, "gluings", tuple(tuple(g) for g in self.gluings))
        object.__setattr__(self, "families", tuple(self.families))
        if self.angle_policy not in ("strict", "permissive"):
            raise ValueError("angle_policy must be 'strict' or 'permissive'")
        ends = sum(1 for c in self.cubes if c.end_cube)
        if ends == 0:
            raise ValueError("at least one end cube must be flagged")
        for i, j in self.gluings:
            if not _share_full_face(self.cubes[i], self.cubes[j]):
                raise ValueError(f"cubes {i} and {j} do not share a full face")

    def to_json(self):
        return {
            "name": self.name,
            "cubes": [
                {"center": list(c.center), "side": c.side, "end_cube": c.end_cube}
                for c in self.cubes
            ],
            "gluings": [list(g) for g in self.gluings],
            "families": list(self.families),
            "angle_policy": self.angle_policy,
            "seal_note": self.seal_note,
        }

    @staticmethod
    def from_json(doc):
        return ChainSpec(
            name=doc["name"],
            cubes=tuple(CubeSpec(**c) for c in doc["cubes"]),
            gluings=tuple(tuple(g) for g in doc.get("gluings", [])),
            families=tuple(doc.get("families", ["vertex"])),
            angle_policy=doc.get("angle_policy", "strict"),
            seal_note=doc.get("seal_note", ""),
        )


def _share_full_face(a: CubeSpec, b: CubeSpec):
    """Glued pair: equal sides, centers one side apart along one axis."""
    if abs(a.side - b.side) > 1e-12:
        # mounted joint: the smaller cube sits centered on a face of the larger
        small, big = (a, b) if a.side < b.side else (b, a)
        d = np.array(small.center) - np.array(big.center)
        axis = int(np.argmax(np.abs(d)))
        on_axis = abs(abs(d[axis]) - (big.side + small.side) / 2.0) < 1e-9
        centered = all(abs(d[k]) < 1e-9 for k in range(3) if k != axis)
        return on_axis and centered
    d = np.array(a.center) - np.array(b.center)
    axis = int(np.argmax(np.abs(d)))
    on_axis = abs(abs(d[axis]) - a.side) < 1e-9
    flush = all(abs(d[k]) < 1e-9 for k in range(3) if k != axis)
    return on_axis and flush


def load_spec(path_or_name):
    """Load a ChainSpec from a JSON file path or a bundled config name."""
    name = str(path_or_name)
    if name.endswith(".json"):
        with open(name, "r", encoding="utf-8") as fh:
            return ChainSpec.from_json(json.load(fh))
    ref = resources.files("qrball").joinpath(f"configs/{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        return ChainSpec.from_json(json.load(fh))


def save_spec(spec: ChainSpec, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def reference_spec():
    """One floating unit cube; strict angle set {pi/2, pi/3}."""
    return ChainSpec(
        name="reference",
        cubes=(CubeSpec(center=(1.5, 1.5, 1.5), side=1.0, end_cube=True),),
        gluings=(),
        families=("vertex", "dome"),
        angle_policy="strict",
        seal_note="single-cube tube sealed by vertex and dome spheres",
    )


def loop_spec():
    """Eleven straddling unit cubes arcing between two octant axes."""
    centers = (
        [(0.0, 2.0, float(k)) for k in range(0, 4)]  # up the x2-axis column
        + [(0.0, 1.0, 3.0), (0.0, 0.0, 3.0)]  # across toward the x3-axis
        + [(1.0, 0.0, 3.0), (2.0, 0.0, 3.0)]  # across toward the x1 side
        + [(2.0, 0.0, float(k)) for k in (2, 1, 0)]  # down to the x1-axis
    )
    cubes = tuple(
        CubeSpec(center=c, side=1.0, end_cube=(i in (0, len(centers) - 1)))
        for i, c in enumerate(centers)
    )
    gluings = tuple((i, i + 1) for i in range(len(centers) - 1))
    return ChainSpec(
        name="loop",
        cubes=cubes,
        gluings=gluings,
        families=("vertex",),
        angle_policy="permissive",
        seal_note=(
            "vertex spheres only; channel sealing is combinatorial "
            "(cube union), wall crossings occur at pi/6"
        ),
    )


def paper_full_spec():
    """Unit cube with the full ring construction and a mounted small cube.

    The small-cube side is fixed by the top-ring solve (about 0.0627 of the
    unit side); this config exercises the published sphere families and is
    reported honestly, it is not expected to pass strict validation.
    """
    from qrball.configuration import top_ring_solution

    b, _ = top_ring_solution(1.0)
    side = 2.0 * b
    base = (1.5, 1.5, 1.5)
    return ChainSpec(
        name="paper_full",
        cubes=(
            CubeSpec(center=base, side=1.0, end_cube=True),
            CubeSpec(center=(base[0], base[1], base[2] + 0.5 + side / 2.0), side=side),
        ),
        gluings=((0, 1),),
        families=("vertex", "ring", "center", "top_ring"),
        angle_policy="permissive",
        seal_note="published ring construction at desk scale",
    )
