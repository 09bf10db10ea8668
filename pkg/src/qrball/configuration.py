"""Assemble and validate the reflecting sphere family of a cube chain.

The family always contains the three coordinate planes (oriented so their
"balls" are the closed negative half-spaces) and the origin sphere S4 whose
radius R makes it orthogonal to the nearest vertex sphere.  Per-cube
families on exposed faces:

    vertex    spheres of radius side*sqrt(3)/3 at face corners (adjacent
              corner pairs along an edge meet at pi/3)
    dome      sphere of radius side*sqrt(10)/6 centered side/3 outside the
              face center: the unique face-sealing sphere orthogonal both to
              the cube's chain ball and to the face's vertex spheres
    ring      four spheres centered on the face axes, orthogonal to the
              vertex spheres, adjacent pairs at pi/3 (quadratic solve)
    center    sphere at the face center orthogonal to the ring
    top_ring  four spheres at the corners of the small square f_s,
              orthogonal to the ring, adjacent pairs at pi/3

Spheres are kept when their center lies in the closed positive octant;
glued faces carry no families and shared corner spheres are deduplicated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from qrball.chainspec import ChainSpec, CubeSpec
from qrball.inversive import (
    GeometryError,
    InversiveSphere,
    J,
    acute_angle,
    intersection_angle,
    inversive_product,
    lift,
    plane_make,
    reflect_in,
    sphere_make,
)
from qrball.words import INFINITY_ORDER, CoxeterPresentation

VERTEX_RADIUS_FACTOR = math.sqrt(3.0) / 3.0
DOME_RADIUS_FACTOR = math.sqrt(10.0) / 6.0
DOME_OFFSET_FACTOR = 5.0 / 6.0  # dome center distance from the cube center
CHAIN_BALL_FACTOR = math.sqrt(5.0 / 12.0)
KEEP_TOL = 1e-9
ANGLE_TOL = 1e-9

FACE_NORMALS = [
    np.array([1.0, 0.0, 0.0]),
    np.array([-1.0, 0.0, 0.0]),
    np.array([0.0, 1.0, 0.0]),
    np.array([0.0, -1.0, 0.0]),
    np.array([0.0, 0.0, 1.0]),
    np.array([0.0, 0.0, -1.0]),
]


class ConfigurationInvalid(GeometryError):
    pass


# ---------------------------------------------------------------------------
# Face-family solvers
# ---------------------------------------------------------------------------

def ring_solution(side=1.0):
    """Ring radius rho and axis offset a for a face of the given side.

    For the unit face the symmetric ansatz (centers at (+-a, 0), (0, +-a),
    orthogonal to the corner spheres, adjacent pairs at pi/3 exterior angle)
    reduces to 0.5 rho^2 - sqrt(1.5) rho + 1/6 = 0 with a = rho sqrt(1.5);
    the small root keeps the ring inside the face.
    """
    s15 = math.sqrt(1.5)
    disc = 1.5 - 4.0 * 0.5 * (1.0 / 6.0)
    rho = (s15 - math.sqrt(disc)) / 1.0  # small root of 0.5 x^2 - s15 x + 1/6
    rho_big = (s15 + math.sqrt(disc)) / 1.0
    assert rho < rho_big
    return rho * side, s15 * rho * side


def ring_solution_newton(side=1.0, tol=1e-14):
    """Independent 2-unknown Newton solve of the ring constraints."""
    def residuals(rho, a):
        # adjacency: centers (a,0), (0,a) at exterior angle pi/3
        r1 = 2.0 * a * a - 3.0 * rho * rho
        # orthogonality to corner sphere at (1/2, 1/2), radius sqrt(3)/3
        r2 = (0.5 - a) ** 2 + 0.25 - rho * rho - 1.0 / 3.0
        return np.array([r1, r2])

    x = np.array([0.2, 0.2])  # grid-scan seed near the small root
    for _ in range(60):
        rho, a = x
        f = residuals(rho, a)
        jac = np.array([[-6.0 * rho, 4.0 * a], [-2.0 * rho, -2.0 * (0.5 - a)]])
        step = np.linalg.solve(jac, f)
        x = x - step
        if np.max(np.abs(step)) < tol:
            break
    rho, a = x
    return rho * side, a * side


def center_solution(side=1.0):
    """Radius of the face-center sphere orthogonal to the ring."""
    rho, a = ring_solution(side)
    rad2 = a * a - rho * rho
    if rad2 <= 0:
        raise ConfigurationInvalid("negative radicand in center-sphere solve")
    return math.sqrt(rad2)


def top_ring_solution(side=1.0):
    """Top-ring half-spacing b and radius rho2 (centers at (+-b, +-b)).

    Solves  4 b^2 = 3 rho2^2  (adjacent pi/3) together with
    |(b,b)-(a,0)|^2 = rho2^2 + rho^2  (orthogonality to the first ring);
    elimination gives b^2 - 3 a b + 0.75 rho^2 = 0, small root.
    """
    rho, a = ring_solution(1.0)
    disc = 9.0 * a * a - 3.0 * rho * rho
    if disc <= 0:
        raise ConfigurationInvalid("negative radicand in top-ring solve")
    b = (3.0 * a - math.sqrt(disc)) / 2.0
    rho2 = 2.0 * b / math.sqrt(3.0)
    return b * side, rho2 * side


def top_ring_solution_newton(side=1.0, tol=1e-14):
    """Independent Newton solve of the top-ring system."""
    rho, a = ring_solution(1.0)

    def residuals(b, r2):
        return np.array(
            [
                4.0 * b * b - 3.0 * r2 * r2,
                (b - a) ** 2 + b * b - r2 * r2 - rho * rho,
            ]
        )

    x = np.array([0.05, 0.05])
    for _ in range(80):
        b, r2 = x
        f = residuals(b, r2)
        jac = np.array(
            [[8.0 * b, -6.0 * r2], [2.0 * (b - a) + 2.0 * b, -2.0 * r2]]
        )
        step = np.linalg.solve(jac, f)
        x = x - step
        if np.max(np.abs(step)) < tol:
            break
    b, r2 = x
    return b * side, r2 * side


# ---------------------------------------------------------------------------
# Cube / face geometry
# ---------------------------------------------------------------------------

def cube_corners(cube: CubeSpec):
    c = np.array(cube.center)
    h = cube.side / 2.0
    return [
        c + h * np.array([sx, sy, sz])
        for sx in (-1, 1)
        for sy in (-1, 1)
        for sz in (-1, 1)
    ]


def face_center(cube: CubeSpec, face_idx):
    return np.array(cube.center) + (cube.side / 2.0) * FACE_NORMALS[face_idx]


def face_corners(cube: CubeSpec, face_idx):
    n = FACE_NORMALS[face_idx]
    axis = int(np.argmax(np.abs(n)))
    u = np.zeros(3)
    v = np.zeros(3)
    u[(axis + 1) % 3] = 1.0
    v[(axis + 2) % 3] = 1.0
    fc = face_center(cube, face_idx)
    h = cube.side / 2.0
    return [fc + h * (su * u + sv * v) for su in (-1, 1) for sv in (-1, 1)], u, v


def glued_faces(spec: ChainSpec):
    """Map (cube index, face index) -> True for faces glued to a neighbor."""
    glued = {}
    for i, j in spec.gluings:
        a, b = spec.cubes[i], spec.cubes[j]
        d = np.array(b.center) - np.array(a.center)
        axis = int(np.argmax(np.abs(d)))
        sign = 1 if d[axis] > 0 else -1
        face_a = axis * 2 + (0 if sign > 0 else 1)
        face_b = axis * 2 + (1 if sign > 0 else 0)
        glued[(i, face_a)] = True
        glued[(j, face_b)] = True
    return glued


def exposed_faces(spec: ChainSpec):
    glued = glued_faces(spec)
    out = []
    for ci in range(len(spec.cubes)):
        for fi in range(6):
            if not glued.get((ci, fi), False):
                out.append((ci, fi))
    return out


def in_positive_octant(p, tol=KEEP_TOL):
    return bool(np.all(np.asarray(p) >= -tol))


# ---------------------------------------------------------------------------
# Sphere families
# ---------------------------------------------------------------------------

def vertex_spheres(cube: CubeSpec, cube_idx, exposed):
    """Corner spheres of the cube's exposed faces, kept in the octant."""
    r = VERTEX_RADIUS_FACTOR * cube.side
    out = {}
    for fi in exposed:
        corners, _, _ = face_corners(cube, fi)
        for p in corners:
            if not in_positive_octant(p):
                continue
            key = tuple(np.round(p, 9))
            if key not in out:
                out[key] = sphere_make(p, r, role="vertex", tags=(f"cube{cube_idx}",))
            else:
                old = out[key]
                out[key] = old.with_role(old.role, old.tags + (f"cube{cube_idx}",))
    return out


def dome_sphere(cube: CubeSpec, cube_idx, face_idx):
    """Face-sealing sphere orthogonal to the chain ball and the face corners.

    Orthogonality to the chain ball (radius side*sqrt(5/12) at the cube
    center) and to the four corner spheres of the face forces the center
    side*5/6 from the cube center along the face normal and the radius
    side*sqrt(10)/6.
    """
    c = np.array(cube.center) + DOME_OFFSET_FACTOR * cube.side * FACE_NORMALS[face_idx]
    if not in_positive_octant(c):
        return None
    return sphere_make(
        c,
        DOME_RADIUS_FACTOR * cube.side,
        role="dome",
        tags=(f"cube{cube_idx}", f"face{face_idx}"),
    )


def face_ring_spheres(cube: CubeSpec, cube_idx, face_idx):
    """Four ring spheres on the face axes (orthogonal to corner spheres)."""
    rho, a = ring_solution(cube.side)
    fc = face_center(cube, face_idx)
    _, u, v = face_corners(cube, face_idx)
    out = []
    for d in (u, -u, v, -v):
        p = fc + a * d
        if in_positive_octant(p):
            out.append(
                sphere_make(p, rho, role="ring", tags=(f"cube{cube_idx}", f"face{face_idx}"))
            )
    return out


def face_center_sphere(cube: CubeSpec, cube_idx, face_idx):
    rc = center_solution(cube.side)
    fc = face_center(cube, face_idx)
    if not in_positive_octant(fc):
        return None
    return sphere_make(fc, rc, role="center", tags=(f"cube{cube_idx}", f"face{face_idx}"))


def top_ring_spheres(cube: CubeSpec, cube_idx, face_idx):
    """Four spheres at the corners of the small square f_s on a top face."""
    b, rho2 = top_ring_solution(cube.side)
    fc = face_center(cube, face_idx)
    _, u, v = face_corners(cube, face_idx)
    out = []
    for su in (-1, 1):
        for sv in (-1, 1):
            p = fc + b * (su * u + sv * v)
            if in_positive_octant(p):
                out.append(
                    sphere_make(
                        p, rho2, role="top-ring", tags=(f"cube{cube_idx}", f"face{face_idx}")
                    )
                )
    return out


def chain_ball(cube: CubeSpec):
    """Ball centered at the cube orthogonal to its vertex spheres."""
    return sphere_make(cube.center, CHAIN_BALL_FACTOR * cube.side, role="chain-ball")


def solve_R(vertex_list):
    """Radius of S4: orthogonal to the vertex sphere nearest the origin.

    R = sqrt(d0^2 - r_v^2) where d0 is the distance from the origin to the
    nearest kept vertex-sphere center and r_v that sphere's radius.
    """
    best = None
    for s in vertex_list:
        d = float(np.linalg.norm(s.center))
        if best is None or d < best[0]:
            best = (d, s)
    if best is None:
        raise ConfigurationInvalid("no vertex spheres to anchor S4")
    d0, s = best
    rad2 = d0 * d0 - s.radius**2
    if rad2 <= 0:
        raise ConfigurationInvalid("nearest vertex sphere too close to the origin")
    return math.sqrt(rad2)


@dataclass
class SphereFamily:
    """The assembled configuration: walls, S4 and per-cube spheres."""

    spec: ChainSpec
    spheres: list  # InversiveSphere, walls first, then S4, then cube spheres
    R: float

    @property
    def walls(self):
        return self.spheres[:3]

    @property
    def s4(self):
        return self.spheres[3]

    @property
    def cube_spheres(self):
        return self.spheres[4:]

    def roles(self):
        return [s.role for s in self.spheres]

    def __len__(self):
        return len(self.spheres)

    def to_json(self):
        out = []
        for s in self.spheres:
            rec = {"role": s.role, "tags": list(s.tags), "v": [float(x) for x in s.v]}
            if s.is_plane:
                rec["normal"] = [float(x) for x in s.normal]
                rec["offset"] = float(s.offset)
            else:
                rec["center"] = [float(x) for x in s.center]
                rec["radius"] = float(s.radius)
            out.append(rec)
        return {"name": self.spec.name, "R": self.R, "spheres": out}


def assemble_sigma(spec: ChainSpec):
    """Build the full reflecting family for a chain spec."""
    glued = glued_faces(spec)
    all_vertex = {}
    extras = []
    for ci, cube in enumerate(spec.cubes):
        exposed = [fi for fi in range(6) if not glued.get((ci, fi), False)]
        if "vertex" in spec.families:
            for key, s in vertex_spheres(cube, ci, exposed).items():
                if key in all_vertex:
                    old = all_vertex[key]
                    all_vertex[key] = old.with_role(old.role, tuple(sorted(set(old.tags + s.tags))))
                else:
                    all_vertex[key] = s
        for fi in exposed:
            if "dome" in spec.families:
                d = dome_sphere(cube, ci, fi)
                if d is not None:
                    extras.append(d)
            if "ring" in spec.families:
                extras.extend(face_ring_spheres(cube, ci, fi))
            if "center" in spec.families:
                # the +z face of an end cube is a "top" face: it carries the
                # second ring (whose centers are the small-cube corners)
                # instead of the center sphere
                top = "top_ring" in spec.families and cube.end_cube and fi == 4
                if top:
                    extras.extend(top_ring_spheres(cube, ci, fi))
                else:
                    c = face_center_sphere(cube, ci, fi)
                    if c is not None:
                        extras.append(c)

    vertex_list = list(all_vertex.values())
    R = solve_R(vertex_list)
    walls = [
        plane_make((-1.0, 0.0, 0.0), 0.0, role="coordinate-plane", tags=("S1",)),
        plane_make((0.0, -1.0, 0.0), 0.0, role="coordinate-plane", tags=("S2",)),
        plane_make((0.0, 0.0, -1.0), 0.0, role="coordinate-plane", tags=("S3",)),
    ]
    s4 = sphere_make((0.0, 0.0, 0.0), R, role="S4")
    spheres = walls + [s4] + sorted(
        vertex_list + extras, key=lambda s: (s.role, tuple(np.round(s.center, 9)))
    )
    return SphereFamily(spec=spec, spheres=spheres, R=R)


# ---------------------------------------------------------------------------
# Pairwise validation and the sphere-level Coxeter matrix
# ---------------------------------------------------------------------------

STRICT_ORDERS = (2, 3)
PERMISSIVE_MAX_ORDER = 12


def classify_pair(s1, s2, tol=ANGLE_TOL):
    """('disjoint', None) | ('order', m) | raises on invalid angles/tangency."""
    kind, theta = intersection_angle(s1, s2, tol=tol)
    if kind == "disjoint":
        return ("disjoint", None)
    if kind == "tangent":
        raise ConfigurationInvalid("tangent sphere pair")
    acute = min(theta, math.pi - theta)
    m = math.pi / acute
    if abs(m - round(m)) > 1e-6:
        raise ConfigurationInvalid(f"angle pi/{m:.6f} is not of the form pi/m")
    return ("order", int(round(m)))


def coxeter_matrix(family: SphereFamily, tol=ANGLE_TOL):
    """Sphere-level Coxeter matrix; validates the pairwise angle set."""
    n = len(family.spheres)
    mat = np.ones((n, n), dtype=int)
    offending = []
    for i in range(n):
        for j in range(i + 1, n):
            try:
                kind, m = classify_pair(family.spheres[i], family.spheres[j], tol)
            except ConfigurationInvalid as exc:
                offending.append((i, j, str(exc)))
                continue
            if kind == "disjoint":
                mat[i, j] = mat[j, i] = INFINITY_ORDER
            else:
                if family.spec.angle_policy == "strict" and m not in STRICT_ORDERS:
                    offending.append((i, j, f"order {m} outside strict set"))
                if m > PERMISSIVE_MAX_ORDER:
                    offending.append((i, j, f"order {m} too large"))
                mat[i, j] = mat[j, i] = m
    if offending:
        lines = ", ".join(
            f"({i}:{family.spheres[i].role}, {j}:{family.spheres[j].role}) {msg}"
            for i, j, msg in offending[:8]
        )
        raise ConfigurationInvalid(f"configuration invalid: {lines}")
    return mat


def angle_table(family: SphereFamily, tol=ANGLE_TOL):
    """Rows (i, j, role_i, role_j, kind, exterior_angle, order) for all pairs."""
    rows = []
    n = len(family.spheres)
    for i in range(n):
        for j in range(i + 1, n):
            kind, theta = intersection_angle(family.spheres[i], family.spheres[j], tol=tol)
            order = None
            if kind == "angle":
                acute = min(theta, math.pi - theta)
                m = math.pi / acute
                order = int(round(m)) if abs(m - round(m)) < 1e-6 else None
            rows.append(
                (
                    i,
                    j,
                    family.spheres[i].role,
                    family.spheres[j].role,
                    kind,
                    theta,
                    order,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Complement component counting and surface coverage
# ---------------------------------------------------------------------------

def _side_matrix(spheres, points):
    """Signed membership of each point against each sphere (n_pts, n_spheres)."""
    pts = np.asarray(points, dtype=float)
    n2 = np.sum(pts * pts, axis=1)
    P = np.column_stack([pts, (n2 - 1.0) / 2.0, (n2 + 1.0) / 2.0])
    V = np.array([s.v for s in spheres])
    return P @ (J @ V.T)


def validate_complement(family: SphereFamily, resolution=48, margin=1.2, box=None):
    """Flood-fill count of complement components on a cubic grid.

    Returns a report dict with the component count, the bounded component
    count, and whether the count is stable when the resolution is halved.
    """
    report = {"resolution": int(resolution)}
    counts = {}
    for res in (resolution, resolution // 2):
        labels, n, bounded = _complement_components(family, res, margin, box)
        counts[res] = (n, bounded)
    report["components"] = counts[resolution][0]
    report["bounded_components"] = counts[resolution][1]
    report["stable"] = counts[resolution] == counts[resolution // 2]
    if not report["stable"]:
        report["coarse_components"] = counts[resolution // 2][0]
    return report


def _complement_components(family, res, margin, box):
    from scipy import ndimage

    if box is None:
        hi = _config_extent(family) * margin
    else:
        hi = box
    axis = np.linspace(hi / (2 * res), hi - hi / (2 * res), res)
    X, Y, Z = np.meshgrid(axis, axis, axis, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    sides = _side_matrix(family.spheres, pts)
    exterior = np.all(sides < 0.0, axis=1).reshape(res, res, res)
    labels, n = ndimage.label(exterior)
    if n == 0:
        return labels, 0, 0
    # components touching a far box face reach infinity
    far = set(np.unique(labels[-1, :, :])) | set(np.unique(labels[:, -1, :])) | set(
        np.unique(labels[:, :, -1])
    )
    far.discard(0)
    bounded = n - len(far)
    return labels, n, bounded


def _config_extent(family):
    hi = family.R
    for s in family.cube_spheres:
        hi = max(hi, float(np.max(np.abs(s.center))) + s.radius)
    return float(hi)


def coverage_check(family: SphereFamily, samples_per_face=400, tol=1e-9, rng=None):
    """Fraction of exposed cube-surface samples covered by some ball.

    Samples the boundary of the cube union inside the open octant and tests
    membership in at least one closed ball (walls and S4 included).
    """
    rng = rng or np.random.default_rng(0)
    spec = family.spec
    pts = []
    glued = glued_faces(spec)
    for ci, cube in enumerate(spec.cubes):
        for fi in range(6):
            if glued.get((ci, fi), False):
                continue
            corners, u, v = face_corners(cube, fi)
            fc = face_center(cube, fi)
            h = cube.side / 2.0
            uv = rng.uniform(-h, h, size=(samples_per_face, 2))
            face_pts = fc + uv[:, :1] * u + uv[:, 1:] * v
            keep = np.all(face_pts > tol, axis=1)
            # exclude points inside another cube of the chain (mounted joints)
            for cj, other in enumerate(spec.cubes):
                if cj == ci:
                    continue
                oc = np.array(other.center)
                inside = np.all(np.abs(face_pts - oc) < other.side / 2.0 - 1e-12, axis=1)
                keep &= ~inside
            pts.append(face_pts[keep])
    pts = np.concatenate(pts, axis=0)
    sides = _side_matrix(family.spheres, pts)
    covered = np.any(sides >= -tol, axis=1)
    frac = float(np.mean(covered))
    return {
        "samples": int(len(pts)),
        "covered_fraction": frac,
        "covered": bool(frac >= 1.0 - 1e-12),
        "uncovered_example": None
        if frac >= 1.0 - 1e-12
        else [float(x) for x in pts[~covered][0]],
    }


# ---------------------------------------------------------------------------
# Channel faces: the polyhedron structure carried by each sphere
# ---------------------------------------------------------------------------

@dataclass
class Face:
    """A connected boundary patch of the channel on one sphere."""

    sphere_index: int
    face_index: int
    samples: np.ndarray  # (n, 3) points on the carrier sphere
    label: str = ""


@dataclass
class ChannelStructure:
    """Faces of the channel polyhedron plus abstract group data.

    generators: one per face, then one per faceless sphere (so the abstract
    group surjects onto all reflections of the family).  gen_sphere[i] is
    the carrier sphere index of generator i.
    """

    family: SphereFamily
    faces: list
    gen_sphere: list
    presentation: CoxeterPresentation
    adjacency: np.ndarray

    @property
    def n_faces(self):
        return len(self.faces)

    def generator_label(self, g):
        role = self.family.spheres[self.gen_sphere[g]].role
        if g < len(self.faces):
            return f"{role}[s{self.gen_sphere[g]}f{self.faces[g].face_index}]"
        return f"{role}[s{self.gen_sphere[g]}]"

    def same_carrier_pairs(self):
        """Generator pairs carried by one sphere: exact kernel witnesses."""
        bysphere = {}
        for g, si in enumerate(self.gen_sphere):
            bysphere.setdefault(si, []).append(g)
        return [
            (a, b)
            for gens in bysphere.values()
            for ai, a in enumerate(gens)
            for b in gens[ai + 1 :]
        ]


def in_cube_union(spec: ChainSpec, pts, shrink=0.0):
    pts = np.atleast_2d(pts)
    inside = np.zeros(len(pts), dtype=bool)
    for cube in spec.cubes:
        c = np.array(cube.center)
        h = cube.side / 2.0 - shrink
        inside |= np.all(np.abs(pts - c) <= h, axis=1)
    return inside


def channel_membership(family: SphereFamily, pts, tol=1e-12):
    """Inside the cube union, inside the open octant, outside every ball."""
    pts = np.atleast_2d(pts)
    ok = in_cube_union(family.spec, pts)
    ok &= np.all(pts > 0.0, axis=1)
    sides = _side_matrix(family.spheres, pts)
    ok &= np.all(sides < -tol, axis=1)
    return ok


def _fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def _sphere_surface_samples(family, si, n_round, plane_pitch):
    s = family.spheres[si]
    if s.is_plane:
        hi = _config_extent(family) * 1.1
        axis = int(np.argmax(np.abs(s.normal)))
        ticks = np.arange(plane_pitch / 2, hi, plane_pitch)
        A, B = np.meshgrid(ticks, ticks, indexing="ij")
        pts = np.zeros((A.size, 3))
        others = [k for k in range(3) if k != axis]
        pts[:, others[0]] = A.ravel()
        pts[:, others[1]] = B.ravel()
        pts[:, axis] = 0.0
        return pts, plane_pitch
    n = n_round
    pts = s.center + s.radius * _fibonacci_sphere(n)
    pitch = s.radius * math.sqrt(4.0 * math.pi / n)
    return pts, pitch


def _gradient_dirs(sphere, pts):
    v = sphere.v
    g = v[:3][None, :] + (v[3] - v[4]) * pts
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    return g / np.maximum(norms, 1e-300)


def detect_faces(
    family: SphereFamily,
    n_round=4000,
    n_s4=120000,
    plane_pitch=0.05,
    offset=2e-3,
    link_factor=3.0,
):
    """Find the connected channel-boundary patches on every sphere.

    For each sphere, samples of its surface are kept when the point is not
    inside any other ball and a small outward offset lands in the channel;
    the kept samples are clustered by single linkage into faces.
    """
    faces = []
    side_vec = np.array([s.v for s in family.spheres])
    for si, s in enumerate(family.spheres):
        n = n_s4 if s.role == "S4" else n_round
        pts, pitch = _sphere_surface_samples(family, si, n, plane_pitch)
        if len(pts) == 0:
            continue
        sides = _side_matrix(family.spheres, pts)
        others = np.ones(len(family.spheres), dtype=bool)
        others[si] = False
        clear = np.all(sides[:, others] < -1e-9, axis=1)
        pts = pts[clear]
        if len(pts) == 0:
            continue
        dirs = _gradient_dirs(s, pts)
        probe = pts - offset * dirs  # against the gradient: out of the ball
        ok = channel_membership(family, probe)
        pts = pts[ok]
        if len(pts) == 0:
            continue
        for cluster in _single_linkage(pts, link_factor * pitch):
            faces.append(Face(sphere_index=si, face_index=0, samples=cluster))
    # face indices per sphere, in deterministic order
    seen = {}
    for f in faces:
        f.face_index = seen.get(f.sphere_index, 0)
        seen[f.sphere_index] = f.face_index + 1
        f.label = f"s{f.sphere_index}f{f.face_index}"
    return faces


def _single_linkage(pts, threshold):
    """Cluster points by the union of balls of radius threshold."""
    n = len(pts)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    # grid hashing keeps this near-linear
    cell = {}
    inv = 1.0 / threshold
    keys = np.floor(pts * inv).astype(np.int64)
    for i, k in enumerate(map(tuple, keys)):
        cell.setdefault(k, []).append(i)
    for i in range(n):
        ki = keys[i]
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    for j in cell.get((ki[0] + dx, ki[1] + dy, ki[2] + dz), ()):
                        if j <= i:
                            continue
                        if np.sum((pts[i] - pts[j]) ** 2) <= threshold * threshold:
                            parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [pts[idx] for idx in groups.values()]


def face_adjacency(family: SphereFamily, faces, n_circle=720, offset=2e-3, tol=1e-9):
    """Adjacency of channel faces along exposed intersection-circle arcs."""
    nf = len(faces)
    by_sphere = {}
    for fi, f in enumerate(faces):
        by_sphere.setdefault(f.sphere_index, []).append(fi)
    adj = np.zeros((nf, nf), dtype=bool)
    n = len(family.spheres)
    for i in range(n):
        for j in range(i + 1, n):
            if i not in by_sphere or j not in by_sphere:
                continue
            kind, _ = intersection_angle(family.spheres[i], family.spheres[j], tol=tol)
            if kind != "angle":
                continue
            from qrball.inversive import Circle3

            circle = Circle3(family.spheres[i], family.spheres[j])
            pts = np.array(circle.sample_points(n_circle))
            if len(pts) == 0:
                continue
            sides = _side_matrix(family.spheres, pts)
            others = np.ones(n, dtype=bool)
            others[i] = others[j] = False
            clear = np.all(sides[:, others] < -tol, axis=1)
            pts = pts[clear]
            if len(pts) == 0:
                continue
            d_i = _gradient_dirs(family.spheres[i], pts)
            d_j = _gradient_dirs(family.spheres[j], pts)
            probe = pts - offset * (d_i + d_j)
            ok = channel_membership(family, probe)
            pts = pts[ok]
            for p in pts:
                fi = _nearest_face(p, faces, by_sphere[i])
                fj = _nearest_face(p, faces, by_sphere[j])
                if fi is not None and fj is not None:
                    adj[fi, fj] = adj[fj, fi] = True
    return adj


def _nearest_face(p, faces, candidates, cap=0.35):
    best, best_d = None, cap
    for fi in candidates:
        d = float(np.min(np.linalg.norm(faces[fi].samples - p, axis=1)))
        if d < best_d:
            best, best_d = fi, d
    return best


def channel_structure(family: SphereFamily, faces=None, adjacency=None, **kw):
    """Faces + abstract Coxeter presentation on face generators.

    m(f, g) is the sphere-pair order when the faces are adjacent along the
    channel boundary and infinity otherwise; faceless spheres contribute
    relation-free generators so every reflection has an abstract preimage.
    """
    if faces is None:
        faces = detect_faces(family, **kw)
    if adjacency is None:
        adjacency = face_adjacency(family, faces)
    gen_sphere = [f.sphere_index for f in faces]
    faced = set(gen_sphere)
    for si in range(len(family.spheres)):
        if si not in faced:
            gen_sphere.append(si)
    ng = len(gen_sphere)
    mat = np.ones((ng, ng), dtype=int)
    for a in range(ng):
        for b in range(a + 1, ng):
            m = INFINITY_ORDER
            if a < len(faces) and b < len(faces) and adjacency[a, b]:
                si, sj = gen_sphere[a], gen_sphere[b]
                kind, order = classify_pair(family.spheres[si], family.spheres[sj])
                if kind == "order":
                    m = order
            mat[a, b] = mat[b, a] = m
    pres = CoxeterPresentation(tuple(map(tuple, mat.tolist())))
    return ChannelStructure(
        family=family,
        faces=faces,
        gen_sphere=gen_sphere,
        presentation=pres,
        adjacency=adjacency,
    )
