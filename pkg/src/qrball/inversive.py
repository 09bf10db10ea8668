"""Inversive-coordinate engine for spheres and Mobius maps of compactified R^3.

An oriented round sphere or plane is a unit vector v in R^{4,1} with respect
to the Lorentz form  <u, v> = u1 v1 + u2 v2 + u3 v3 + u4 v4 - u5 v5.

    sphere, center c, radius r > 0:
        v = (c/r, (|c|^2 - r^2 - 1)/(2r), (|c|^2 - r^2 + 1)/(2r))
    plane, unit normal n, offset d (points x with n.x = d):
        v = (n, d, d)

With this embedding <v, v> = 1, a point x lifts to the light-cone vector
P(x) = (x, (|x|^2-1)/2, (|x|^2+1)/2), and <P(x), v> = -(|x-c|^2 - r^2)/(2r),
so the "inside" of the sphere is the positive side.  The inversive product
of two spheres is (r1^2 + r2^2 - d^2)/(2 r1 r2) = -cos(theta) for the
exterior dihedral angle theta.  Mobius maps are 5x5 matrices preserving the
form; reflection in v is R = I - 2 v v^T J.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Lorentz form matrix, signature (4, 1).
J = np.diag([1.0, 1.0, 1.0, 1.0, -1.0])

CONSTRUCT_TOL = 1e-12
FORM_TOL = 1e-8
IDENTITY_TOL = 1e-8
INVOLUTION_TOL = 1e-10
PLANE_TOL = 1e-9
# Renormalize a product against the form after this many compositions.
RENORM_EVERY = 16


class GeometryError(ValueError):
    pass


class _PointAtInfinity:
    """Canonical marker for the point at infinity of compactified R^3."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"


INFINITY = _PointAtInfinity()


def lorentz_dot(u, v):
    return float(u[0] * v[0] + u[1] * v[1] + u[2] * v[2] + u[3] * v[3] - u[4] * v[4])


def lift(p):
    """Light-cone lift of a point (or INFINITY) of compactified R^3."""
    if p is INFINITY:
        return np.array([0.0, 0.0, 0.0, 1.0, 1.0])
    p = np.asarray(p, dtype=float)
    n2 = float(p @ p)
    return np.array([p[0], p[1], p[2], (n2 - 1.0) / 2.0, (n2 + 1.0) / 2.0])


def unlift(v, inf_tol=1e-13):
    """Inverse of lift: projective light-cone vector -> point or INFINITY."""
    scale = v[4] - v[3]
    norm = np.max(np.abs(v))
    if norm == 0.0:
        raise GeometryError("zero light-cone vector")
    if abs(scale) <= inf_tol * norm:
        return INFINITY
    return np.array([v[0], v[1], v[2]]) / scale


@dataclass(frozen=True)
class InversiveSphere:
    """Oriented round 2-sphere or plane, stored as a unit Lorentz vector."""

    v: np.ndarray
    role: str = ""
    tags: tuple = ()

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float)
        n = lorentz_dot(v, v)
        if n <= 0:
            raise GeometryError("vector does not define a real sphere")
        if abs(n - 1.0) > CONSTRUCT_TOL:
            v = v / math.sqrt(n)
        object.__setattr__(self, "v", v)

    @property
    def is_plane(self):
        return abs(self.v[4] - self.v[3]) <= PLANE_TOL

    @property
    def radius(self):
        if self.is_plane:
            return math.inf
        return abs(1.0 / (self.v[4] - self.v[3]))

    @property
    def center(self):
        if self.is_plane:
            raise GeometryError("plane has no center")
        return np.array(self.v[:3]) / (self.v[4] - self.v[3])

    @property
    def normal(self):
        if not self.is_plane:
            raise GeometryError("sphere has no normal")
        return np.array(self.v[:3])

    @property
    def offset(self):
        if not self.is_plane:
            raise GeometryError("sphere has no offset")
        return float(self.v[3])

    def side(self, p):
        """Signed membership: positive inside the ball, ~0 on the sphere."""
        return lorentz_dot(lift(p), self.v)

    def contains_point(self, p, tol=1e-9):
        return abs(self.side(p)) <= tol

    def strictly_inside(self, p, tol=0.0):
        return self.side(p) > tol

    def with_role(self, role, tags=()):
        return InversiveSphere(self.v.copy(), role=role, tags=tuple(tags))

    def __repr__(self):
        if self.is_plane:
            return f"Plane(n={self.normal.round(6)}, d={self.offset:.6g})"
        return f"Sphere(c={self.center.round(6)}, r={self.radius:.6g})"


def sphere_make(center, radius, role="", tags=()):
    """Sphere from center and positive radius."""
    if radius <= 0:
        raise GeometryError(f"radius must be positive, got {radius}")
    c = np.asarray(center, dtype=float)
    n2 = float(c @ c)
    v = np.array(
        [
            c[0] / radius,
            c[1] / radius,
            c[2] / radius,
            (n2 - radius * radius - 1.0) / (2.0 * radius),
            (n2 - radius * radius + 1.0) / (2.0 * radius),
        ]
    )
    return InversiveSphere(v, role=role, tags=tuple(tags))


def plane_make(normal, offset, role="", tags=()):
    """Plane {x : n.x = d}; the positive side is the one the normal points to."""
    n = np.asarray(normal, dtype=float)
    ln = math.sqrt(float(n @ n))
    if ln == 0.0:
        raise GeometryError("zero normal")
    n = n / ln
    d = float(offset) / ln
    v = np.array([n[0], n[1], n[2], d, d])
    return InversiveSphere(v, role=role, tags=tuple(tags))


@dataclass
class MobiusMap:
    """Conformal or anticonformal self-map of compactified R^3.

    Stored as a 5x5 Lorentz-form-preserving matrix together with the word
    over generator indices that produced it (possibly empty).
    """

    m: np.ndarray
    word: tuple = ()
    _comps: int = field(default=0, repr=False)

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.word = tuple(self.word)

    @staticmethod
    def identity():
        return MobiusMap(np.eye(5))

    @property
    def orientation_reversing(self):
        return np.linalg.det(self.m) < 0

    def form_residual(self):
        """Max-norm of M^T J M - J, scaled by the squared matrix norm.

        Hyperbolic elements have exponentially large entries, so the raw
        residual grows like eps * |M|^2 no matter how the product is
        maintained; the scaled residual is the meaningful drift measure.
        """
        raw = float(np.max(np.abs(self.m.T @ J @ self.m - J)))
        scale = max(1.0, float(np.max(np.abs(self.m))) ** 2)
        return raw / scale

    def form_residual_raw(self):
        return float(np.max(np.abs(self.m.T @ J @ self.m - J)))

    def renormalize(self):
        """Lorentz Gram-Schmidt on columns; restores M^T J M = J drift."""
        m = self.m.copy()
        signs = [1.0, 1.0, 1.0, 1.0, -1.0]
        for k in range(5):
            col = m[:, k]
            for j in range(k):
                col = col - signs[j] * lorentz_dot(m[:, j], col) * m[:, j]
            n = lorentz_dot(col, col) * signs[k]
            if n <= 0:
                raise GeometryError("renormalization failed: degenerate column")
            m[:, k] = col / math.sqrt(n)
        out = MobiusMap(m, self.word)
        if out.form_residual() > 1e-6:
            raise GeometryError("renormalization failed: residual too large")
        return out

    def compose(self, other):
        """self o other (apply `other` first)."""
        out = MobiusMap(self.m @ other.m, other.word + self.word)
        out._comps = self._comps + other._comps + 1
        if out._comps >= RENORM_EVERY:
            res = out.form_residual()
            if res > 1e-6:
                raise GeometryError(f"form drift {res:.2e} beyond renormalizable range")
            # Gram-Schmidt cleanup only pays off while entries are moderate;
            # for large hyperbolic elements the scaled residual is already
            # at rounding level and GS would lose precision.
            if float(np.max(np.abs(out.m))) < 1e3:
                out = out.renormalize()
            else:
                out._comps = 0
        return out

    def inverse(self):
        # J M^T J is the Lorentz inverse.
        inv = J @ self.m.T @ J
        word = tuple(reversed(self.word))
        return MobiusMap(inv, word)

    def apply(self, p):
        return unlift(self.m @ lift(p))

    def apply_sphere(self, s: InversiveSphere):
        return InversiveSphere(self.m @ s.v, role=s.role, tags=s.tags)

    def sign_normalized_matrix(self):
        """Flip the overall sign so the first entry of largest modulus is > 0."""
        m = self.m
        idx = np.unravel_index(np.argmax(np.abs(m)), m.shape)
        return m if m[idx] >= 0 else -m

    def is_identity(self, tol=IDENTITY_TOL):
        return float(np.max(np.abs(self.sign_normalized_matrix() - np.eye(5)))) <= tol

    def __matmul__(self, other):
        return self.compose(other)


def reflect_in(s: InversiveSphere, index=None):
    """Reflection (inversion) in a sphere or plane; an involution."""
    v = s.v
    m = np.eye(5) - 2.0 * np.outer(v, J @ v)
    word = () if index is None else (index,)
    return MobiusMap(m, word)


def inversive_product(s1: InversiveSphere, s2: InversiveSphere):
    return lorentz_dot(s1.v, s2.v)


def intersection_angle(s1: InversiveSphere, s2: InversiveSphere, tol=1e-9):
    """Classify a sphere pair: ('coincident'|'tangent'|'disjoint'|'angle', theta).

    theta is the exterior dihedral angle, arccos((d^2 - r1^2 - r2^2)/(2 r1 r2))
    for spheres; |inversive product| < 1 iff the pair genuinely intersects.
    """
    p = inversive_product(s1, s2)
    delta = min(
        float(np.max(np.abs(s1.v - s2.v))), float(np.max(np.abs(s1.v + s2.v)))
    )
    if delta <= tol:
        raise GeometryError("coincident spheres")
    if abs(abs(p) - 1.0) <= tol:
        return ("tangent", math.pi if p < 0 else 0.0)
    if abs(p) > 1.0:
        return ("disjoint", None)
    return ("angle", math.acos(-p))


def acute_angle(s1, s2, tol=1e-9):
    """Unoriented crossing angle in (0, pi/2]; None if not crossing."""
    kind, theta = intersection_angle(s1, s2, tol=tol)
    if kind != "angle":
        return None
    return min(theta, math.pi - theta)


@dataclass(frozen=True)
class Circle3:
    """Circle as transversal intersection of two spheres."""

    s1: InversiveSphere
    s2: InversiveSphere

    def __post_init__(self):
        p = inversive_product(self.s1, self.s2)
        if abs(p) >= 1.0 - 1e-12:
            raise GeometryError("spheres do not intersect transversally")

    def frame(self):
        """J-orthonormal basis (e1, e2) of the positive-definite pencil plane."""
        e1 = self.s1.v
        g = inversive_product(self.s1, self.s2)
        e2 = (self.s2.v - g * e1) / math.sqrt(1.0 - g * g)
        return e1, e2

    def sample_points(self, n=64):
        """n points on the circle, from null vectors orthogonal to the frame."""
        e1, e2 = self.frame()
        basis = _complement_basis(e1, e2)
        # Complement has signature (+, +, -): null directions are
        # cos(t) b1 + sin(t) b2 + b3 with b3 timelike normalized.
        b1, b2, b3 = basis
        pts = []
        for t in np.linspace(0.0, 2.0 * math.pi, n, endpoint=False):
            vec = math.cos(t) * b1 + math.sin(t) * b2 + b3
            pts.append(unlift(vec))
        return [p for p in pts if p is not INFINITY]


def _complement_basis(e1, e2):
    """J-orthonormal basis (b1, b2, b3), signature (+, +, -), of {e1, e2}^perp."""
    vecs = []
    for k in range(5):
        cand = np.zeros(5)
        cand[k] = 1.0
        cand = cand - lorentz_dot(e1, cand) * e1 - lorentz_dot(e2, cand) * e2
        for b, s in vecs:
            cand = cand - s * lorentz_dot(b, cand) * b
        n = lorentz_dot(cand, cand)
        if abs(n) < 1e-9:
            continue
        s = 1.0 if n > 0 else -1.0
        vecs.append((cand / math.sqrt(abs(n)), s))
        if len(vecs) == 3:
            break
    pos = [b for b, s in vecs if s > 0]
    neg = [b for b, s in vecs if s < 0]
    if len(pos) != 2 or len(neg) != 1:
        raise GeometryError("complement basis has unexpected signature")
    return pos[0], pos[1], neg[0]


def elliptic_about_circle(c: Circle3, angle):
    """Mobius rotation by `angle` about the circle c (fixes c pointwise)."""
    e1, e2 = c.frame()
    ca, sa = math.cos(angle), math.sin(angle)
    f1 = J @ e1
    f2 = J @ e2
    m = (
        np.eye(5)
        + (ca - 1.0) * (np.outer(e1, f1) + np.outer(e2, f2))
        + sa * (np.outer(e2, f1) - np.outer(e1, f2))
    )
    return MobiusMap(m)


def rotation_in_frame(e1, e2, angle):
    """Lorentz rotation by `angle` in the positive-definite plane span(e1, e2)."""
    ca, sa = math.cos(angle), math.sin(angle)
    f1 = J @ e1
    f2 = J @ e2
    m = (
        np.eye(5)
        + (ca - 1.0) * (np.outer(e1, f1) + np.outer(e2, f2))
        + sa * (np.outer(e2, f1) - np.outer(e1, f2))
    )
    return MobiusMap(m)


def hyperbolic_distance(x, y):
    """Hyperbolic distance in the Poincare unit ball model."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x2 = float(x @ x)
    y2 = float(y @ y)
    if x2 >= 1.0 or y2 >= 1.0:
        raise GeometryError("points must be strictly inside the unit ball")
    d2 = float((x - y) @ (x - y))
    arg = 1.0 + 2.0 * d2 / ((1.0 - x2) * (1.0 - y2))
    return math.acosh(arg)


def r_of_R(R):
    """Euclidean radius of the hyperbolic ball of radius R about 0."""
    if R < 0:
        raise GeometryError("hyperbolic radius must be nonnegative")
    return math.tanh(R / 2.0)


def R_of_r(r):
    """Inverse of r_of_R on [0, 1)."""
    if not 0.0 <= r < 1.0:
        raise GeometryError("Euclidean radius must lie in [0, 1)")
    return 2.0 * math.atanh(r)


def classify_and_fix(m: MobiusMap, tol=1e-8, iters=4096):
    """Classify an orientation-preserving map.

    Returns one of
        ('identity',)
        ('elliptic',)
        ('parabolic-like',)
        ('loxodromic', attracting, repelling, translation_length)
        ('indeterminate',)

    Loxodromic fixed points come from power iteration of the matrix on the
    light cone; the translation length is the log of the dominant eigenvalue.
    """
    if m.orientation_reversing:
        raise GeometryError("classification requires an orientation-preserving map")
    if m.is_identity(tol):
        return ("identity",)
    eig = np.linalg.eigvals(m.m)
    lam = float(np.max(np.abs(eig)))
    if lam > 1.0 + tol:
        att = _power_fixed_point(m.m, iters)
        rep = _power_fixed_point(np.asarray(J @ m.m.T @ J), iters)
        if att is None or rep is None:
            return ("indeterminate",)
        return ("loxodromic", att, rep, math.log(lam))
    if lam > 1.0 + tol * 1e-2:
        return ("indeterminate",)
    # All eigenvalues on the unit circle: elliptic iff powers stay bounded.
    p = m.m.copy()
    for _ in range(10):  # up to M^1024 by squaring
        p = p @ p
        scale = float(np.max(np.abs(p)))
        if scale > 1e6:
            return ("parabolic-like",)
        if not np.isfinite(scale):
            return ("parabolic-like",)
    return ("elliptic",)


def _power_fixed_point(mat, iters):
    rng = np.random.default_rng(7)
    v = lift(rng.standard_normal(3))
    v = v / np.linalg.norm(v)
    prev = None
    for _ in range(iters):
        v = mat @ v
        v = v / np.linalg.norm(v)
        if prev is not None and np.linalg.norm(v - prev) < 1e-15:
            break
        prev = v.copy()
    # Must be a null direction to define a point on S^3.
    if abs(lorentz_dot(v, v)) > 1e-6:
        return None
    p = unlift(v)
    return p


def random_word_map(spheres, length, rng):
    """Product of `length` random reflections, for sampling-based tests."""
    m = MobiusMap.identity()
    for _ in range(length):
        i = int(rng.integers(0, len(spheres)))
        m = reflect_in(spheres[i], i).compose(m)
    return m
