"""The equivariant map F, radial probes, preimage counts, properness.

F(x) = rho(gamma) o phi1^(-1) o gamma^(-1)(x) where gamma is the chamber
word of x for the unit-ball wall group.  Probes along radial rays record
the image cell rho(gamma_t)(P1) per step; the verdict is no_limit when the
cell sequence becomes periodic with period > 1 and a non-shrinking loop
(the image runs around a closed loop forever), and limit(q) when the cell
diameters collapse and the representatives converge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from qrball.configuration import channel_membership
from qrball.engine import GroupContext, canonical_key, reduce_to_fundamental
from qrball.inversive import (
    GeometryError,
    INFINITY,
    MobiusMap,
    classify_and_fix,
    sphere_make,
)

PROBE_LIMIT_TOL = 1e-4
LOOP_DIAMETER_FLOOR = 1e-3


@dataclass
class ProbeStep:
    t: float
    word_length: int
    cell_key: bytes
    diameter: float
    representative: np.ndarray


@dataclass
class Itinerary:
    steps: list
    verdict: str  # 'no_limit' | 'limit' | 'inconclusive'
    limit_point: np.ndarray = None
    loop_diameter: float = None
    period: int = None

    def to_rows(self):
        return [
            (s.t, s.word_length, s.diameter, *map(float, s.representative))
            for s in self.steps
        ]


@dataclass
class QRMap:
    """F for a unit-ball realization paired with the ambient sphere family."""

    realization: object  # FaceGroupRealization or AmalgamCoreRealization
    ctx: GroupContext  # loop/reference context evaluating rho

    @property
    def structure(self):
        return self.ctx.structure

    def rho_of_core_word(self, word):
        loop_word = tuple(self.realization.generator_loop_index(g) for g in word)
        return self.ctx.rho(loop_word)

    def reduce(self, x):
        return reduce_to_fundamental(x, self.realization.walls)

    def evaluate(self, x, return_word=False):
        """F(x) for x in the open unit ball."""
        x = np.asarray(x, dtype=float)
        if float(x @ x) >= 1.0:
            raise GeometryError("F is defined on the open unit ball")
        word, p, _ = self.reduce(x)
        img = self.realization.phi1_inverse(p[None, :])[0]
        out = self.rho_of_core_word(word).apply(img)
        if return_word:
            return out, word
        return out

    def base_cell_point(self):
        """A representative interior point of P1 on the Sigma side."""
        fam = self.structure.family
        cube = fam.spec.cubes[0]
        return np.array(cube.center, dtype=float) + np.array([0.0, 0.0, 0.0])

    def enclosing_sphere(self):
        fam = self.structure.family
        hi = fam.R
        for s in fam.cube_spheres:
            hi = max(hi, float(np.max(np.abs(s.center))) + s.radius)
        return sphere_make((0.0, 0.0, 0.0), hi * 1.5)

    def cell_data(self, word):
        """(key, diameter bound, representative) of the image cell rho(w)(P1)."""
        g = self.rho_of_core_word(word)
        key = canonical_key(g)
        rep = g.apply(self.base_cell_point())
        img = g.apply_sphere(self.enclosing_sphere())
        diam = math.inf if img.is_plane else 2.0 * img.radius
        if rep is INFINITY:
            rep = np.array([math.inf, math.inf, math.inf])
        return key, diam, rep


def default_schedule(n=160, deepest=1e-9):
    """Radial parameters 1 - eps with eps log-spaced down to `deepest`."""
    eps = np.logspace(0, math.log10(deepest), n)
    return 1.0 - eps


def radial_probe(qr: QRMap, p, schedule=None, loop_floor=LOOP_DIAMETER_FLOOR):
    """Probe F along t*p for t up the schedule; classify the itinerary."""
    p = np.asarray(p, dtype=float)
    p = p / np.linalg.norm(p)
    if schedule is None:
        schedule = default_schedule()
    steps = []
    for t in schedule:
        x = t * p
        word, _, _ = qr.reduce(x)
        key, diam, rep = qr.cell_data(word)
        steps.append(ProbeStep(float(t), len(word), key, diam, rep))
    return classify_itinerary(steps, loop_floor)


def symbolic_itinerary(ctx_or_qr, word, n_powers=16, loop_floor=LOOP_DIAMETER_FLOOR):
    """Itinerary of the prefixes of word^n, no bending realization needed."""
    qr = ctx_or_qr
    steps = []
    full = tuple(word) * n_powers
    for i in range(1, len(full) + 1):
        prefix = full[:i]
        key, diam, rep = qr.cell_data(prefix)
        steps.append(ProbeStep(float(i), i, key, diam, rep))
    return classify_itinerary(steps, loop_floor)


def classify_itinerary(steps, loop_floor):
    """Shared verdict logic for radial and symbolic itineraries."""
    n = len(steps)
    tail = steps[max(0, n - n // 2) :]
    keys = [s.cell_key for s in tail]
    # eventual periodicity of the cell sequence
    period = _tail_period(keys)
    if period is not None and period > 1:
        reps = [s.representative for s in tail[-period:]]
        finite = [r for r in reps if np.all(np.isfinite(r))]
        if len(finite) >= 2:
            diam = max(
                float(np.linalg.norm(a - b))
                for i, a in enumerate(finite)
                for b in finite[i + 1 :]
            )
        else:
            diam = math.inf
        if diam >= loop_floor:
            return Itinerary(steps, "no_limit", loop_diameter=diam, period=period)
    # convergence: diameters collapse and representatives go Cauchy
    diams = [s.diameter for s in tail]
    reps = [s.representative for s in tail]
    if len(tail) >= 4 and np.isfinite(diams[-1]):
        shrinking = diams[-1] < 1e-6 or diams[-1] < 0.05 * max(diams[0], 1e-30)
        drift = float(np.max(np.linalg.norm(np.diff(reps[-5:], axis=0), axis=1)))
        if shrinking and drift < 1e-6:
            return Itinerary(steps, "limit", limit_point=reps[-1])
    return Itinerary(steps, "inconclusive")


def _tail_period(keys):
    n = len(keys)
    for p in range(1, n // 2 + 1):
        if all(keys[i] == keys[i + p] for i in range(n - p - 1, n // 2 - 1, -1)):
            if any(keys[i] != keys[i + 1] for i in range(n - p - 1, n - 1)) or p == 1:
                return p
    return None


def count_preimages(qr: QRMap, r, kernel_words, x_seed=None, budget=200000):
    """Number of kernel-orbit preimages inside the ball of radius r.

    BFS over freely reduced words in the kernel generators (the subgroup is
    free, so the words enumerate the subgroup exactly); counts orbit points
    kappa(x_seed) with |kappa(x_seed)| < r.
    """
    if not 0.0 < r < 1.0:
        raise GeometryError("radius must lie in (0, 1)")
    if x_seed is None:
        x_seed = np.zeros(3)
    gens = {}
    for i, w in enumerate(kernel_words):
        m = qr.realization.evaluate(w)
        gens[i + 1] = m
        gens[-(i + 1)] = m.inverse()
    count = 0
    frontier = [((), MobiusMap.identity())]
    seen_words = 0
    while frontier:
        nxt = []
        for w, m in frontier:
            p = m.apply(x_seed)
            if p is not INFINITY and float(np.linalg.norm(p)) < r:
                count += 1
                # orbit points can re-enter the ball only from nearby words,
                # so keep expanding from counted elements
                for a, ga in gens.items():
                    if w and w[-1] == -a:
                        continue
                    nxt.append((w + (a,), m.compose(ga)))
                    seen_words += 1
                    if seen_words > budget:
                        raise GeometryError("preimage BFS budget exceeded")
        frontier = nxt
    return count


@dataclass
class RestrictedMap:
    """f(x) = F(r x): the proper rescaled restriction of F."""

    qr: QRMap
    r: float

    def evaluate(self, x):
        return self.qr.evaluate(self.r * np.asarray(x, dtype=float))


def restricted_map(qr: QRMap, r):
    if not 0.0 < r < 1.0:
        raise GeometryError("restriction radius must lie in (0, 1)")
    return RestrictedMap(qr, r)


def essential_properness_check(qr: QRMap, g_words, n_samples=100, seed=0, tol=1e-4):
    """Find compact C' with F(C') = C for C a finite union of cells g(P1).

    Each cell is given as a word over structure generators; its preimage
    cell is the corresponding word over realization generators (one wall
    per generator through the carrier lift), verified by sampling.
    """
    rng = np.random.default_rng(seed)
    real = qr.realization
    struct = qr.structure
    # lift: structure generator -> realization generator with the same rho
    lift = {}
    for g_real in range(real.n_generators):
        lift.setdefault(real.generator_loop_index(g_real), g_real)
    report = {"cells": [], "covered": True}
    for gw in g_words:
        try:
            cw = tuple(lift[g] for g in gw)
        except KeyError as exc:
            raise GeometryError(f"no realization lift for generator {exc}") from exc
        # samples of the preimage cell gamma(P0): gamma applied to points of P0
        base = _p0_samples(qr, n_samples, rng)
        gamma = real.evaluate(cw)
        cell_pts = np.array([gamma.apply(p) for p in base])
        g_map = qr.rho_of_core_word(cw)
        want = qr.ctx.rho(tuple(gw))
        resid = float(
            np.max(np.abs(g_map.sign_normalized_matrix() - want.sign_normalized_matrix()))
        )
        img = np.array([qr.evaluate(p) for p in cell_pts])
        # F(gamma(P0)) must equal rho(gamma)(phi1^-1(P0)) pointwise
        expect = np.array(
            [want.apply(q) for q in real.phi1_inverse(base)]
        )
        err = float(np.max(np.linalg.norm(img - expect, axis=1)))
        ok = err <= tol and resid <= 1e-8
        report["cells"].append(
            {"g_word": list(gw), "preimage_word": list(cw), "max_error": err, "ok": ok}
        )
        report["covered"] &= ok
    return report


def _p0_samples(qr: QRMap, n, rng):
    """Random points of the realized fundamental polyhedron P0."""
    out = []
    tries = 0
    while len(out) < n and tries < 500 * n:
        tries += 1
        x = rng.uniform(-0.95, 0.95, size=3)
        if float(x @ x) >= 0.9:
            continue
        if all(w.side(x) < -1e-9 for w in qr.realization.walls):
            out.append(x)
    if len(out) < n:
        raise GeometryError("could not sample the fundamental polyhedron")
    return np.array(out)


@dataclass
class SingularSet:
    """Sampled fixed points of kernel conjugates on the unit sphere."""

    words: list
    points: np.ndarray
    orbit_depth: int


def singular_set_sample(qr: QRMap, kernel_words, orbit_depth=2, seed=0):
    """Fixed points of conjugates w kappa w^-1 for short realization words."""
    rng = np.random.default_rng(seed)
    real = qr.realization
    pts = []
    words = []
    base_maps = [real.evaluate(w) for w in kernel_words]
    conjugators = [()]  # identity
    for depth in range(1, orbit_depth + 1):
        for _ in range(8 * depth):
            w = tuple(rng.integers(0, real.n_generators, size=depth))
            conjugators.append(w)
    for cw in conjugators:
        cmap = real.evaluate(cw)
        for kw, kmap in zip(kernel_words, base_maps):
            g = cmap.compose(kmap).compose(cmap.inverse())
            cls = classify_and_fix(g)
            if cls[0] != "loxodromic" or cls[1] is INFINITY:
                continue
            p = cls[1]
            if abs(float(p @ p) - 1.0) < 1e-10:
                pts.append(p)
                words.append((cw, kw))
    if not pts:
        raise GeometryError("no singular-set samples found")
    return SingularSet(words=words, points=np.array(pts), orbit_depth=orbit_depth)
