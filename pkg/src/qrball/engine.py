"""Numeric enumeration of the reflection group, kernel witnesses, reduction.

Words are tuples of generator indices.  A generator is a channel face (or a
faceless sphere appended after the faces), and rho maps it to the
reflection in its carrier sphere, so distinct faces on one sphere have
identical rho-images: products pairing them are exact kernel elements.
The convention for words matches reduce_to_fundamental: the first letter of
a word is the outermost (leftmost) reflection in the matrix product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from qrball.configuration import ChannelStructure, SphereFamily, classify_pair
from qrball.inversive import (
    GeometryError,
    MobiusMap,
    classify_and_fix,
    reflect_in,
)
from qrball.words import INFINITY_ORDER, is_trivial_bounded

DEDUP_GRID = 1e-6
IDENTITY_RESIDUAL = 1e-8
DISCRETENESS_GAP = 1e-4
REDUCTION_CAP = 10**4


class ReductionCapExceeded(GeometryError):
    pass


@dataclass
class GroupContext:
    """Generators (faces plus faceless spheres) acting by carrier reflections."""

    structure: ChannelStructure

    @property
    def family(self):
        return self.structure.family

    @property
    def n_generators(self):
        return len(self.structure.gen_sphere)

    def reflection(self, g):
        si = self.structure.gen_sphere[g]
        return reflect_in(self.family.spheres[si], index=g)

    def rho(self, word):
        """Left-to-right product of carrier reflections (first letter leftmost)."""
        m = MobiusMap.identity()
        for g in word:
            m = m.compose(self.reflection(g))
        return m

    def rho_residual(self, word):
        m = self.rho(word)
        return float(np.max(np.abs(m.sign_normalized_matrix() - np.eye(5))))


def sigma_context(family: SphereFamily):
    """Sphere-level context: one generator per sphere, no face structure."""
    from qrball.configuration import Face, channel_structure
    from qrball.words import CoxeterPresentation

    n = len(family.spheres)
    mat = np.ones((n, n), dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            kind, m = classify_pair(family.spheres[i], family.spheres[j])
            mat[i, j] = mat[j, i] = m if kind == "order" else INFINITY_ORDER
    pres = CoxeterPresentation(tuple(map(tuple, mat.tolist())))
    struct = ChannelStructure(
        family=family,
        faces=[],
        gen_sphere=list(range(n)),
        presentation=pres,
        adjacency=np.zeros((0, 0), dtype=bool),
    )
    return GroupContext(struct)


def canonical_key(m: MobiusMap, grid=DEDUP_GRID):
    mat = m.sign_normalized_matrix()
    return np.round(mat / grid).astype(np.int64).tobytes()


@dataclass
class GroupElement:
    map: MobiusMap
    key: bytes


@dataclass
class RelationRecord:
    word: tuple
    residual: float
    kind: str  # 'coxeter-relation' | 'extra-relation'


def enumerate_group(ctx: GroupContext, maxlen, budget=200000):
    """BFS over words with canonical-key dedup.

    Returns (elements, relations, warnings).  Any dedup collision between
    distinct abstract words is recorded: collisions at reduced words that
    are not consequences of the pairwise orders are 'extra-relation'.
    """
    ng = ctx.n_generators
    if sum(ng**k for k in range(maxlen + 1)) > budget * 8:
        raise GeometryError("enumeration budget exceeded before start")
    ident = MobiusMap.identity()
    elements = {canonical_key(ident): GroupElement(ident, canonical_key(ident))}
    word_of = {canonical_key(ident): ()}
    frontier = [((), ident)]
    relations = []
    warnings = []
    pres = ctx.structure.presentation
    for _ in range(maxlen):
        nxt = []
        for w, m in frontier:
            for g in range(ng):
                if w and w[-1] == g:
                    continue  # reflections are involutions
                w2 = w + (g,)
                m2 = m.compose(ctx.reflection(g))
                key = canonical_key(m2)
                if key in elements:
                    old = word_of[key]
                    res = float(
                        np.max(
                            np.abs(
                                m2.sign_normalized_matrix()
                                - elements[key].map.sign_normalized_matrix()
                            )
                        )
                    )
                    rel = tuple(w2) + tuple(reversed(old))
                    kind = _relation_kind(rel, pres)
                    relations.append(RelationRecord(rel, res, kind))
                    continue
                gap = float(np.max(np.abs(m2.sign_normalized_matrix() - np.eye(5))))
                if gap < DISCRETENESS_GAP:
                    warnings.append(
                        f"non-identity element within {gap:.1e} of identity at word {w2}"
                    )
                elements[key] = GroupElement(m2, key)
                word_of[key] = w2
                nxt.append((w2, m2))
                if len(elements) > budget:
                    raise GeometryError("enumeration budget exceeded")
        frontier = nxt
    return list(elements.values()), relations, warnings


def _relation_kind(rel, pres):
    verdict = is_trivial_bounded(rel, pres, budget=4000)
    return "coxeter-relation" if verdict == "trivial" else "extra-relation"


@dataclass
class KernelWitness:
    word: tuple
    residual: float
    certificate: str


def kernel_witnesses(ctx: GroupContext, include_angle_pairs=True):
    """Words that rho kills but that are certified nontrivial abstractly.

    Primary source: generator pairs carried by one sphere (exact identity);
    secondary: generator pairs whose carrier spheres intersect at angle
    pi/k but whose faces are not adjacent along the channel, giving
    w = (i j)^k with rho(w) a full turn.
    """
    struct = ctx.structure
    pres = struct.presentation
    out = []
    for a, b in struct.same_carrier_pairs():
        w = (a, b)
        res = ctx.rho_residual(w)
        verdict = is_trivial_bounded(w, pres)
        if res < IDENTITY_RESIDUAL and verdict == "nontrivial":
            out.append(KernelWitness(w, res, "same-carrier pair, infinite order"))
    if include_angle_pairs:
        ng = ctx.n_generators
        for a in range(ng):
            for b in range(a + 1, ng):
                if pres.order(a, b) != INFINITY_ORDER:
                    continue
                sa, sb = struct.gen_sphere[a], struct.gen_sphere[b]
                if sa == sb:
                    continue  # already covered
                kind, m = classify_pair(ctx.family.spheres[sa], ctx.family.spheres[sb])
                if kind != "order":
                    continue
                w = (a, b) * m
                res = ctx.rho_residual(w)
                verdict = is_trivial_bounded(w, pres)
                if res < IDENTITY_RESIDUAL and verdict == "nontrivial":
                    out.append(
                        KernelWitness(
                            w, res, f"non-adjacent pair at angle pi/{m}, infinite order"
                        )
                    )
    return out


def reduce_to_fundamental(x, balls, cap=REDUCTION_CAP, boundary_tol=1e-12):
    """Reflect x out of every ball; returns (word, point, on_boundary).

    The word lists the reflections in application order, so the group
    element gamma with x = gamma(point) is the left-to-right product of
    those reflections (matching GroupContext.rho).
    """
    word = []
    p = np.asarray(x, dtype=float)
    for _ in range(cap):
        sides = [s.side(p) for s in balls]
        deepest = int(np.argmax(sides))
        if sides[deepest] <= boundary_tol:
            on_boundary = bool(max(sides) > -boundary_tol)
            return tuple(word), p, on_boundary
        p = reflect_in(balls[deepest]).apply(p)
        word.append(deepest)
    raise ReductionCapExceeded(f"no fundamental-domain point within {cap} reflections")


def apply_word(ctx: GroupContext, word, p):
    """gamma(p) for a word in application-order convention."""
    return ctx.rho(word).apply(p)


def limit_sample(ctx: GroupContext, count, wordlen, seed):
    """Attracting fixed points of random even-length loxodromic words."""
    rng = np.random.default_rng(seed)
    if wordlen % 2 == 1:
        wordlen += 1
    pts = []
    tries = 0
    warnings = []
    while len(pts) < count and tries < 50 * count:
        tries += 1
        w = _random_reduced_word(ctx, wordlen, rng)
        cls = classify_and_fix(ctx.rho(w))
        if cls[0] != "loxodromic":
            continue
        att = cls[1]
        if att is None:
            continue
        g = ctx.rho(w)
        img = g.apply(att)
        from qrball.inversive import INFINITY

        if att is INFINITY or img is INFINITY:
            continue
        if np.linalg.norm(img - att) < 1e-6:
            pts.append(att)
    if len(pts) < count:
        warnings.append(f"only {len(pts)} of {count} loxodromic samples found")
    return pts, warnings


def _random_reduced_word(ctx, wordlen, rng):
    w = []
    ng = ctx.n_generators
    while len(w) < wordlen:
        g = int(rng.integers(0, ng))
        if w and w[-1] == g:
            continue
        w.append(g)
    return tuple(w)
