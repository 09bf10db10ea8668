"""Abstract group theory: Coxeter presentations, free groups, growth, kernels.

Free-group words are tuples of signed 1-based generator indices (-i is the
inverse of i).  Coxeter words are tuples of 0-based generator indices; every
generator is an involution.  The bounded word problem uses Tits' moves:
delete adjacent equal letters, and replace braid factors  (s t s ...) with
(t s t ...), m_st letters each.  A word is trivial iff some move sequence
empties it; on a finite exploration budget "unknown" is a valid outcome.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

INFINITY_ORDER = 0  # Coxeter matrix entry that encodes m_ij = infinity


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class CoxeterPresentation:
    """Generator count and Coxeter matrix (entry 0 meaning infinite order)."""

    matrix: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=int)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("Coxeter matrix must be square")
        if not np.array_equal(m, m.T):
            raise ValueError("Coxeter matrix must be symmetric")
        if not np.all(np.diag(m) == 1):
            raise ValueError("diagonal entries must be 1")
        off = m[~np.eye(m.shape[0], dtype=bool)]
        if np.any((off != INFINITY_ORDER) & (off < 2)):
            raise ValueError("off-diagonal entries must be >= 2 or 0 (infinity)")
        object.__setattr__(self, "matrix", tuple(map(tuple, m.tolist())))

    @property
    def rank(self):
        return len(self.matrix)

    def order(self, i, j):
        return self.matrix[i][j]


def free_reduce(word):
    """Freely reduce a signed-index word; idempotent."""
    out = []
    for x in word:
        if x == 0:
            raise ValueError("0 is not a valid signed generator index")
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def free_growth_closed_form(m, k):
    """Number of elements of length <= k in the free group F_m (exact)."""
    if m < 2:
        raise ValueError("free rank must be at least 2")
    if k < 0:
        raise ValueError("k must be nonnegative")
    total = 1
    for i in range(1, k + 1):
        total += 2 * m * (2 * m - 1) ** (i - 1)
    return total


def sphere_count(m, k):
    """Number of elements of length exactly k >= 1 in F_m (exact)."""
    if m < 2:
        raise ValueError("free rank must be at least 2")
    if k < 1:
        raise ValueError("k must be >= 1")
    return 2 * m * (2 * m - 1) ** (k - 1)


def growth_bfs_free(m, k, budget=10**7):
    """BFS count of distinct elements of F_m of length <= k.

    Grows the Cayley-tree frontier as explicit reduced words with set dedup,
    so the count is an independent check of the closed form rather than a
    restatement of it.
    """
    predicted = free_growth_closed_form(m, k)
    if predicted > budget:
        raise BudgetExceeded(f"predicted {predicted} elements exceeds budget {budget}")
    letters = [i for i in range(1, m + 1)] + [-i for i in range(1, m + 1)]
    frontier = {()}
    total = 1
    for _ in range(k):
        nxt = set()
        for w in frontier:
            for a in letters:
                r = free_reduce(w + (a,))
                if len(r) == len(w) + 1:
                    nxt.add(r)
        frontier = nxt
        total += len(frontier)
    return total


def _delete_doubles(word):
    """Apply xx -> e wherever possible; returns (word, changed)."""
    out = []
    changed = False
    for x in word:
        if out and out[-1] == x:
            out.pop()
            changed = True
        else:
            out.append(x)
    return tuple(out), changed


def _braid_neighbors(word, pres: CoxeterPresentation):
    """All words obtained by one braid move (s t s ... <-> t s t ...)."""
    n = len(word)
    for i in range(n):
        s, t = None, None
        for j in range(i, n):
            x = word[j]
            if j == i:
                s = x
            elif j == i + 1:
                if x == s:
                    break
                t = x
                m = pres.order(s, t)
                if m in (INFINITY_ORDER, 1) or m < 2:
                    break
                if i + m > n:
                    break
                block = word[i : i + m]
                expect = tuple(s if q % 2 == 0 else t for q in range(m))
                if block == expect:
                    swapped = tuple(t if q % 2 == 0 else s for q in range(m))
                    yield word[:i] + swapped + word[i + m :]
                break
            else:
                break


def coxeter_reduce(word, pres: CoxeterPresentation, budget=20000):
    """Tits' algorithm: shortest word reachable by braid moves + cancellations.

    Returns (reduced_word, certified).  certified is False when the orbit
    exploration hit the budget, in which case the result is only an upper
    bound on the length.
    """
    word = tuple(word)
    certified = True
    while True:
        word, _ = _delete_doubles(word)
        # explore the braid orbit of the current word looking for a double
        seen = {word}
        queue = deque([word])
        found = None
        while queue:
            w = queue.popleft()
            for nb in _braid_neighbors(w, pres):
                if nb in seen:
                    continue
                collapsed, changed = _delete_doubles(nb)
                if changed:
                    found = collapsed
                    break
                seen.add(nb)
                queue.append(nb)
                if len(seen) > budget:
                    certified = False
                    queue.clear()
                    break
            if found is not None:
                break
        if found is None:
            canonical = min(seen) if certified else word
            return canonical, certified
        word = found


def is_trivial_bounded(word, pres: CoxeterPresentation, budget=20000):
    """Bounded word problem: 'trivial' | 'nontrivial' | 'unknown'.

    'trivial' and 'nontrivial' are only returned when certified: the
    exhaustive Tits search is complete within budget, or a structural
    obstruction applies (odd length, or the word alternates in a pair of
    generators with m_ij = infinity, an infinite dihedral subgroup).
    """
    word = tuple(word)
    if len(word) % 2 == 1:
        return "nontrivial"  # all Coxeter relators have even length
    letters = set(word)
    if len(letters) == 2:
        i, j = sorted(letters)
        if pres.order(i, j) == INFINITY_ORDER:
            reduced = free_product_z2_reduce(word)
            return "trivial" if not reduced else "nontrivial"
    reduced, certified = coxeter_reduce(word, pres, budget)
    if not reduced:
        return "trivial"
    if certified:
        return "nontrivial"  # Tits: reduced words are geodesic representatives
    return "unknown"


def free_product_z2_reduce(word):
    """Reduce in the free product of Z_2's: only xx -> e applies."""
    out = []
    for x in word:
        if out and out[-1] == x:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


def growth_bfs_coxeter(pres: CoxeterPresentation, k, budget=200000):
    """Count distinct Coxeter group elements of length <= k.

    Dedup uses the certified Tits normal form (lexicographically least
    reduced word in the braid orbit); raises BudgetExceeded when any orbit
    exploration or the element count gets out of hand.
    """
    frontier = {()}
    seen = {()}
    total = 1
    for _ in range(k):
        nxt = set()
        for w in frontier:
            for g in range(pres.rank):
                cand = w + (g,)
                red, cert = coxeter_reduce(cand, pres, budget=budget)
                if not cert:
                    raise BudgetExceeded("word problem budget exceeded")
                if len(red) != len(cand):
                    continue  # not a geodesic extension
                # coxeter_reduce returns the lex-least word of the braid
                # orbit when certified, which is a canonical form.
                if red not in seen:
                    seen.add(red)
                    nxt.add(red)
                    if len(seen) > budget:
                        raise BudgetExceeded("element budget exceeded")
        frontier = nxt
        total += len(frontier)
    return total


def growth_bfs(kind, k, budget=10**7, pres=None, m=None):
    """Growth count dispatcher: kind in {'free', 'coxeter'}."""
    if kind == "free":
        return growth_bfs_free(m, k, budget=budget)
    if kind == "coxeter":
        return growth_bfs_coxeter(pres, k, budget=min(budget, 10**6))
    raise ValueError(f"unknown group kind {kind!r}")


# ---------------------------------------------------------------------------
# The free-product model A * B with A, B isomorphic to Z2 x Z2, and the
# homomorphism onto C = Z2 x Z2 identifying the generators pairwise.
# Nontrivial elements of Z2 x Z2 are encoded 1, 2, 3 with 1*2 = 3 etc.
# ---------------------------------------------------------------------------

def _klein_mult(a, b):
    if a == b:
        return 0
    if a == 0:
        return b
    if b == 0:
        return a
    return a ^ b  # 1^2=3, 1^3=2, 2^3=1


@dataclass(frozen=True)
class ABWord:
    """Normal form in A * B: alternating nontrivial syllables.

    syllables: tuple of (group, value) with group 0 for A, 1 for B and
    value in {1, 2, 3} the nontrivial Klein four-group element.
    """

    syllables: tuple = ()

    def __mul__(self, other):
        left = list(self.syllables)
        right = list(other.syllables)
        while left and right and left[-1][0] == right[0][0]:
            g = left[-1][0]
            v = _klein_mult(left[-1][1], right[0][1])
            left.pop()
            right.pop(0)
            if v != 0:
                left.append((g, v))
                break
        return ABWord(tuple(left + right))

    def inverse(self):
        # Klein four-group elements are involutions, so reversing suffices.
        return ABWord(tuple(reversed(self.syllables)))

    @property
    def length(self):
        return len(self.syllables)

    def is_identity(self):
        return not self.syllables


AB_A1 = ABWord(((0, 1),))
AB_A2 = ABWord(((0, 2),))
AB_B1 = ABWord(((1, 1),))
AB_B2 = ABWord(((1, 2),))


def ab_phi(w: ABWord):
    """Homomorphism A*B -> C = Z2 x Z2 with phi(a_i) = phi(b_i) = c_i."""
    c = 0
    for _, v in w.syllables:
        c = _klein_mult(c, v)
    return c


def ab_enumerate(L):
    """All normal-form elements of A*B with syllable length <= L."""
    out = [ABWord()]
    for n in range(1, L + 1):
        for start in (0, 1):
            for vals in itertools.product((1, 2, 3), repeat=n):
                syl = tuple(((start + q) % 2, vals[q]) for q in range(n))
                out.append(ABWord(syl))
    return out


KERNEL_X = AB_A1 * AB_B1
KERNEL_Y = AB_A2 * AB_B2
KERNEL_Z = AB_A1 * KERNEL_Y * AB_A1


_KERNEL_GENS = {
    1: KERNEL_X,
    -1: KERNEL_X.inverse(),
    2: KERNEL_Y,
    -2: KERNEL_Y.inverse(),
    3: KERNEL_Z,
    -3: KERNEL_Z.inverse(),
}


def kernel_subgroup_ball(cap, budget=10**6):
    """Elements of <x, y, z> with syllable length <= cap, by deduped BFS."""
    seen = {()}
    queue = deque([ABWord()])
    while queue:
        g = queue.popleft()
        for ga in _KERNEL_GENS.values():
            h = g * ga
            if h.length > cap:
                continue
            if h.syllables not in seen:
                seen.add(h.syllables)
                queue.append(h)
                if len(seen) > budget:
                    raise BudgetExceeded("kernel subgroup ball budget exceeded")
    return seen


def kernel_lemma_check(L, budget=10**6):
    """Desk-scale verification that ker(phi) is free of rank 3 on x, y, z.

    Checks, exhaustively over syllable length <= L:
      (i)   phi kills x = a1 b1, y = a2 b2 and z = a1 a2 b2 a1;
      (ii)  every phi-trivial element of syllable length <= L is a product
            of x, y, z and inverses (membership via a deduped subgroup BFS
            within the syllable ball of radius L + 2);
      (iii) no nontrivial freely reduced word in x, y, z of free length <= L
            evaluates to the identity of A*B (depth-first tree walk).

    Returns a report dict; raises AssertionError with a witness on failure.
    """
    report = {"L": L}

    # (i)
    for name, g in (("x", KERNEL_X), ("y", KERNEL_Y), ("z", KERNEL_Z)):
        if ab_phi(g) != 0:
            raise AssertionError(f"phi({name}) != e")
    report["phi_kills_generators"] = True

    # (ii) membership
    ball = kernel_subgroup_ball(L + 2, budget=budget)
    missing = []
    kernel_count = 0
    for e in ab_enumerate(L):
        if ab_phi(e) == 0 and not e.is_identity():
            kernel_count += 1
            if e.syllables not in ball:
                missing.append(e)
    if missing:
        raise AssertionError(
            f"{len(missing)} kernel elements of syllable length <= {L} "
            f"not expressible in x, y, z; first: {missing[0]}"
        )
    report["kernel_elements_checked"] = kernel_count
    report["membership_ok"] = True

    # (iii) freeness at scale: DFS over all freely reduced words of length <= L
    stack = [(ABWord(), 0, 0)]  # element, last letter, depth
    nodes = 0
    while stack:
        g, last, depth = stack.pop()
        if depth == L:
            continue
        for a, ga in _KERNEL_GENS.items():
            if last == -a:
                continue
            h = g * ga
            nodes += 1
            if h.is_identity():
                raise AssertionError(
                    f"freeness violated at depth {depth + 1} ending in generator {a}"
                )
            stack.append((h, a, depth + 1))
    report["freeness_words_checked"] = nodes
    report["freeness_ok"] = True
    return report
