"""Truncated free Fock space over a finite index space.

A graded vector holds one dense real tensor per level n = 0..L, level n
of shape (d,)*n.  Level n of a generating vector stores the n-point
correlation tensor; level 0 is the normalization scalar 1.  Operations
producing components above L silently drop them; consumers declare the
levels they trust.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, LevelOutOfRange, NormalizationError, ShapeError
from .model import IndexSpace

DEFAULT_BUDGET = 10_000_000


def storage_size(d, L):
    """Total dense entries sum_{n<=L} d^n."""
    return sum(d**n for n in range(L + 1))


def check_budget(d, L, budget=DEFAULT_BUDGET):
    need = storage_size(d, L)
    if need > budget:
        raise BudgetExceeded(
            f"d={d}, L={L} needs {need} tensor entries, budget is {budget}"
        )


def _freeze(a):
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FockVector:
    """Graded vector with dense levels 0..L; immutable after construction."""

    space: IndexSpace
    levels: tuple

    def __post_init__(self):
        d = self.space.d
        frozen = []
        for n, t in enumerate(self.levels):
            t = np.asarray(t, dtype=float)
            if t.shape != (d,) * n:
                raise ShapeError(f"level {n} has shape {t.shape}, expected {(d,) * n}")
            if not np.all(np.isfinite(t)):
                raise ShapeError(f"level {n} contains non-finite entries")
            frozen.append(_freeze(t))
        object.__setattr__(self, "levels", tuple(frozen))

    @property
    def L(self):
        return len(self.levels) - 1

    def level(self, n):
        if not 0 <= n <= self.L:
            raise LevelOutOfRange(f"level {n} outside 0..{self.L}")
        return self.levels[n]

    # solvers treat vectors as elements of a linear space
    def __add__(self, other):
        self._check_compatible(other)
        return FockVector(self.space, tuple(a + b for a, b in zip(self.levels, other.levels)))

    def __sub__(self, other):
        self._check_compatible(other)
        return FockVector(self.space, tuple(a - b for a, b in zip(self.levels, other.levels)))

    def __mul__(self, c):
        return FockVector(self.space, tuple(float(c) * a for a in self.levels))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def _check_compatible(self, other):
        if other.space.d != self.space.d or other.L != self.L:
            raise ShapeError("vectors live in different truncated spaces")

    def norm_per_level(self, ord=np.inf):
        out = {}
        for n, t in enumerate(self.levels):
            flat = np.ravel(t)
            out[n] = float(np.abs(flat).max()) if ord == np.inf else float(np.linalg.norm(flat, ord))
        return out

    def max_abs(self):
        return max(self.norm_per_level().values())

    def allclose(self, other, atol=1e-12, rtol=0.0):
        self._check_compatible(other)
        return all(
            np.allclose(a, b, atol=atol, rtol=rtol)
            for a, b in zip(self.levels, other.levels)
        )


def zero_vector(space, L, budget=DEFAULT_BUDGET):
    check_budget(space.d, L, budget)
    return FockVector(space, tuple(np.zeros((space.d,) * n) for n in range(L + 1)))


def vacuum(space, L, budget=DEFAULT_BUDGET):
    """Vacuum vector: level 0 = 1, all higher levels zero."""
    if L < 0:
        raise LevelOutOfRange(f"L={L} must be >= 0")
    check_budget(space.d, L, budget)
    levels = [np.ones(())] + [np.zeros((space.d,) * n) for n in range(1, L + 1)]
    return FockVector(space, tuple(levels))


def basis_word(space, L, word, value=1.0):
    """Vector with a single entry ``value`` at ``word`` in level len(word)."""
    n = len(word)
    if n > L:
        raise LevelOutOfRange(f"word length {n} exceeds L={L}")
    v = [np.zeros((space.d,) * m) for m in range(L + 1)]
    v[0] = np.zeros(())
    if n == 0:
        v[0] = np.asarray(float(value))
    else:
        t = v[n].copy()
        t[tuple(word)] = value
        v[n] = t
    return FockVector(space, tuple(v))


def project_level(v, n):
    """Keep level n, zero all others (the grading projector P_n)."""
    if not 0 <= n <= v.L:
        raise LevelOutOfRange(f"level {n} outside 0..{v.L}")
    levels = tuple(
        t if m == n else np.zeros_like(t) for m, t in enumerate(v.levels)
    )
    return FockVector(v.space, levels)


def inner(u, v):
    """Sum over levels of the entrywise tensor dot product."""
    u._check_compatible(v)
    return float(sum(np.vdot(a, b) for a, b in zip(u.levels, v.levels)))


def symmetrize(v):
    """Average each level over all permutations of its slots."""
    out = list(v.levels[:2])  # levels 0 and 1 are permutation invariant
    for n in range(2, v.L + 1):
        t = v.levels[n]
        acc = np.zeros_like(t)
        perms = list(itertools.permutations(range(n)))
        for p in perms:
            acc += np.transpose(t, p)
        out.append(acc / len(perms))
    return FockVector(v.space, tuple(out[: v.L + 1]))


def is_symmetric(v, atol=1e-12):
    return symmetrize(v).allclose(v, atol=atol)


def extract_correlation(v, word):
    """Entry of the level-len(word) tensor at the word's index tuple."""
    n = len(word)
    if n > v.L:
        raise LevelOutOfRange(f"word length {n} exceeds L={v.L}")
    return float(v.levels[n][tuple(word)])


def assemble_from_correlations(table, space, L, budget=DEFAULT_BUDGET, warn_missing=True):
    """Build a generating vector from a word -> value map.

    Words are tuples of flat labels.  Levels may also be supplied whole:
    a key ``n`` (int) mapping to a dense (d,)*n array fills level n at
    once.  Missing words default to 0 (with one warning per level);
    level 0 is forced to 1 and a conflicting empty-word entry raises.
    """
    check_budget(space.d, L, budget)
    d = space.d
    levels = [np.zeros((d,) * n) for n in range(L + 1)]
    levels[0] = np.ones(())
    seen = {0: True}

    word_items = []
    for key, value in table.items():
        if isinstance(key, (int, np.integer)):
            n = int(key)
            if n > L:
                raise LevelOutOfRange(f"level {n} exceeds L={L}")
            arr = np.asarray(value, dtype=float)
            if arr.shape != (d,) * n:
                raise ShapeError(f"level {n} table has shape {arr.shape}")
            if n == 0:
                if not math.isclose(float(arr), 1.0, rel_tol=0, abs_tol=1e-12):
                    raise NormalizationError(f"empty word value {float(arr)} != 1")
            else:
                levels[n] = arr.copy()
            seen[n] = True
        else:
            word_items.append((tuple(key), float(value)))

    touched = set()
    for word, value in word_items:
        n = len(word)
        if n > L:
            raise LevelOutOfRange(f"word {word} longer than L={L}")
        if n == 0:
            if not math.isclose(value, 1.0, rel_tol=0, abs_tol=1e-12):
                raise NormalizationError(f"empty word value {value} != 1")
            continue
        levels[n][word] = value
        touched.add(n)
        seen[n] = True

    if warn_missing:
        for n in range(1, L + 1):
            if n not in seen:
                warnings.warn(f"no entries supplied for level {n}; defaulting to 0", stacklevel=2)
    return FockVector(space, tuple(levels))


# --- JSON serialization -------------------------------------------------
# json renders floats with repr(), the shortest decimal that round-trips,
# so dump/load is bit exact at double precision.

def to_json(v):
    doc = {
        "d": v.space.d,
        "L": v.L,
        "levels": [t.tolist() for t in v.levels],
    }
    return json.dumps(doc)


def from_json(text, space):
    doc = json.loads(text)
    if doc["d"] != space.d:
        raise ShapeError(f"document d={doc['d']} does not match space d={space.d}")
    levels = []
    for n, entry in enumerate(doc["levels"]):
        levels.append(np.asarray(entry, dtype=float).reshape((space.d,) * n))
    return FockVector(space, tuple(levels))


def save(v, path):
    with open(path, "w") as fh:
        fh.write(to_json(v))


def load(path, space):
    with open(path) as fh:
        return from_json(fh.read(), space)
