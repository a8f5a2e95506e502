"""Generator algebra over the truncated free Fock space.

Operators are finite sums of two kinds of summands over an index space
with d flat labels:

* ``Monomial(p, s, kernel)`` -- the normal-ordered generator monomial
  ``sum_{x,y} kernel[x_1..x_p, y_1..y_s] eta*(x_1)..eta*(x_p)
  eta(y_1)..eta(y_s)`` with a dense kernel of shape ``(d,)*(p+s)``.
  ``p = s = 0`` is a scalar multiple of the unit operator.
* ``VacuumTerm(p, s, kernel)`` -- ``sum kernel[x, y]
  eta*(x_1)..eta*(x_p) |0><0| eta(y_1)..eta(y_s)``, which cannot be
  written as a generator product.

The generators satisfy ``eta(x) eta*(y) = delta(x, y) I`` with
``eta(x)|0> = 0``; products rewrite with no remainder term, so the
composition of two monomials is again a single monomial whose kernel is
a plain tensor contraction.  Applying a monomial to a graded vector
contracts the reversed annihilation word against the leading slots of
each level (the innermost annihilator meets the first slot), multiplies
by the kernel and prepends the creation slots; components above the
truncation level are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded, ShapeError, UnsupportedDegree
from .fock import DEFAULT_BUDGET, FockVector
from .model import IndexSpace, KernelSet


@dataclass(frozen=True)
class Monomial:
    n_create: int
    n_annihilate: int
    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != self.n_create + self.n_annihilate:
            raise ShapeError(
                f"kernel rank {k.ndim} != create {self.n_create} + annihilate {self.n_annihilate}"
            )
        k.flags.writeable = False
        object.__setattr__(self, "kernel", k)

    @property
    def grading(self):
        return self.n_create - self.n_annihilate


@dataclass(frozen=True)
class VacuumTerm:
    n_create: int
    n_annihilate: int
    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != self.n_create + self.n_annihilate:
            raise ShapeError(
                f"kernel rank {k.ndim} != create {self.n_create} + annihilate {self.n_annihilate}"
            )
        k.flags.writeable = False
        object.__setattr__(self, "kernel", k)

    @property
    def grading(self):
        return self.n_create - self.n_annihilate


def _merge(space, terms):
    """Group summands by (kind, p, s) and add kernels; drop zero terms."""
    acc = {}
    for t in terms:
        d = space.d
        if t.kernel.shape != (d,) * (t.n_create + t.n_annihilate):
            raise ShapeError(
                f"term kernel shape {t.kernel.shape} inconsistent with d={d}"
            )
        key = (type(t), t.n_create, t.n_annihilate)
        if key in acc:
            acc[key] = acc[key] + t.kernel
        else:
            acc[key] = t.kernel.copy()
    out = []
    for (kind, p, s), kernel in sorted(
        acc.items(), key=lambda kv: (kv[0][0].__name__, kv[0][1], kv[0][2])
    ):
        if kernel.size and np.abs(kernel).max() == 0.0 and (p, s) != (0, 0):
            continue
        if (p, s) == (0, 0) and float(kernel) == 0.0:
            continue
        out.append(kind(p, s, kernel))
    return tuple(out)


@dataclass(frozen=True)
class OperatorExpr:
    """Finite sum of monomials and vacuum terms over one index space."""

    space: IndexSpace
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", _merge(self.space, self.terms))

    def __add__(self, other):
        self._check(other)
        return OperatorExpr(self.space, self.terms + other.terms)

    def __sub__(self, other):
        return self + (other * -1.0)

    def __mul__(self, c):
        c = float(c)
        return OperatorExpr(
            self.space,
            tuple(type(t)(t.n_create, t.n_annihilate, c * t.kernel) for t in self.terms),
        )

    __rmul__ = __mul__

    def __matmul__(self, other):
        return compose(self, other)

    def _check(self, other):
        if other.space.d != self.space.d:
            raise ShapeError("operators live over different index spaces")

    @property
    def is_zero(self):
        return len(self.terms) == 0

    def gradings(self):
        return tuple(sorted({t.grading for t in self.terms}))


def zero_operator(space):
    return OperatorExpr(space, ())


def identity_operator(space):
    return OperatorExpr(space, (Monomial(0, 0, np.ones(())),))


def vacuum_projector(space):
    """|0><0| as an operator summand."""
    return OperatorExpr(space, (VacuumTerm(0, 0, np.ones(())),))


def number_operator(space):
    """sum_x eta*(x) eta(x); acts as the identity off the vacuum."""
    return OperatorExpr(space, (Monomial(1, 1, np.eye(space.d)),))


def eta(space, i):
    k = np.zeros(space.d)
    k[i] = 1.0
    return OperatorExpr(space, (Monomial(0, 1, k),))


def eta_star(space, i):
    k = np.zeros(space.d)
    k[i] = 1.0
    return OperatorExpr(space, (Monomial(1, 0, k),))


# --- application ---------------------------------------------------------

def _apply_term_to_level(term, tensor, n):
    """Contraction of one summand against a single level-n tensor."""
    p, s = term.n_create, term.n_annihilate
    if n < s:
        return None
    axes_kernel = list(range(p, p + s))
    axes_tensor = list(range(s - 1, -1, -1))
    return np.tensordot(term.kernel, tensor, axes=(axes_kernel, axes_tensor))


def apply_operator(op, v):
    """Apply an operator expression to a graded vector, truncating at v.L."""
    if op.space.d != v.space.d:
        raise ShapeError("operator and vector index spaces differ")
    L, d = v.L, v.space.d
    out = [np.zeros((d,) * n) for n in range(L + 1)]
    out[0] = np.zeros(())
    for t in op.terms:
        p, s = t.n_create, t.n_annihilate
        if isinstance(t, VacuumTerm):
            if s <= L and p <= L:
                contrib = _apply_term_to_level(t, v.levels[s], s)
                out[p] = out[p] + contrib
            continue
        for n in range(s, L + 1):
            m = n - s + p
            if m > L:
                continue
            contrib = _apply_term_to_level(t, v.levels[n], n)
            out[m] = out[m] + contrib
    return FockVector(v.space, tuple(out))


# --- composition ----------------------------------------------------------

def _contract(a_kernel, pa, sa, b_kernel, pb, k):
    """Pairwise Cuntz contraction of the k adjacent inner slots."""
    if k == 0:
        return np.tensordot(a_kernel, b_kernel, axes=0)
    axes_a = [pa + sa - 1 - i for i in range(k)]
    axes_b = list(range(k))
    return np.tensordot(a_kernel, b_kernel, axes=(axes_a, axes_b))


def _compose_terms(space, a, b, budget):
    pa, sa = a.n_create, a.n_annihilate
    pb, sb = b.n_create, b.n_annihilate
    a_vac, b_vac = isinstance(a, VacuumTerm), isinstance(b, VacuumTerm)

    if not a_vac and not b_vac:
        k = min(sa, pb)
        new_p = pa + max(pb - sa, 0)
        new_s = max(sa - pb, 0) + sb
        kind = Monomial
    elif not a_vac and b_vac:
        if sa > pb:
            return None  # leftover annihilators meet |0>
        k = sa
        new_p, new_s = pa + (pb - sa), sb
        kind = VacuumTerm
    elif a_vac and not b_vac:
        if sa < pb:
            return None  # leftover creators meet <0|
        k = pb
        new_p, new_s = pa, (sa - pb) + sb
        kind = VacuumTerm
    else:
        if sa != pb:
            return None
        k = sa
        new_p, new_s = pa, sb
        kind = VacuumTerm

    if space.d ** (new_p + new_s) > budget:
        raise BudgetExceeded(
            f"composite kernel with {new_p + new_s} slots over d={space.d} exceeds budget"
        )
    kernel = _contract(a.kernel, pa, sa, b.kernel, pb, k)
    return kind(new_p, new_s, kernel)


def compose(a, b, budget=DEFAULT_BUDGET):
    """Exact operator product; distributes over summands.

    Adjacent annihilator/creator pairs contract to Kronecker deltas with
    no remainder, so each summand product is a single normal-ordered
    summand.
    """
    a._check(b)
    terms = []
    for ta in a.terms:
        for tb in b.terms:
            t = _compose_terms(a.space, ta, tb, budget)
            if t is not None:
                terms.append(t)
    return OperatorExpr(a.space, tuple(terms))


def adjoint(op):
    """Swap creation and annihilation words (each reversed); kernel transposed."""
    terms = []
    for t in op.terms:
        p, s = t.n_create, t.n_annihilate
        axes = list(range(p + s - 1, p - 1, -1)) + list(range(p - 1, -1, -1))
        terms.append(type(t)(s, p, np.transpose(t.kernel, axes) if axes else t.kernel))
    return OperatorExpr(op.space, tuple(terms))


# --- structure -----------------------------------------------------------

@dataclass(frozen=True)
class GradingReport:
    gradings: tuple
    kind: str
    k: int | None

    def __str__(self):
        return self.kind if self.k is None else f"{self.kind} {self.k}"


def classify_triangularity(op):
    """Net grading per summand: diagonal (0), raising k (>0), lowering k (<0)."""
    gr = op.gradings()
    if len(gr) == 0 or gr == (0,):
        return GradingReport(gr, "diagonal", None)
    if len(gr) == 1:
        g = gr[0]
        return GradingReport(gr, "raising" if g > 0 else "lowering", abs(g))
    return GradingReport(gr, "mixed", None)


def permute_annihilation_slots(op, perm):
    """Reorder each summand's annihilation word by ``perm``.

    Equivalent on permutation-symmetric vectors (normal ordering), and a
    genuinely different operator off the symmetric subspace.
    """
    perm = tuple(perm)
    terms = []
    for t in op.terms:
        p, s = t.n_create, t.n_annihilate
        if len(perm) != s:
            raise ShapeError(f"permutation length {len(perm)} != annihilator count {s}")
        axes = list(range(p)) + [p + perm[i] for i in range(s)]
        terms.append(type(t)(p, s, np.transpose(t.kernel, axes)))
    return OperatorExpr(op.space, tuple(terms))


# --- model operators -------------------------------------------------------

def linear_operator(kernels: KernelSet):
    """Diagonal operator sum eta*(x) K(x, y) eta(y)."""
    return OperatorExpr(kernels.space, (Monomial(1, 1, kernels.K),))


def source_operator(kernels: KernelSet):
    """Raising operator sum eta*(x) G(x)."""
    return OperatorExpr(kernels.space, (Monomial(1, 0, kernels.G),))


def interaction_operator(kernels: KernelSet, lam=None, q=None):
    """Cubic interaction family, lowering by 2.

    ``lam * sum_{z,y} M(z;y) eta*(beta,z) eta(beta,z)
    [eta(alpha,z)^2 - 2q eta(alpha,z) eta(alpha,y) + q^2 eta(alpha,y)^2]``
    with both component indices summed (invariant convention).  The
    annihilation word is ordered (component pair, interaction pair);
    alternative orderings agree on symmetric vectors.
    """
    if kernels.degree != 3:
        raise UnsupportedDegree(f"interaction degree {kernels.degree} unsupported; only 3")
    lam = kernels.lam if lam is None else lam
    q = kernels.q if q is None else q
    space = kernels.space
    d, nb, A = space.d, space.n_base, space.A
    M = kernels.M
    kernel = np.zeros((d, d, d, d))
    for z in range(nb):
        for beta in range(A):
            c = space.encode_idx(beta, z)
            a1 = c
            for alpha in range(A):
                az = space.encode_idx(alpha, z)
                # q^0: self-interaction, both slots at z
                kernel[c, a1, az, az] += lam * M[z].sum()
                for y in range(nb):
                    if M[z, y] == 0.0:
                        continue
                    ay = space.encode_idx(alpha, y)
                    kernel[c, a1, az, ay] += -2.0 * q * lam * M[z, y]
                    kernel[c, a1, ay, ay] += q * q * lam * M[z, y]
    return OperatorExpr(space, (Monomial(1, 3, kernel),))


def hierarchy_operator(kernels: KernelSet):
    """K + N + G, the full operator of the correlation hierarchy."""
    op = linear_operator(kernels) + source_operator(kernels)
    if kernels.lam != 0.0:
        op = op + interaction_operator(kernels)
    return op


# --- materialization -------------------------------------------------------

def _term_matrix(term, d):
    """Kernel as a (d^p, d^s) matrix with annihilate axes reversed."""
    p, s = term.n_create, term.n_annihilate
    axes = list(range(p)) + list(range(p + s - 1, p - 1, -1))
    k = np.transpose(term.kernel, axes) if axes else term.kernel
    return np.ascontiguousarray(k).reshape(d**p, d**s)


def materialize(op, L, budget=DEFAULT_BUDGET):
    """Exact block-matrix family {(m, n): d^m x d^n} on levels <= L."""
    d = op.space.d
    if sum(d ** (2 * n) for n in range(L + 1)) > budget:
        raise BudgetExceeded(f"materializing d={d}, L={L} exceeds budget {budget}")
    blocks = {}

    def add(m, n, mat):
        if (m, n) in blocks:
            blocks[(m, n)] = blocks[(m, n)] + mat
        else:
            blocks[(m, n)] = mat

    for t in op.terms:
        p, s = t.n_create, t.n_annihilate
        if p > L or s > L:
            continue
        if isinstance(t, VacuumTerm):
            add(p, s, _term_matrix(t, d))
            continue
        base = _term_matrix(t, d)
        for n in range(s, L + 1):
            m = n - s + p
            if m > L:
                continue
            add(m, n, np.kron(base, np.eye(d ** (n - s))))
    return blocks


def level_offsets(d, L):
    offs = [0]
    for n in range(L + 1):
        offs.append(offs[-1] + d**n)
    return offs


def to_dense_matrix(op, L, budget=DEFAULT_BUDGET):
    """Single dense matrix over the flattened truncated space."""
    d = op.space.d
    offs = level_offsets(d, L)
    D = offs[-1]
    if D * D > budget:
        raise BudgetExceeded(f"dense {D}x{D} matrix exceeds budget {budget}")
    out = np.zeros((D, D))
    for (m, n), mat in materialize(op, L, budget=budget).items():
        out[offs[m]:offs[m + 1], offs[n]:offs[n + 1]] += mat
    return out


def flatten_vector(v):
    return np.concatenate([np.ravel(t) for t in v.levels])


def unflatten_vector(space, L, flat):
    offs = level_offsets(space.d, L)
    levels = []
    for n in range(L + 1):
        levels.append(np.asarray(flat[offs[n]:offs[n + 1]]).reshape((space.d,) * n))
    return FockVector(space, tuple(levels))


# --- printing --------------------------------------------------------------

def _render_kernel(kernel, prefix="  k = "):
    return np.array2string(
        np.asarray(kernel),
        separator=", ",
        prefix=prefix,
        formatter={"float_kind": lambda v: repr(float(v))},
    )


def format_operator(op):
    """Canonical text form with stable summand ordering, for golden tests."""
    if op.is_zero:
        return "0"
    lines = []
    for t in op.terms:
        p, s = t.n_create, t.n_annihilate
        create = " ".join(f"η*[x{i}]" for i in range(p))
        annihilate = " ".join(f"η[y{i}]" for i in range(s))
        slots = ",".join([f"x{i}" for i in range(p)] + [f"y{i}" for i in range(s)])
        head = f"k[{slots}]" if slots else "k[]"
        middle = "|0><0|" if isinstance(t, VacuumTerm) else ""
        sig = " ".join(x for x in (create, middle, head, annihilate) if x)
        lines.append(sig)
        lines.append("  k = " + _render_kernel(t.kernel))
    return "\n".join(lines)


def operators_close(a, b, atol=1e-12):
    """Structural closeness of two normalized expressions."""
    a._check(b)
    keys = {(type(t).__name__, t.n_create, t.n_annihilate): t.kernel for t in a.terms}
    keys_b = {(type(t).__name__, t.n_create, t.n_annihilate): t.kernel for t in b.terms}
    for key in set(keys) | set(keys_b):
        ka = keys.get(key)
        kb = keys_b.get(key)
        if ka is None:
            ka = np.zeros_like(kb)
        if kb is None:
            kb = np.zeros_like(ka)
        if not np.allclose(ka, kb, atol=atol, rtol=0.0):
            return False
    return True


def random_operator(space, rng, max_create=2, max_annihilate=2, n_terms=3, scale=1.0, vacuum_terms=True):
    """Random expression for property tests (bounded slot counts)."""
    terms = []
    for _ in range(n_terms):
        p = int(rng.integers(0, max_create + 1))
        s = int(rng.integers(0, max_annihilate + 1))
        kernel = scale * rng.standard_normal((space.d,) * (p + s))
        if vacuum_terms and rng.random() < 0.25:
            terms.append(VacuumTerm(p, s, kernel))
        else:
            terms.append(Monomial(p, s, kernel))
    return OperatorExpr(space, tuple(terms))
