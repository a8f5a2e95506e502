"""Explicit one-sided inverses, null-space projectors and identity checks.

Right inverses satisfy ``A R = I - P0`` (the vacuum projector is the
unavoidable defect of lowering the grading), left inverses ``L A = I``.
Both are non-unique; bundles carry the projector that parameterizes the
freedom and the range of levels on which the defining identity is
unaffected by truncation when evaluated by two-step application
(symbolic composition followed by materialization is exact on all
levels up to L).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DivisionByZeroSource,
    MissingGreen,
    NotNilpotent,
    ResonantDeformation,
    SingularInteraction,
    WeightNotNormalized,
)
from .fock import DEFAULT_BUDGET
from .cuntz import (
    Monomial,
    OperatorExpr,
    adjoint,
    compose,
    identity_operator,
    interaction_operator,
    linear_operator,
    number_operator,
    source_operator,
    to_dense_matrix,
    vacuum_projector,
)

EXACT_TOL = 1e-12   # pure delta/integer algebra
FLOAT_TOL = 1e-10   # after Green's-function floating arithmetic


def truncate_operator(op, L):
    """Drop summands that cannot act within levels <= L."""
    terms = tuple(t for t in op.terms if t.n_create <= L and t.n_annihilate <= L)
    return OperatorExpr(op.space, terms)


@dataclass(frozen=True)
class InverseBundle:
    operator: OperatorExpr
    inverse: OperatorExpr
    side: str                      # "right" | "left"
    null_projector: OperatorExpr | None
    range_projector: OperatorExpr | None
    trusted_levels: tuple          # inclusive (lo, hi) for two-step application
    description: str = ""


def right_inverse_K(kernels, L):
    """Diagonal right inverse of the linear part, kernel = Green's function."""
    if kernels.green is None:
        raise MissingGreen("kernel set carries no Green's function for K")
    space = kernels.space
    K_op = linear_operator(kernels)
    R = OperatorExpr(space, (Monomial(1, 1, kernels.green),))
    P = identity_operator(space) - compose(R, K_op)
    Q = compose(K_op, R)
    return InverseBundle(
        operator=K_op,
        inverse=R,
        side="right",
        null_projector=P,
        range_projector=Q,
        trusted_levels=(0, L),
        description="right inverse of the diagonal linear operator",
    )


def neumann_inverse(op, L, budget=DEFAULT_BUDGET):
    """Exact inverse of ``I + R`` with R strictly raising.

    R is nilpotent on the truncated space, so the alternating sum
    ``sum_j (-R)^j`` terminates after floor(L/k) powers (k the minimal
    raising degree) and composes with the input to the identity on every
    level <= L.
    """
    scalar = 0.0
    rest = []
    for t in op.terms:
        if isinstance(t, Monomial) and t.n_create == 0 and t.n_annihilate == 0:
            scalar += float(t.kernel)
        else:
            rest.append(t)
    if abs(scalar - 1.0) > EXACT_TOL:
        raise NotNilpotent(f"operator is not of unit-plus-raising form (scalar part {scalar})")
    R = OperatorExpr(op.space, tuple(rest))
    if R.is_zero:
        return identity_operator(op.space)
    gradings = R.gradings()
    if min(gradings) < 1:
        raise NotNilpotent(f"remainder has non-raising summands (gradings {gradings})")
    k = min(gradings)
    out = identity_operator(op.space)
    power = identity_operator(op.space)
    for _ in range(L // k):
        power = truncate_operator(compose(power, R, budget=budget) * -1.0, L)
        if power.is_zero:
            break
        out = out + power
    return out


def right_inverse_K_plus_G(kernels, L, arbitrary=None, budget=DEFAULT_BUDGET):
    """Right inverse of K + G built from the Neumann inversion.

    ``(I + K_R^{-1} G)^{-1} [K_R^{-1} + P_K B]`` with B the optional
    arbitrary part; any choice of B satisfies the defining identity, and
    two choices differ by a vector in the null range.
    """
    kb = right_inverse_K(kernels, L)
    space = kernels.space
    G_op = source_operator(kernels)
    KG = kb.operator + G_op
    X = compose(kb.inverse, G_op)           # raising 1
    neum = neumann_inverse(identity_operator(space) + X, L, budget=budget)
    core = kb.inverse
    if arbitrary is not None:
        core = core + compose(kb.null_projector, arbitrary, budget=budget)
    W = truncate_operator(compose(neum, core, budget=budget), L)
    P = truncate_operator(identity_operator(space) - compose(W, KG, budget=budget), L)
    Q = truncate_operator(compose(KG, W, budget=budget), L)
    return InverseBundle(
        operator=KG,
        inverse=W,
        side="right",
        null_projector=P,
        range_projector=Q,
        trusted_levels=(0, L),
        description="right inverse of linear-plus-source",
    )


def apply_right_inverse_K_plus_G(kernels, v):
    """Apply the default right inverse of K + G without composing kernels.

    Iterates the Neumann sum on the vector; memory stays linear in the
    vector size, which matters at larger d where the composed operator's
    dense kernels would not.
    """
    from .cuntz import apply_operator

    if kernels.green is None:
        raise MissingGreen("kernel set carries no Green's function for K")
    space = kernels.space
    Kinv = OperatorExpr(space, (Monomial(1, 1, kernels.green),))
    X = OperatorExpr(space, (Monomial(1, 0, kernels.green @ kernels.G),))
    cur = apply_operator(Kinv, v)
    acc = cur
    for _ in range(v.L):
        cur = apply_operator(X, cur) * -1.0
        if cur.max_abs() == 0.0:
            break
        acc = acc + cur
    return acc


def default_chi(kernels):
    """Uniform weight over the labels where G is nonzero."""
    nz = kernels.G != 0.0
    if not nz.any():
        raise DivisionByZeroSource("G vanishes everywhere; no left inverse exists")
    chi = nz.astype(float)
    return chi / chi.sum()


def left_inverse_G(kernels, L, chi=None):
    """Lowering left inverse of the source operator, weight chi summing to 1."""
    space = kernels.space
    chi = default_chi(kernels) if chi is None else np.asarray(chi, dtype=float)
    if abs(chi.sum() - 1.0) > EXACT_TOL:
        raise WeightNotNormalized(f"sum chi = {chi.sum()} != 1")
    bad = [i for i in range(space.d) if chi[i] != 0.0 and kernels.G[i] == 0.0]
    if bad:
        raise DivisionByZeroSource(f"chi supported on zero-source labels {bad}")
    with np.errstate(divide="ignore", invalid="ignore"):
        weights = np.where(chi != 0.0, chi / np.where(kernels.G == 0.0, 1.0, kernels.G), 0.0)
    G_op = source_operator(kernels)
    Linv = OperatorExpr(space, (Monomial(0, 1, weights),))
    Q = compose(G_op, Linv)
    return InverseBundle(
        operator=G_op,
        inverse=Linv,
        side="left",
        null_projector=None,
        range_projector=Q,
        trusted_levels=(0, L - 1),
        description="left inverse of the source operator",
    )


def _interaction_weights(kernels):
    w = kernels.lam * kernels.Mdiag
    zero = [int(z) for z in np.nonzero(w == 0.0)[0]]
    if zero:
        raise SingularInteraction(
            f"effective interaction weight lam*M(z) vanishes at base labels {zero}"
        )
    return w


def right_inverse_N0(kernels, L, variant="plain"):
    """Right inverse of the undeformed cubic interaction.

    Plain: ``A^{-1} sum_y (eta*(y))^2 / (lam M(y))`` (raising 2);
    weighted: the same with a trailing ``eta*(y) eta(y)`` pair (a
    different, equally valid member of the right-inverse family).
    """
    space = kernels.space
    w = _interaction_weights(kernels)
    d, nb, A = space.d, space.n_base, space.A
    N0 = interaction_operator(kernels, q=0.0)
    if variant == "plain":
        k = np.zeros((d, d))
        for y in range(nb):
            for alpha in range(A):
                i = space.encode_idx(alpha, y)
                k[i, i] = 1.0 / (A * w[y])
        R = OperatorExpr(space, (Monomial(2, 0, k),))
    elif variant == "weighted":
        k = np.zeros((d, d, d, d))
        for y in range(nb):
            for alpha in range(A):
                i = space.encode_idx(alpha, y)
                for beta in range(A):
                    j = space.encode_idx(beta, y)
                    k[i, i, j, j] = 1.0 / (A * w[y])
        R = OperatorExpr(space, (Monomial(3, 1, k),))
    else:
        raise ValueError(f"variant {variant!r} not in ('plain', 'weighted')")
    P = truncate_operator(identity_operator(space) - compose(R, N0), L)
    Q = truncate_operator(compose(R, N0), L)
    return InverseBundle(
        operator=N0,
        inverse=R,
        side="right",
        null_projector=P,
        range_projector=Q,
        trusted_levels=(0, max(L - 2, 0)),
        description=f"right inverse of the undeformed cubic interaction ({variant})",
    )


def deformation_obstruction(kernels):
    """O(z) = -2q M(z;z)/M(z) + q^2 sum_y M(z;y)/M(y)."""
    M = kernels.M
    Mdiag = kernels.Mdiag
    q = kernels.q
    return -2.0 * q * np.diag(M) / Mdiag + q * q * (M / Mdiag[None, :]).sum(axis=1)


def right_inverse_Nq(kernels, L, resonance_tol=1e-12):
    """Right inverse of the deformed cubic interaction.

    Exists when 1 + O(z) never vanishes; the inverse multiplies the
    plain undeformed inverse by the diagonal pair weighted with
    1/(1 + O(z)).
    """
    space = kernels.space
    w = _interaction_weights(kernels)
    O = deformation_obstruction(kernels)
    bad = [int(z) for z in np.nonzero(np.abs(1.0 + O) <= resonance_tol)[0]]
    if bad:
        raise ResonantDeformation(
            f"1 + O(z) vanishes at base labels {bad}: deformed inverse undefined",
            labels=bad,
        )
    d, nb, A = space.d, space.n_base, space.A
    Nq = interaction_operator(kernels)
    k = np.zeros((d, d, d, d))
    for y in range(nb):
        for alpha in range(A):
            i = space.encode_idx(alpha, y)
            for z in range(nb):
                for beta in range(A):
                    j = space.encode_idx(beta, z)
                    k[i, i, j, j] = 1.0 / (A * w[y] * (1.0 + O[z]))
    R = OperatorExpr(space, (Monomial(3, 1, k),))
    P = truncate_operator(identity_operator(space) - compose(R, Nq), L)
    Q = truncate_operator(compose(R, Nq), L)
    return InverseBundle(
        operator=Nq,
        inverse=R,
        side="right",
        null_projector=P,
        range_projector=Q,
        trusted_levels=(0, max(L - 2, 0)),
        description="right inverse of the deformed cubic interaction",
    )


# --- residual utilities -----------------------------------------------------

def dense_residual(lhs, rhs, L, row_levels=None, col_levels=None, budget=DEFAULT_BUDGET):
    """Max-abs difference of two materialized operators on selected levels."""
    from .cuntz import level_offsets

    d = lhs.space.d
    a = to_dense_matrix(lhs, L, budget=budget)
    b = to_dense_matrix(rhs, L, budget=budget)
    offs = level_offsets(d, L)
    rows = range(L + 1) if row_levels is None else row_levels
    cols = range(L + 1) if col_levels is None else col_levels
    rmask = np.zeros(offs[-1], dtype=bool)
    cmask = np.zeros(offs[-1], dtype=bool)
    for n in rows:
        rmask[offs[n]:offs[n + 1]] = True
    for n in cols:
        cmask[offs[n]:offs[n + 1]] = True
    diff = np.abs(a - b)[np.ix_(rmask, cmask)]
    return float(diff.max()) if diff.size else 0.0


def eye_minus_p0(space):
    return identity_operator(space) - vacuum_projector(space)


# --- generalized-inverse axiom report ---------------------------------------

@dataclass
class AxiomReport:
    """Outcome of the four generalized-inverse conditions for a pair (A, G)."""

    general: float            # |AGA - A|
    reflexive: float          # |GAG - G|
    normalized: float         # |(AG)* - AG|
    reverse_normalized: float # |(GA)* - GA|
    q_idempotent: float       # |(GA)^2 - GA|
    qprime_idempotent: float  # |(AG)^2 - AG|
    tol: float

    def passed(self, name):
        return getattr(self, name) <= self.tol

    def to_dict(self):
        return {
            "general": self.general,
            "reflexive": self.reflexive,
            "normalized": self.normalized,
            "reverse_normalized": self.reverse_normalized,
            "q_idempotent": self.q_idempotent,
            "qprime_idempotent": self.qprime_idempotent,
            "tol": self.tol,
            "passes": {
                n: bool(getattr(self, n) <= self.tol)
                for n in (
                    "general",
                    "reflexive",
                    "normalized",
                    "reverse_normalized",
                    "q_idempotent",
                    "qprime_idempotent",
                )
            },
        }


def generalized_inverse_report(A_op, G_op, L, tol=FLOAT_TOL, row_levels=None, budget=DEFAULT_BUDGET):
    """Measure the four axioms (never assume them) plus projector idempotency."""
    AG = compose(A_op, G_op, budget=budget)
    GA = compose(G_op, A_op, budget=budget)
    AGA = truncate_operator(compose(AG, A_op, budget=budget), L)
    GAG = truncate_operator(compose(GA, G_op, budget=budget), L)
    rows = row_levels
    return AxiomReport(
        general=dense_residual(AGA, A_op, L, row_levels=rows, budget=budget),
        reflexive=dense_residual(GAG, G_op, L, row_levels=rows, budget=budget),
        normalized=dense_residual(adjoint(AG), AG, L, row_levels=rows, budget=budget),
        reverse_normalized=dense_residual(adjoint(GA), GA, L, row_levels=rows, budget=budget),
        q_idempotent=dense_residual(
            truncate_operator(compose(GA, GA, budget=budget), L), GA, L, row_levels=rows, budget=budget
        ),
        qprime_idempotent=dense_residual(
            truncate_operator(compose(AG, AG, budget=budget), L), AG, L, row_levels=rows, budget=budget
        ),
        tol=tol,
    )


# --- the identity catalog ----------------------------------------------------

@dataclass
class IdentityResult:
    id: str
    description: str
    residual: float | None
    tol: float
    trusted_levels: tuple
    passed: bool | None
    skipped_reason: str | None = None
    note: str | None = None

    def to_dict(self):
        return {
            "id": self.id,
            "description": self.description,
            "residual": self.residual,
            "tol": self.tol,
            "trusted_levels": list(self.trusted_levels),
            "pass": self.passed,
            "skipped_reason": self.skipped_reason,
            "note": self.note,
        }


def identity_catalog(kernels, L, chi=None, budget=DEFAULT_BUDGET):
    """Run every algebraic identity the package relies on; report residuals.

    Entries whose preconditions fail (zero source entries, vanishing
    interaction weight, resonant deformation) are reported as skipped
    with the reason; the remaining entries still run.
    """
    space = kernels.space
    results = []

    def entry(id_, description, residual, tol, trusted, note=None):
        results.append(
            IdentityResult(
                id=id_,
                description=description,
                residual=float(residual),
                tol=tol,
                trusted_levels=trusted,
                passed=bool(residual <= tol),
                note=note,
            )
        )

    def skipped(id_, description, reason):
        results.append(
            IdentityResult(
                id=id_,
                description=description,
                residual=None,
                tol=float("nan"),
                trusted_levels=(0, L),
                passed=None,
                skipped_reason=reason,
            )
        )

    ident = identity_operator(space)
    one_minus_p0 = eye_minus_p0(space)

    # generator relation, exhaustively over labels
    from .cuntz import eta, eta_star

    res = 0.0
    for i in range(space.d):
        for j in range(space.d):
            c = compose(eta(space, i), eta_star(space, j))
            val = float(c.terms[0].kernel) if c.terms else 0.0
            res = max(res, abs(val - (1.0 if i == j else 0.0)))
    entry("cuntz_relation", "eta(i) eta*(j) = delta_ij I, all label pairs", res, EXACT_TOL, (0, L))

    entry(
        "unit_decomposition",
        "sum_i eta*(i) eta(i) + |0><0| acts as the identity",
        dense_residual(number_operator(space) + vacuum_projector(space), ident, L, budget=budget),
        EXACT_TOL,
        (0, L),
    )

    if kernels.green is None:
        skipped("right_inverse_linear", "K Kinv = I - P0", "no Green's function")
        return results

    kb = right_inverse_K(kernels, L)
    entry(
        "right_inverse_linear",
        "K Kinv = I - P0",
        dense_residual(compose(kb.operator, kb.inverse), one_minus_p0, L, budget=budget),
        FLOAT_TOL,
        (0, L),
    )
    entry(
        "null_projector_kills_right_inverse",
        "P_K Kinv = 0",
        dense_residual(
            truncate_operator(compose(kb.null_projector, kb.inverse), L),
            OperatorExpr(space, ()),
            L,
            budget=budget,
        ),
        FLOAT_TOL,
        (0, L),
    )

    kgb = right_inverse_K_plus_G(kernels, L, budget=budget)
    entry(
        "right_inverse_linear_plus_source",
        "(K+G)(K+G)inv = I - P0",
        dense_residual(
            truncate_operator(compose(kgb.operator, kgb.inverse, budget=budget), L),
            one_minus_p0,
            L,
            budget=budget,
        ),
        FLOAT_TOL,
        (0, L),
    )
    X = compose(kb.inverse, source_operator(kernels))
    neum = neumann_inverse(identity_operator(space) + X, L, budget=budget)
    entry(
        "null_space_invariance",
        "P_{K+G} = (I + Kinv G)^{-1} P_K P_{K+G}",
        dense_residual(
            kgb.null_projector,
            truncate_operator(
                compose(compose(neum, kb.null_projector, budget=budget), kgb.null_projector, budget=budget), L
            ),
            L,
            budget=budget,
        ),
        FLOAT_TOL,
        (0, L),
    )
    for name, proj in (("P_K", kb.null_projector), ("P_{K+G}", kgb.null_projector)):
        entry(
            f"null_projector_idempotent[{name}]",
            f"{name}^2 = {name}",
            dense_residual(
                truncate_operator(compose(proj, proj, budget=budget), L), proj, L, budget=budget
            ),
            FLOAT_TOL,
            (0, L),
        )
    entry(
        "vacuum_inside_null_space",
        "P0 P_{K+G} = P0",
        dense_residual(
            truncate_operator(compose(vacuum_projector(space), kgb.null_projector, budget=budget), L),
            vacuum_projector(space),
            L,
            budget=budget,
        ),
        FLOAT_TOL,
        (0, L),
    )

    # left inverse of the source
    if np.any(kernels.G == 0.0) and chi is None:
        note = "chi restricted to nonzero-source labels"
    else:
        note = None
    try:
        lb = left_inverse_G(kernels, L, chi=chi)
    except (DivisionByZeroSource, WeightNotNormalized) as exc:
        skipped("left_inverse_source", "Ginv G = I", str(exc))
        lb = None
    if lb is not None:
        entry(
            "left_inverse_source",
            "Ginv G = I",
            dense_residual(compose(lb.inverse, lb.operator), ident, L, budget=budget),
            EXACT_TOL,
            (0, L - 1),
            note=note,
        )
        entry(
            "source_range_projector_idempotent",
            "Q_G^2 = Q_G",
            dense_residual(
                truncate_operator(compose(lb.range_projector, lb.range_projector), L),
                lb.range_projector,
                L,
                budget=budget,
            ),
            EXACT_TOL,
            (0, L),
        )
        sandwich = compose(
            compose(lb.inverse, kb.operator, budget=budget),
            compose(kb.inverse, lb.operator, budget=budget),
            budget=budget,
        )
        entry(
            "sandwich_identity",
            "(Ginv K)(Kinv G) = I - P0 away from the vacuum",
            dense_residual(
                sandwich, one_minus_p0, L, row_levels=range(1, L + 1), col_levels=range(1, L + 1), budget=budget
            ),
            FLOAT_TOL,
            (1, L - 1),
            note="exact algebra gives the full identity: the vacuum column is fixed, not annihilated",
        )

    # interaction inverses
    try:
        nb0 = right_inverse_N0(kernels, L)
    except SingularInteraction as exc:
        skipped("right_inverse_interaction", "N(0) R(0) = I - P0", str(exc))
        nb0 = None
    if nb0 is not None:
        entry(
            "right_inverse_interaction",
            "N(0) R(0) = I - P0",
            dense_residual(
                truncate_operator(compose(nb0.operator, nb0.inverse), L), one_minus_p0, L, budget=budget
            ),
            FLOAT_TOL,
            (0, max(L - 2, 0)),
        )
        entry(
            "interaction_range_projector_idempotent",
            "Q_{N(0)}^2 = Q_{N(0)}",
            dense_residual(
                truncate_operator(compose(nb0.range_projector, nb0.range_projector, budget=budget), L),
                nb0.range_projector,
                L,
                budget=budget,
            ),
            FLOAT_TOL,
            (0, max(L - 2, 0)),
        )
        # contraction factor: (eta(z))^2 (eta*(y))^2 = A delta_zy I
        res = 0.0
        A, nbase = space.A, space.n_base
        for z in range(nbase):
            for y in range(nbase):
                klow = np.zeros((space.d, space.d))
                krai = np.zeros((space.d, space.d))
                for al in range(A):
                    klow[space.encode_idx(al, z), space.encode_idx(al, z)] += 1.0
                    krai[space.encode_idx(al, y), space.encode_idx(al, y)] += 1.0
                c = compose(
                    OperatorExpr(space, (Monomial(0, 2, klow),)),
                    OperatorExpr(space, (Monomial(2, 0, krai),)),
                )
                val = float(c.terms[0].kernel) if c.terms else 0.0
                res = max(res, abs(val - (A if z == y else 0.0)))
        entry(
            "contraction_factor",
            "paired lowering against paired raising contracts to the component count",
            res,
            EXACT_TOL,
            (0, L),
        )

        try:
            nbq = right_inverse_Nq(kernels, L)
        except ResonantDeformation as exc:
            skipped("deformed_right_inverse", "N(q) R(q) = I - P0", str(exc))
            nbq = None
        if nbq is not None:
            entry(
                "deformed_right_inverse",
                "N(q) R(q) = I - P0",
                dense_residual(
                    truncate_operator(compose(nbq.operator, nbq.inverse), L), one_minus_p0, L, budget=budget
                ),
                FLOAT_TOL,
                (0, max(L - 2, 0)),
            )
            O = deformation_obstruction(kernels)
            diag = np.zeros((space.d, space.d))
            for z in range(space.n_base):
                for al in range(space.A):
                    i = space.encode_idx(al, z)
                    diag[i, i] = O[z]
            target = one_minus_p0 + OperatorExpr(space, (Monomial(1, 1, diag),))
            entry(
                "deformed_intermediate",
                "N(q) R(0) = I - P0 + sum_z O(z) eta*(z) eta(z)",
                dense_residual(
                    truncate_operator(compose(nbq.operator, nb0.inverse), L), target, L, budget=budget
                ),
                FLOAT_TOL,
                (0, max(L - 2, 0)),
            )

    # generalized-inverse axioms, right and left flavors
    rep = generalized_inverse_report(kb.operator, kb.inverse, L, budget=budget)
    entry("penrose_general[K]", "A G A = A for the linear pair", rep.general, FLOAT_TOL, (0, L))
    entry("penrose_reflexive[K]", "G A G = G for the linear pair", rep.reflexive, FLOAT_TOL, (0, L))
    if lb is not None:
        repl = generalized_inverse_report(lb.operator, lb.inverse, L, budget=budget)
        entry("penrose_general[G]", "A G A = A for the source pair", repl.general, FLOAT_TOL, (0, L - 1))
        entry("penrose_reflexive[G]", "G A G = G for the source pair", repl.reflexive, FLOAT_TOL, (0, L - 1))
    return results
