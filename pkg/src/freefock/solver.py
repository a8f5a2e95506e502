"""Solvers for the correlation hierarchy (K + N + G)|V> = 0.

Four routes: the canonical perturbation series in the interaction, the
terminating expansion driven by the interaction's right inverse, the
closed equation obtained from left invertibility of the source, and the
rational-interaction transformation whose solutions are exact
polynomials in the coupling.  The arbitrary projections that
parameterize the solution family default to the free (interaction-less)
solution; every solver accepts an explicit seed instead, including one
assembled from Monte-Carlo estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditioningWarning,
    MissingGreen,
    SeriesDiverging,
    SingularClosure,
    SingularInteraction,
    SingularRationalForm,
)
from .fock import DEFAULT_BUDGET, FockVector, symmetrize, zero_vector
from .cuntz import (
    Monomial,
    OperatorExpr,
    apply_operator,
    compose,
    flatten_vector,
    hierarchy_operator,
    identity_operator,
    interaction_operator,
    level_offsets,
    linear_operator,
    source_operator,
    to_dense_matrix,
    unflatten_vector,
)
from .inverse import (
    apply_right_inverse_K_plus_G,
    left_inverse_G,
    neumann_inverse,
    right_inverse_K,
    right_inverse_N0,
    right_inverse_Nq,
    truncate_operator,
)


@dataclass
class ResidualReport:
    per_level: dict
    trusted_levels: tuple
    rows: str

    def trusted_max(self):
        lo, hi = self.trusted_levels
        vals = [v for n, v in self.per_level.items() if lo <= n <= hi]
        return max(vals) if vals else 0.0

    def to_dict(self):
        return {
            "per_level": {int(k): float(v) for k, v in self.per_level.items()},
            "trusted_levels": list(self.trusted_levels),
            "rows": self.rows,
        }


def _mask_data_rows(tensor, n, data_rows):
    if n == 0 or not data_rows:
        return tensor
    t = tensor.copy()
    t[list(data_rows)] = 0.0
    return t


def residual_by_level(v, kernels, rows="all"):
    """Per-level max norm of (K + N + G)|V>.

    rows="equation" zeroes the image components whose first slot is a
    boundary-data row of the model: those rows encode initial data of
    the ensemble, not an equation of motion, so an empirical generating
    vector is only constrained on the complement.  Levels above L-2 (L-1
    for lam = 0) read truncated components and are flagged untrusted.
    """
    if rows not in ("all", "equation"):
        raise ValueError(f"rows={rows!r} not in ('all', 'equation')")
    op = hierarchy_operator(kernels)
    image = apply_operator(op, v)
    data_rows = kernels.data_rows if rows == "equation" else ()
    per_level = {}
    for n in range(v.L + 1):
        t = _mask_data_rows(image.levels[n], n, data_rows)
        per_level[n] = float(np.abs(t).max()) if t.size else float(abs(t))
    hi = v.L - 2 if kernels.lam != 0.0 else v.L - 1
    return ResidualReport(per_level=per_level, trusted_levels=(0, max(hi, 0)), rows=rows)


def propagate_residual_stderr(kernels, se_vector):
    """Correlation-blind error propagation of per-entry standard errors.

    Applies the hierarchy operator with squared kernels to the squared
    standard errors; the square root bounds the standard error of each
    residual entry from above (cross-correlations between estimated
    entries are dropped, which can only enlarge the result).
    """
    op = hierarchy_operator(kernels)
    sq_terms = tuple(type(t)(t.n_create, t.n_annihilate, t.kernel**2) for t in op.terms)
    op_sq = OperatorExpr(op.space, sq_terms)
    se2 = FockVector(se_vector.space, tuple(t**2 for t in se_vector.levels))
    prop = apply_operator(op_sq, se2)
    return FockVector(prop.space, tuple(np.sqrt(t) for t in prop.levels))


@dataclass
class SolveReport:
    V: FockVector
    method: str
    series_terms_used: dict
    residual: ResidualReport
    trusted_levels: tuple
    arbitrary_choice: str
    diverging: bool = False
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "series_terms_used": {int(k): int(v) for k, v in self.series_terms_used.items()},
            "residual": self.residual.to_dict(),
            "trusted_levels": list(self.trusted_levels),
            "arbitrary_choice": self.arbitrary_choice,
            "diverging": self.diverging,
            "extras": {k: v for k, v in self.extras.items() if not isinstance(v, (FockVector, np.ndarray))},
        }


def free_solution(kernels, L, budget=DEFAULT_BUDGET):
    """Solution of (K + G)|V> = 0 with V_0 = 1: V_n = (-Green G)^(x n)."""
    if kernels.green is None:
        raise MissingGreen("free solution needs the Green's function of K")
    g = -(kernels.green @ kernels.G)
    levels = [np.ones(())]
    for n in range(1, L + 1):
        levels.append(np.multiply.outer(g, levels[-1]) if n > 1 else g.copy())
    zero_vector(kernels.space, L, budget)  # budget guard
    return FockVector(kernels.space, tuple(levels))


def _count_touched_levels(counts, vec):
    for n in range(vec.L + 1):
        t = vec.levels[n]
        nz = float(np.abs(t).max()) if t.size else float(abs(t))
        if nz != 0.0:
            counts[n] = counts.get(n, 0) + 1


def perturbation_series(
    kernels,
    L,
    order=None,
    tol=None,
    symmetrized=False,
    seed=None,
    rows="all",
    budget=DEFAULT_BUDGET,
):
    """Canonical series: V = sum_i (-1)^i [(K+G)inv N]^i seed.

    The factor has mixed grading, so there is no termination or
    convergence guarantee; iteration stops at ``order``, or when the
    increment norm drops below ``tol``.  Three consecutive increment
    growths raise :class:`SeriesDiverging` with the partial result
    attached.  At lam = 0 the output is the seed itself, bit for bit.
    """
    if order is None and tol is None:
        order = 2
    seed_given = seed is not None
    if seed is None:
        seed = free_solution(kernels, L, budget)
    N_op = interaction_operator(kernels) if kernels.lam != 0.0 else None

    counts = {}
    _count_touched_levels(counts, seed)
    V = seed
    term = seed
    prev_norm = None
    growths = 0
    used = 0
    diverging = False
    max_orders = order if order is not None else 64
    if N_op is not None:
        for i in range(1, max_orders + 1):
            term = apply_right_inverse_K_plus_G(kernels, apply_operator(N_op, term)) * -1.0
            norm = term.max_abs()
            if norm == 0.0:
                break
            V = V + term
            used = i
            _count_touched_levels(counts, term)
            if prev_norm is not None and norm > prev_norm:
                growths += 1
                diverging = True
                warnings.warn(f"perturbation increment grew at order {i} ({prev_norm:.3e} -> {norm:.3e})")
            else:
                growths = 0
            prev_norm = norm
            if tol is not None and norm < tol:
                break
            if growths >= 3:
                partial = _finish_perturbation(
                    V, kernels, counts, used, symmetrized, seed_given, rows, diverging=True
                )
                raise SeriesDiverging(
                    f"increments grew over 3 consecutive orders (last {norm:.3e})", partial=partial
                )
    return _finish_perturbation(V, kernels, counts, used, symmetrized, seed_given, rows, diverging)


def _finish_perturbation(V, kernels, counts, used, symmetrized, seed_given, rows, diverging):
    if symmetrized:
        V = symmetrize(V)
    res = residual_by_level(V, kernels, rows=rows)
    choice = "seed supplied by caller" if seed_given else "free solution pins the null-space projection"
    if symmetrized:
        choice += "; symmetrized"
    return SolveReport(
        V=V,
        method="perturbation",
        series_terms_used=counts,
        residual=res,
        trusted_levels=res.trusted_levels,
        arbitrary_choice=choice,
        diverging=diverging,
        extras={"orders_used": used},
    )


def _interaction_inverse(kernels, L):
    if kernels.q != 0.0:
        return right_inverse_Nq(kernels, L)
    return right_inverse_N0(kernels, L)


def lower_triangular_expansion(kernels, L, seed=None, rows="all", budget=DEFAULT_BUDGET):
    """Terminating expansion V = sum_n (-1)^n [Ninv (K+G)]^n seed.

    Ninv (K+G) raises the level by at least 2, so every level receives a
    finite number of terms and the sum is exact.  The seed must be a
    null-space projection of the interaction; the default projects the
    free solution.
    """
    bundle = _interaction_inverse(kernels, L)
    seed_given = seed is not None
    if seed is None:
        seed = apply_operator(bundle.null_projector, free_solution(kernels, L, budget))
    KG = linear_operator(kernels) + source_operator(kernels)

    nonzero_counts = {}
    V = seed
    term = seed
    _count_touched_levels(nonzero_counts, term)
    n_terms = 1
    for n in range(1, L // 2 + 1):
        term = apply_operator(bundle.inverse, apply_operator(KG, term)) * -1.0
        if term.max_abs() == 0.0:
            break
        V = V + term
        _count_touched_levels(nonzero_counts, term)
        n_terms += 1
    # each power raises by at least 2, so level m can receive the powers
    # n with 2n <= m; which of those are nonzero depends on the seed
    structural = {m: min(m // 2, L // 2) + 1 for m in range(L + 1)}
    res = residual_by_level(V, kernels, rows=rows)
    return SolveReport(
        V=V,
        method="triangular",
        series_terms_used=structural,
        residual=res,
        trusted_levels=res.trusted_levels,
        arbitrary_choice=(
            "seed supplied by caller" if seed_given else "interaction null projection of the free solution"
        ),
        extras={"expansion_terms": n_terms, "nonzero_terms_per_level": nonzero_counts},
    )


def _symmetrizer_matrix(space, L):
    from .cuntz import flatten_vector, unflatten_vector

    offs = level_offsets(space.d, L)
    D = offs[-1]
    cols = []
    eye = np.eye(D)
    for j in range(D):
        v = unflatten_vector(space, L, eye[:, j])
        cols.append(flatten_vector(symmetrize(v)))
    return np.column_stack(cols)


def closed_equation_solve(
    kernels,
    L,
    chi=None,
    assumption="projected",
    rows="all",
    budget=DEFAULT_BUDGET,
    pivot_tol=1e-10,
    on_singular="pin",
):
    """Closed equation for the interaction null projection of |V>.

    Verifies that the branching term (right inverse of K, source range
    projector, interaction, interaction null projector) vanishes
    identically, assembles the projected closed operator, solves it
    level by level for u = P_N |V>, and reconstructs |V> through the
    terminating expansion seeded with u.

    assumption: "projected" pins the projected right-hand side with the
    free solution; "symmetrized" uses the weaker permutation-symmetric
    variant.

    The closed operator is not injective: its level-1 diagonal block
    always loses one direction (the sandwiched operator subtracts an
    oblique rank-one projector with unit trace), so the closure alone
    does not select a unique solution there.  With on_singular="pin"
    (default) the undetermined directions are pinned to the free
    solution and their dimensions reported in
    ``extras["null_dimensions"]``; "raise" raises
    :class:`SingularClosure` instead.  An inconsistent singular block
    always raises.
    """
    if assumption not in ("projected", "symmetrized"):
        raise ValueError(f"assumption={assumption!r} not in ('projected', 'symmetrized')")
    if on_singular not in ("pin", "raise"):
        raise ValueError(f"on_singular={on_singular!r} not in ('pin', 'raise')")
    space = kernels.space
    V0 = free_solution(kernels, L, budget)
    if kernels.lam == 0.0:
        res = residual_by_level(V0, kernels, rows=rows)
        return SolveReport(
            V=V0,
            method="closed",
            series_terms_used={},
            residual=res,
            trusted_levels=res.trusted_levels,
            arbitrary_choice="interaction absent: closure degenerates to the free solution",
            extras={"branching_residual": 0.0},
        )

    kb = right_inverse_K(kernels, L)
    lb = left_inverse_G(kernels, L, chi=chi)
    nb = _interaction_inverse(kernels, L)
    N_op = nb.operator
    KG = kb.operator + source_operator(kernels)

    # branching term vanishes identically: the closed equation exists
    branching = truncate_operator(
        compose(compose(kb.inverse, lb.range_projector, budget=budget), compose(N_op, nb.null_projector, budget=budget), budget=budget),
        L,
    )
    branching_residual = 0.0
    for t in branching.terms:
        branching_residual = max(branching_residual, float(np.abs(t.kernel).max()))

    neum = neumann_inverse(identity_operator(space) + compose(nb.inverse, KG, budget=budget), L, budget=budget)
    inner_op = compose(kb.inverse, source_operator(kernels) + compose(lb.range_projector, N_op, budget=budget), budget=budget)

    offs = level_offsets(space.d, L)
    P_N_mat = to_dense_matrix(nb.null_projector, L, budget=budget)
    neum_mat = to_dense_matrix(neum, L, budget=budget)
    inner_mat = to_dense_matrix(truncate_operator(inner_op, L), L, budget=budget)
    eye = np.eye(offs[-1])
    if assumption == "symmetrized":
        S_mat = _symmetrizer_matrix(space, L)
        A_mat = P_N_mat @ (eye + S_mat @ inner_mat) @ neum_mat @ P_N_mat
    else:
        A_mat = P_N_mat @ (eye + inner_mat) @ neum_mat @ P_N_mat

    # right-hand side pinned by the free solution
    proj = truncate_operator(
        identity_operator(space)
        - compose(compose(kb.inverse, lb.operator, budget=budget), compose(lb.inverse, kb.operator, budget=budget), budget=budget),
        L,
    )
    r_vec = apply_operator(proj, V0)
    if assumption == "symmetrized":
        r_vec = symmetrize(r_vec)
    r_vec = apply_operator(nb.null_projector, r_vec)
    r_flat = flatten_vector(r_vec)

    # forward substitution over levels; unknown constrained to range(P_N)
    pinned_target = flatten_vector(apply_operator(nb.null_projector, V0))
    u_flat = np.zeros(offs[-1])
    null_dims = {}
    for m in range(L + 1):
        sl_m = slice(offs[m], offs[m + 1])
        rhs = r_flat[sl_m].copy()
        for n in range(m):
            sl_n = slice(offs[n], offs[n + 1])
            rhs -= A_mat[sl_m, sl_n] @ u_flat[sl_n]
        block = A_mat[sl_m, sl_m]
        pn_block = P_N_mat[sl_m, sl_m]
        u_svd, sv, _ = np.linalg.svd(pn_block)
        rank_p = int((sv > pivot_tol * max(sv[0], 1.0)).sum()) if sv.size else 0
        if rank_p == 0:
            u_flat[sl_m] = 0.0
            continue
        basis = u_svd[:, :rank_p]
        reduced = block @ basis
        u_r, sv_r, vt_r = np.linalg.svd(reduced)
        # rank relative to the scale of the whole closed operator, so that
        # a pure-noise block counts as fully singular rather than rank one
        scale = max(float(sv_r[0]) if sv_r.size else 0.0, float(np.abs(A_mat).max()), 1.0)
        rank_a = int((sv_r > pivot_tol * scale).sum())
        null_dim = rank_p - rank_a
        if null_dim > 0:
            null_dims[m] = null_dim
            if on_singular == "raise":
                raise SingularClosure(
                    f"closed-equation block at level {m} singular (null dimension {null_dim})",
                    level=m,
                    null_dim=null_dim,
                )
        c = vt_r[:rank_a].T @ ((u_r[:, :rank_a].T @ rhs) / sv_r[:rank_a]) if rank_a else np.zeros(rank_p)
        misfit = float(np.abs(reduced @ c - rhs).max())
        if misfit > 1e-8 * max(1.0, float(np.abs(rhs).max())):
            raise SingularClosure(
                f"closed-equation block at level {m} inconsistent (misfit {misfit:.3e})",
                level=m,
                null_dim=null_dim,
            )
        if null_dim > 0:
            # pin the undetermined directions to the free-solution projection
            null_basis = vt_r[rank_a:].T  # (rank_p, null_dim)
            target = basis.T @ pinned_target[sl_m]
            c = c + null_basis @ (null_basis.T @ (target - c))
        u_flat[sl_m] = basis @ c

    u_vec = unflatten_vector(space, L, u_flat)
    report = lower_triangular_expansion(kernels, L, seed=u_vec, rows=rows, budget=budget)
    closure_residual = float(np.abs(A_mat @ u_flat - r_flat).max())
    return SolveReport(
        V=report.V,
        method="closed",
        series_terms_used=report.series_terms_used,
        residual=report.residual,
        trusted_levels=report.residual.trusted_levels,
        arbitrary_choice=f"projected right-hand side pinned by the free solution ({assumption})",
        extras={
            "branching_residual": branching_residual,
            "closure_residual": closure_residual,
            "null_dimensions": null_dims,
            "projection": u_vec,
        },
    )


def rational_solve(
    kernels,
    L,
    lam,
    form="unit",
    M_loc=None,
    symmetrized=False,
    rows="all",
    budget=DEFAULT_BUDGET,
):
    """Hierarchy with a rational interaction: finite series in the coupling.

    Solves the polynomial transform of ``(K + G + lam (I - N)^{-1} M)|V> = 0``
    (``M = I`` for form="unit").  The solution operator raises the level
    by at least 2 per power of lam, so each level is an exact polynomial
    in lam; the series below terminates.  The free solution seeds the
    series; it is permutation symmetric, so its symmetric projection is
    held coupling-independent either way.  With ``symmetrized`` each
    power is additionally symmetrized: the output is then a fixed point
    of the symmetrizer and satisfies the symmetrized resolvent equation
    exactly (``extras["resolvent_residual"]``), while the plain
    transformed-equation residual is reported for information only.
    """
    if form not in ("unit", "general"):
        raise ValueError(f"form={form!r} not in ('unit', 'general')")
    space = kernels.space
    try:
        nb = _interaction_inverse(kernels, L)
    except SingularInteraction as exc:
        raise SingularRationalForm(f"auxiliary inverse unavailable: {exc}") from exc
    KG = linear_operator(kernels) + source_operator(kernels)

    # Y solves (Ninv - I) Y = I, i.e. Y = -(I - Ninv)^{-1}, a Neumann inversion
    Y = neumann_inverse(identity_operator(space) + nb.inverse * -1.0, L, budget=budget) * -1.0
    # application order is right to left: M first, then Y and Ninv, then (K+G)inv
    R_chain = [Y, nb.inverse]
    if form == "general":
        M_op = M_loc if M_loc is not None else OperatorExpr(space, (Monomial(1, 1, np.eye(space.d)),))
        R_chain.insert(0, M_op)

    V0 = free_solution(kernels, L, budget)
    counts = {}
    V = V0
    term = V0
    _count_touched_levels(counts, term)
    degrees = {n: 0 for n in range(L + 1)}
    for j in range(1, L // 2 + 1):
        w = term
        for op in R_chain:
            w = apply_operator(op, w)
        w = apply_right_inverse_K_plus_G(kernels, w)
        term = w * (-lam)
        if symmetrized:
            term = symmetrize(term)
        if term.max_abs() == 0.0:
            break
        V = V + term
        _count_touched_levels(counts, term)
        for n in range(L + 1):
            t = term.levels[n]
            if (float(np.abs(t).max()) if t.size else float(abs(t))) != 0.0:
                degrees[n] = j

    transformed = _transformed_operator(kernels, lam, form, M_loc, budget)
    image = apply_operator(transformed, V)
    res_per_level = {
        n: (float(np.abs(image.levels[n]).max()) if image.levels[n].size else float(abs(image.levels[n])))
        for n in range(L + 1)
    }
    res = ResidualReport(per_level=res_per_level, trusted_levels=(1, max(L - 2, 1)), rows="all")
    extras = {"lambda": lam, "lambda_degree_per_level": degrees, "form": form}
    if symmetrized:
        # the symmetrized series inverts (I + lam S R M) exactly
        check = V
        for op in R_chain:
            check = apply_operator(op, check)
        check = apply_right_inverse_K_plus_G(kernels, check)
        resolvent = V + lam * symmetrize(check) - V0
        extras["resolvent_residual"] = resolvent.max_abs()
    return SolveReport(
        V=V,
        method="rational",
        series_terms_used=counts,
        residual=res,
        trusted_levels=res.trusted_levels,
        arbitrary_choice=(
            "symmetric projection of the free data held coupling-independent; termwise symmetrized"
            if symmetrized
            else "free data held coupling-independent"
        ),
        extras=extras,
    )


def _transformed_operator(kernels, lam, form, M_loc, budget):
    """(I - N)(K + G) + lam M, the polynomial form of the rational equation."""
    space = kernels.space
    N_op = interaction_operator(kernels)
    KG = linear_operator(kernels) + source_operator(kernels)
    base = KG - compose(N_op, KG, budget=budget)
    if form == "unit":
        return base + lam * identity_operator(space)
    M_op = M_loc if M_loc is not None else OperatorExpr(space, (Monomial(1, 1, np.eye(space.d)),))
    return base + lam * M_op


def rational_transformed_residual(kernels, L, lam, V, form="unit", M_loc=None, budget=DEFAULT_BUDGET):
    op = _transformed_operator(kernels, lam, form, M_loc, budget)
    image = apply_operator(op, V)
    return {
        n: (float(np.abs(image.levels[n]).max()) if image.levels[n].size else float(abs(image.levels[n])))
        for n in range(L + 1)
    }


def lambda_degree_check(solve_fn, lambda_grid, L, tol=1e-10, cond_limit=1e8):
    """Fit the minimal polynomial degree in lam of each level component.

    ``solve_fn(lam)`` must return a FockVector; the fit is entrywise
    over the grid.  Reports {level: (degree, residual)} where degree is
    the smallest one whose interpolation residual falls below tol times
    the component scale.
    """
    grid = np.asarray(lambda_grid, dtype=float)
    if grid.size < 3:
        raise ValueError("lambda grid needs at least 3 points")
    vecs = [solve_fn(lam) for lam in grid]
    out = {}
    for n in range(L + 1):
        stack = np.stack([np.ravel(v.levels[n]) for v in vecs])  # (n_lam, entries)
        scale = max(float(np.abs(stack).max()), 1.0)
        chosen = None
        for deg in range(grid.size - 1):
            vand = np.vander(grid, deg + 1, increasing=True)
            if np.linalg.cond(vand) > cond_limit:
                warnings.warn(
                    f"degree-{deg} fit over the lambda grid is ill conditioned", ConditioningWarning
                )
            coeff, *_ = np.linalg.lstsq(vand, stack, rcond=None)
            resid = float(np.abs(vand @ coeff - stack).max())
            if resid <= tol * scale:
                chosen = (deg, resid)
                break
        if chosen is None:
            chosen = (grid.size - 1, float("nan"))
        out[n] = chosen
    return out
