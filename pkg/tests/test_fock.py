import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freefock import (
    assemble_from_correlations,
    build_index_space,
    extract_correlation,
    from_json,
    inner,
    project_level,
    symmetrize,
    to_json,
    vacuum,
)
from freefock.errors import BudgetExceeded, LevelOutOfRange, NormalizationError
from freefock.fock import FockVector, basis_word


def random_vector(space, L, seed=0):
    rng = np.random.default_rng(seed)
    return FockVector(space, tuple(rng.standard_normal((space.d,) * n) for n in range(L + 1)))


class TestVacuum:
    def test_definition(self):
        space = build_index_space(1, (0,))
        v = vacuum(space, 2)
        assert float(v.level(0)) == 1.0
        assert np.all(v.level(1) == 0.0)
        assert np.all(v.level(2) == 0.0)

    def test_normalization(self):
        space = build_index_space(1, (0, 1))
        v = vacuum(space, 3)
        assert inner(v, v) == 1.0

    def test_grading(self):
        space = build_index_space(1, (0, 1))
        v = vacuum(space, 3)
        assert project_level(v, 1).max_abs() == 0.0

    def test_budget(self):
        space = build_index_space(1, tuple(range(50)))
        with pytest.raises(BudgetExceeded):
            vacuum(space, 5, budget=10_000)


class TestProjectors:
    @pytest.mark.parametrize("d,L", [(2, 4), (3, 4), (4, 4), (5, 4)])
    def test_orthogonality_and_completeness(self, d, L):
        space = build_index_space(1, tuple(range(d)))
        v = random_vector(space, L, seed=d)
        total = None
        for n in range(L + 1):
            pn = project_level(v, n)
            assert project_level(pn, n).allclose(pn, atol=0)  # idempotent
            for m in range(L + 1):
                if m != n:
                    assert project_level(pn, m).max_abs() == 0.0
            total = pn if total is None else total + pn
        assert total.allclose(v, atol=0)

    def test_out_of_range(self):
        space = build_index_space(1, (0,))
        with pytest.raises(LevelOutOfRange):
            project_level(vacuum(space, 2), 3)


class TestInner:
    def test_basis_words_orthonormal(self):
        space = build_index_space(1, (0, 1, 2))
        for i in range(3):
            for j in range(3):
                ei = basis_word(space, 2, (i,))
                ej = basis_word(space, 2, (j,))
                assert inner(ei, ej) == (1.0 if i == j else 0.0)

    def test_positive(self):
        space = build_index_space(1, (0, 1))
        v = random_vector(space, 3, seed=5)
        assert inner(v, v) >= 0.0

    def test_flatten_dot_oracle(self):
        space = build_index_space(1, (0, 1))
        u = random_vector(space, 3, seed=1)
        v = random_vector(space, 3, seed=2)
        flat = sum(float(np.dot(a.ravel(), b.ravel())) for a, b in zip(u.levels, v.levels))
        assert inner(u, v) == pytest.approx(flat, abs=1e-12)


class TestSymmetrize:
    def test_hand_value(self):
        # level-2 tensor [[0,1],[0,0]] averages to [[0,.5],[.5,0]]
        space = build_index_space(1, (0, 1))
        levels = (np.ones(()), np.zeros(2), np.array([[0.0, 1.0], [0.0, 0.0]]))
        v = FockVector(space, levels)
        s = symmetrize(v)
        assert np.allclose(s.level(2), [[0.0, 0.5], [0.5, 0.0]], atol=0)

    def test_fixed_point(self):
        space = build_index_space(1, (0, 1))
        t = np.array([[1.0, 2.0], [2.0, 3.0]])
        v = FockVector(space, (np.ones(()), np.zeros(2), t))
        assert symmetrize(v).allclose(v, atol=0)

    @given(seed=st.integers(0, 1000))
    @settings(deadline=None, max_examples=25)
    def test_idempotent(self, seed):
        space = build_index_space(1, (0, 1))
        v = random_vector(space, 3, seed=seed)
        once = symmetrize(v)
        assert symmetrize(once).allclose(once, atol=1e-14)

    def test_commutes_with_level_projection(self):
        space = build_index_space(1, (0, 1))
        v = random_vector(space, 3, seed=9)
        for n in range(4):
            a = symmetrize(project_level(v, n))
            b = project_level(symmetrize(v), n)
            assert a.allclose(b, atol=1e-14)


class TestCorrelationAccess:
    def test_empty_word(self):
        space = build_index_space(1, (0, 1))
        v = vacuum(space, 2)
        assert extract_correlation(v, ()) == 1.0

    def test_word_too_long(self):
        space = build_index_space(1, (0, 1))
        with pytest.raises(LevelOutOfRange):
            extract_correlation(vacuum(space, 2), (0, 0, 0))

    def test_symmetrized_extraction_is_word_invariant(self):
        space = build_index_space(1, (0, 1))
        v = symmetrize(random_vector(space, 3, seed=3))
        assert extract_correlation(v, (0, 1, 1)) == pytest.approx(
            extract_correlation(v, (1, 1, 0)), abs=1e-14
        )

    def test_assemble_empty_is_vacuum(self):
        space = build_index_space(1, (0, 1))
        with pytest.warns(UserWarning):
            v = assemble_from_correlations({}, space, 2)
        assert v.allclose(vacuum(space, 2), atol=0)

    def test_assemble_round_trip(self):
        space = build_index_space(1, (0, 1))
        table = {(0,): 0.5, (1,): -0.25, (0, 1): 2.0, (1, 0): -3.0}
        with pytest.warns(UserWarning):
            v = assemble_from_correlations(table, space, 3)
        for word, value in table.items():
            assert extract_correlation(v, word) == value

    def test_non_symmetric_table_assembles_verbatim(self):
        space = build_index_space(1, (0, 1))
        table = {(0, 1): 1.0, (1, 0): 0.0}
        with pytest.warns(UserWarning):
            v = assemble_from_correlations(table, space, 2)
        assert extract_correlation(v, (0, 1)) == 1.0
        s = symmetrize(v)
        assert extract_correlation(s, (0, 1)) == 0.5

    def test_bad_normalization(self):
        space = build_index_space(1, (0,))
        with pytest.raises(NormalizationError):
            assemble_from_correlations({(): 2.0}, space, 1, warn_missing=False)


class TestJson:
    def test_bit_exact_round_trip(self):
        space = build_index_space(1, (0, 1, 2))
        v = random_vector(space, 3, seed=11)
        w = from_json(to_json(v), space)
        for a, b in zip(v.levels, w.levels):
            assert np.array_equal(a, b)
            assert a.tobytes() == b.tobytes()

    def test_document_fields(self):
        space = build_index_space(1, (0, 1))
        doc = json.loads(to_json(vacuum(space, 2)))
        assert doc["d"] == 2 and doc["L"] == 2 and len(doc["levels"]) == 3
