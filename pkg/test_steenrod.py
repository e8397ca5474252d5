from itertools import product

import pytest

from steenrod import (
    BETA, MILNOR_UNIT, UNIT, MilnorElement, act, adem_reduce, admissible_basis, bv1,
    change_of_basis, destabilize, direct_sum, excess, free_module, frobenius, is_admissible,
    is_unstable, lambda_map, milnor_basis, milnor_multiply, milnor_multiply_sums,
    parse_word_label, power, sphere, suspend, truncate, unstable_free_dims, word_degree,
    word_label, word_to_milnor,
)


def _milnor_of_sum(p, combo):
    out = {}
    for w, c in combo.items():
        for m, c2 in word_to_milnor(p, w).items():
            out[m] = (out.get(m, 0) + c * c2) % p
    return {m: c for m, c in out.items() if c}


def _dims(M, lo, hi):
    return [M.dim(d) for d in range(lo, hi + 1)]


class TestAdmissibleBasis:
    def test_low_degrees(self):
        assert admissible_basis(3, 0) == (UNIT,)
        assert admissible_basis(3, 1) == (BETA,)
        assert admissible_basis(3, 4) == (power(1),)
        assert admissible_basis(3, 2) == ()

    @pytest.mark.parametrize("p", [3, 5])
    def test_words_are_admissible_and_degree_correct(self, p):
        for degree in range(0, 50):
            words = admissible_basis(p, degree)
            assert len(set(words)) == len(words)
            for w in words:
                assert is_admissible(p, w)
                assert word_degree(p, w) == degree

    def test_excess(self):
        assert excess(3, UNIT) == 0
        assert excess(3, BETA) == 1
        assert excess(3, power(1)) == 2
        assert excess(3, (1, 3, 0, 1, 0)) == 1 + 6 - 4

    def test_labels_round_trip(self):
        for w in admissible_basis(3, 27):
            assert parse_word_label(word_label(w)) == w


class TestAdem:
    def test_beta_squared(self):
        assert adem_reduce(3, (2,)) == {}
        # beta P^1 beta P^1 beta = beta (beta P^2 + P^2 beta) beta
        assert adem_reduce(3, (1, 1, 1, 1, 1)) == {}

    def test_admissible_fixed_point(self):
        w = (1, 4, 1, 1, 0)
        assert adem_reduce(3, w) == {w: 1}

    def test_p1_p1_at_3(self):
        assert adem_reduce(3, (0, 1, 0, 1, 0)) == {power(2): 2}

    @pytest.mark.parametrize("p", [3, 5])
    def test_adem_agrees_with_milnor_product(self, p):
        for e0, s1, e1, s2, e2 in product((0, 1), range(0, 4), (0, 1), range(0, 4), (0, 1)):
            word = (e0, s1, e1, s2, e2)
            if word_degree(p, word) > 30:
                continue
            reduced = adem_reduce(p, word)
            assert all(is_admissible(p, w) for w in reduced)
            assert _milnor_of_sum(p, reduced) == _milnor_of_sum(p, {word: 1})

    def test_three_factor_words(self):
        p = 3
        for s1, s2, s3 in product(range(1, 3), repeat=3):
            word = (0, s1, 1, s2, 0, s3, 1)
            reduced = adem_reduce(p, word)
            assert _milnor_of_sum(p, reduced) == _milnor_of_sum(p, {word: 1})


class TestMilnor:
    def test_unit(self):
        x = MilnorElement((0,), (1,))
        assert milnor_multiply(3, MILNOR_UNIT, x) == {x: 1}
        assert milnor_multiply(3, x, MILNOR_UNIT) == {x: 1}

    def test_exterior_square(self):
        q0 = MilnorElement((0,), ())
        assert milnor_multiply(3, q0, q0) == {}

    def test_p1_p1(self):
        p1 = MilnorElement((), (1,))
        assert milnor_multiply(3, p1, p1) == {MilnorElement((), (2,)): 2}

    def test_p1_beta(self):
        product_ = milnor_multiply(3, MilnorElement((), (1,)), MilnorElement((0,), ()))
        assert product_ == {MilnorElement((0,), (1,)): 1, MilnorElement((1,), ()): 1}

    def test_degrees(self):
        assert MilnorElement((0, 1), (1,)).degree(3) == 1 + 5 + 4

    @pytest.mark.parametrize("p", [3, 5])
    def test_associative(self, p):
        sample = [m for d in (1, 4, 5, 8, 9) for m in milnor_basis(p, d)][:8]
        for a, b, c in product(sample, repeat=3):
            left = milnor_multiply_sums(p, milnor_multiply(p, a, b), {c: 1})
            right = milnor_multiply_sums(p, {a: 1}, milnor_multiply(p, b, c))
            assert left == right

    @pytest.mark.parametrize("p,top", [(3, 60), (5, 40)])
    def test_change_of_basis_invertible(self, p, top):
        for degree in range(0, top + 1):
            change = change_of_basis(p, degree)
            assert len(change.milnor) == len(change.admissible)

    def test_change_of_basis_small(self):
        assert change_of_basis(3, 0).matrix.tolist() == [[1]]
        assert change_of_basis(3, 1).matrix.tolist() == [[1]]
        assert change_of_basis(3, 4).matrix.tolist() == [[1]]


class TestModules:
    def test_beta_u_is_v(self):
        M = bv1(3, 10)
        assert act(M, BETA, {"uv0": 1}) == {"v1": 1}
        assert act(M, BETA, act(M, BETA, {"uv0": 1})) == {}

    def test_unit_acts_as_identity(self):
        M = bv1(3, 10)
        assert act(M, UNIT, {"uv2": 2}) == {"uv2": 2}
        assert act(M, MILNOR_UNIT, {"v3": 1}) == {"v3": 1}

    def test_action_respects_relations(self):
        M = bv1(3, 14)
        once = act(M, power(1), act(M, power(1), {"v2": 1}))
        assert once == act(M, (0, 1, 0, 1, 0), {"v2": 1}) == {"v6": 2}

    def test_sphere_and_suspension(self):
        M = sphere(3, 0)
        assert suspend(M, 0) is M
        assert suspend(suspend(bv1(3, 8), 2), -2) == bv1(3, 8)
        assert suspend(M, 5).degree_of("x") == 5

    def test_truncation(self):
        M = bv1(3, 12)
        assert _dims(truncate(M, 3, "below"), 0, 5) == [1, 1, 1, 0, 0, 0]
        assert truncate(M, 40, "below") == M
        assert len(truncate(sphere(3, 0), 0, "below").labels) == 0
        upper = truncate(M, 5, "above")
        assert upper.bottom() == 5
        assert act(upper, BETA, {"uv2": 1}) == {"v3": 1}

    def test_free_module_dims(self):
        F = free_module(3, 0, 20)
        assert _dims(F, 0, 20) == [len(admissible_basis(3, d)) for d in range(0, 21)]

    def test_frobenius(self):
        assert frobenius(sphere(3, 0)).degrees == {"phi.x": 0}
        assert frobenius(sphere(3, 1)).degrees == {"phi.x": 2}
        phi = frobenius(bv1(3, 10))
        assert all(act(phi, BETA, {label: 1}) == {} for label in phi.labels)
        # P^1 on Phi(u) is Phi(beta u)
        assert act(phi, power(1), {"phi.uv0": 1}) == {"phi.v1": 1}
        assert act(phi, power(3), {"phi.v1": 1}) == {"phi.v3": 1}

    def test_lambda(self):
        images = lambda_map(bv1(3, 10))
        assert images["phi.v0"] == {"v0": 1}
        assert images["phi.v1"] == {"v3": 1}
        assert images["phi.uv0"] == {"v1": 1}

    def test_destabilize_unstable_is_identity(self):
        M = bv1(3, 12)
        assert is_unstable(M)
        assert _dims(destabilize(M), 0, 12) == _dims(M, 0, 12)

    def test_destabilize_desuspended_bv1(self):
        M = suspend(bv1(3, 12), -1)
        assert not is_unstable(M)
        D = destabilize(M)
        # the classes of degree < 0 and the images of P^k on v^k die
        assert D.dim(-1) == 0
        assert D.dim(0) == 1
        assert D.dim(1) == 0
        assert D.dim(2) == 1

    @pytest.mark.parametrize("t", [0, 1, 2, 3])
    def test_destabilize_free_is_free_unstable(self, t):
        D = destabilize(free_module(3, t, 24))
        assert _dims(D, t, 24) == [unstable_free_dims(3, t, d) for d in range(t, 25)]

    def test_negative_sphere_is_not_unstable(self):
        assert not is_unstable(sphere(3, -1))
        assert destabilize(sphere(3, -1)).labels == []

    def test_direct_sum(self):
        M = direct_sum(sphere(3, 0), sphere(3, 1))
        assert M.degrees == {"0:x": 0, "1:x": 1}
