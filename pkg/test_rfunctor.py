import pytest

from fpla import SparseMatFp, StabilityViolationError, rank_of
from invariants import GammaMonomial, gamma_unit
from rfunctor import (
    act_on_rs, coaction, embed_in_r1, ks_form, pullback, rho_1, rho_s, rho_target, rs_basis,
    rs_degree, rs_dims, rs_gamma_basis, rs_to_ambient, s_one_twice, s_total, split_s_total, st_total,
)
from run_model import RsSign
from steenrod import MilnorElement, bv1, free_module, frobenius_degree, sphere, suspend, truncate


def _rank(p, images):
    """Rank of a list of sparse vectors keyed by arbitrary labels"""
    keys = sorted({k for v in images for k in v}, key=repr)
    if not images or not keys:
        return 0
    index = {k: i for i, k in enumerate(keys)}
    entries = [(r, index[k], c) for r, v in enumerate(images) for k, c in v.items()]
    return rank_of(SparseMatFp.from_entries(p, len(images), len(keys), entries))


class TestTotalPowers:
    def test_coaction(self):
        N = bv1(3, 10)
        assert coaction(N, {"uv0": 1}, 1) == [
            (MilnorElement((), ()), {"uv0": 1}),
            (MilnorElement((0,), ()), {"v1": 1}),
        ]

    def test_st_even_class(self):
        N = bv1(3, 10)
        ambient, extra = st_total(N, {"v1": 1}, 1)
        assert extra == 0
        assert ambient == {(GammaMonomial((), (1,)), "v1"): 2, (GammaMonomial((), (0,)), "v3"): 1}

    def test_st_odd_class(self):
        N = bv1(3, 10)
        ambient, extra = st_total(N, {"uv0": 1}, 1)
        assert extra == 1
        assert ambient == {(GammaMonomial((), (0,)), "uv0"): 1, (GammaMonomial((0,), (-1,)), "v1"): 2}

    def test_s2_on_bv1(self):
        N = bv1(3, 20)
        assert s_total(N, {"v1": 1}, 2) == {
            (GammaMonomial((), (0, 0)), "v1"): 1,
            (GammaMonomial((), (-1, 1)), "v3"): 2,
            (GammaMonomial((), (-1, 0)), "v9"): 1,
        }
        assert s_total(N, {"uv0": 1}, 2) == {
            (gamma_unit(2), "uv0"): 1,
            (GammaMonomial((0,), (-1, 0)), "v1"): 2,
            (GammaMonomial((1,), (-1, 0)), "v3"): 1,
        }

    def test_st_rank_zero_is_identity(self):
        N = bv1(3, 6)
        assert st_total(N, {"v2": 2}, 0) == ({(gamma_unit(0), "v2"): 2}, 0)


class TestBases:
    def test_rank_zero(self):
        N = bv1(3, 8)
        basis = rs_basis(N, 0, RsSign.PLUS, 0, 8)
        assert [basis.dim(d) for d in range(9)] == [N.dim(d) for d in range(9)]
        assert len(rs_basis(N, 0, RsSign.MINUS, 0, 8)) == 0

    def test_r1_of_sphere(self):
        N = sphere(3, 0)
        assert [rs_dims(N, 1, RsSign.PLUS, d) for d in range(9)] == [1, 0, 0, 1, 1, 0, 0, 1, 1]

    @pytest.mark.parametrize("s", [1, 2])
    def test_full_is_plus_and_minus(self, s):
        N = bv1(3, 4)
        for d in range(0, 60):
            full = rs_dims(N, s, RsSign.FULL, d)
            assert full == rs_dims(N, s, RsSign.PLUS, d) + rs_dims(N, s, RsSign.MINUS, d)

    @pytest.mark.parametrize("s", [1, 2])
    def test_suspension_swaps_eigenspaces(self, s):
        N = sphere(3, 1)
        for d in range(0, 60):
            assert rs_dims(suspend(N, 1), s, RsSign.PLUS, d) == rs_dims(N, s, RsSign.MINUS, d - 3 ** s)

    def test_gamma_form_degrees(self):
        N = bv1(3, 5)
        basis = rs_gamma_basis(N, 2, 0, 50)
        for d, cell in basis.items():
            for mono, label in cell:
                assert rs_degree(N, (mono, label)) == d
                assert 2 * mono.exps[0] + len(mono.mask) >= N.degrees[label]

    def test_ks_form_round_trip(self):
        N = sphere(3, 2)
        for d, cell in rs_basis(N, 1, RsSign.PLUS, 0, 40).items():
            gamma_cell = rs_gamma_basis(N, 1, d, d)[d]
            for (k, label), pair in zip(cell, gamma_cell):
                (k2, label2), = ks_form(N, 1, {pair: 1})
                assert (k2, label2) == (k, label)


class TestPullback:
    def test_basis_element_is_its_own_expansion(self):
        N = sphere(3, 0)
        e = {(GammaMonomial((0,), (0,)), "x"): 1}
        assert rs_to_ambient(N, 1, e) == e
        assert pullback(N, 1, e) == e

    def test_rejects_unstable_pair(self):
        N = sphere(3, 0)
        with pytest.raises(StabilityViolationError) as info:
            pullback(N, 1, {(GammaMonomial((), (-1,)), "x"): 1})
        assert info.value.witness["label"] == "x"

    def test_round_trip_on_bv1(self):
        N = bv1(3, 12)
        for d, cell in rs_gamma_basis(N, 1, 0, 30).items():
            for pair in cell:
                assert pullback(N, 1, rs_to_ambient(N, 1, {pair: 1})) == {pair: 1}


class TestAction:
    def test_beta_kills_even_dickson_class(self):
        N = bv1(3, 12)
        assert act_on_rs(N, 1, {(GammaMonomial((), (1,)), "v1"): 1}, ("beta",)) == {}

    def test_p0_is_identity(self):
        N = bv1(3, 12)
        e = {(GammaMonomial((0,), (1,)), "uv0"): 2}
        assert act_on_rs(N, 1, e, ("P", 0)) == e

    def test_beta_on_w(self):
        N = sphere(3, -1)
        e = {(GammaMonomial((0,), (-1,)), "x"): 1}
        assert act_on_rs(N, 1, e, ("beta",)) == {(gamma_unit(1), "x"): 1}
        assert act_on_rs(N, 1, e, ("P", 1)) == {(GammaMonomial((0,), (0,)), "x"): 2}

    @pytest.mark.parametrize("N,s,hi", [
        (bv1(3, 12), 1, 30),
        (sphere(3, -1), 1, 30),
        (sphere(3, 0), 2, 40),
    ])
    def test_closed_under_steenrod_operations(self, N, s, hi):
        for d, cell in rs_gamma_basis(N, s, N.lo, hi).items():
            for pair in cell:
                for op in [("beta",), ("P", 1), ("P", 3)]:
                    image = act_on_rs(N, s, {pair: 1}, op)
                    for key in image:
                        assert rs_degree(N, key) == d + (1 if op[0] == "beta" else 4 * op[1])


class TestRho:
    def test_rho_1_on_spheres(self):
        even = sphere(3, 0)
        assert rho_1(even, {(gamma_unit(1), "x"): 1}) == {"phi.x": 2}
        assert rho_1(even, {(GammaMonomial((), (1,)), "x"): 1}) == {}
        odd = sphere(3, 1)
        assert rho_1(odd, {(GammaMonomial((0,), (0,)), "x"): 1}) == {"phi.x": 1}
        assert rho_target(even).degrees == {"phi.x": 0}

    def test_rho_2_bottom_class(self):
        N = sphere(3, 0)
        assert rho_s(N, 2, {(gamma_unit(2), "x"): 1}) == {(gamma_unit(1), "x"): 2}

    def test_rho_s_needs_positive_rank(self):
        with pytest.raises(ValueError):
            rho_s(sphere(3, 0), 0, {})

    def test_rho_2_is_onto(self):
        p = 3
        N = sphere(3, 0)
        r1 = rs_gamma_basis(N, 1, 0, 12)
        for d in range(0, 27):
            images = [rho_s(N, 2, {pair: 1}) for pair in rs_gamma_basis(N, 2, d, d)[d]]
            target = [y for deg, cell in r1.items() for y in cell if frobenius_degree(p, deg + 1) - 2 == d]
            assert _rank(p, images) == len(target)
            assert len(target) == rs_dims(N, 2, RsSign.PLUS, d) - rs_dims(suspend(N, 1), 2, RsSign.PLUS, d + 1)


class TestEmbedding:
    @pytest.mark.parametrize("label,limit", [("v1", 14), ("uv0", 14), ("v2", 16)])
    def test_split_s2_is_s1_twice(self, label, limit):
        N = bv1(3, 20)
        assert split_s_total(N, label, 2, limit) == s_one_twice(N, label, 2, limit)

    def test_split_s2_on_truncated_free_module(self):
        N = truncate(free_module(3, 0, 12), 13, "below")
        assert split_s_total(N, "1", 2, 12) == s_one_twice(N, "1", 2, 12)

    def test_embedding_is_injective(self):
        p = 3
        N = sphere(3, 0)
        for d, cell in rs_gamma_basis(N, 2, 0, 40).items():
            images = [embed_in_r1(N, 2, {pair: 1}) for pair in cell]
            assert _rank(p, images) == len(cell)

    def test_bottom_class_coordinates(self):
        N = sphere(3, 0)
        assert embed_in_r1(N, 2, {(gamma_unit(2), "x"): 1}) == {(gamma_unit(1), (gamma_unit(1), "x")): 1}
