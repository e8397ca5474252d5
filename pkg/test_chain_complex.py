import pytest

import chain_complex
from chain_complex import (
    boundary, build_complex, connecting_map_check, connectivity_bound, connectivity_check,
    homology, homology_rows, kernel_characterization, min_basis_degree, vanishing_check,
    verify_dickson_linearity, verify_ses, unstable_identification_check,
)
from fpla import RankCapError, TwistTooSmallError
from invariants import GammaMonomial, gamma_unit
from steenrod import bv1, destabilize, free_module, sphere, suspend, truncate


def _shifted_bv1():
    """Sigma^{-3} of H*(BV_1) through degree 12; not unstable, so d_1 has content"""
    return suspend(bv1(3, 12), -3)


class TestBounds:
    def test_connectivity_bound(self):
        assert connectivity_bound(3, 0, 0) == 0
        assert connectivity_bound(3, 1, 0) == 1
        assert connectivity_bound(3, 2, 0) == 10
        assert connectivity_bound(5, 1, 2) == 11

    def test_min_basis_degree(self):
        assert min_basis_degree(3, 0, 4) == 4
        assert min_basis_degree(3, 1, 0) == 1
        assert min_basis_degree(3, 1, 1) == 5

    def test_min_basis_degree_matches_bases(self):
        for t in range(-2, 3):
            c = build_complex(sphere(3, t), 1, 40)
            assert min(d for d, cell in c.bases[1].items() if cell) == min_basis_degree(3, 1, t)


class TestBuild:
    def test_rank_cap(self):
        with pytest.raises(RankCapError):
            build_complex(sphere(3, 0), 4, 10)
        with pytest.raises(RankCapError):
            build_complex(sphere(5, 0), 3, 10)

    def test_rank_zero_is_the_module(self):
        M = _shifted_bv1()
        c = build_complex(M, 1, 9, lo=-3)
        for d in range(-3, 10):
            assert c.dim(0, d) == M.dim(d)

    def test_matrix_shapes(self):
        c = build_complex(sphere(3, 0), 2, 30)
        for s in (1, 2):
            for d in range(c.lo, c.hi + 1):
                assert c.matrix(s, d).shape == (c.dim(s - 1, d), c.dim(s, d))

    def test_squares_to_zero(self):
        c = build_complex(sphere(3, -1), 2, 40)
        for d in range(c.lo, c.hi + 1):
            assert c.matrix(1, d).compose(c.matrix(2, d)).is_zero()

    @pytest.mark.parametrize("M", [free_module(3, 0, 40), truncate(free_module(3, 0, 20), 6, "below")],
                             ids=["free", "free-below-6"])
    def test_rank_two_on_free_modules(self, M):
        # Q_1 acts nontrivially on these, so d_2 meets the odd part of S_1
        c = build_complex(M, 2, 20)
        assert any(c.dim(2, d) for d in range(c.lo, c.hi + 1))
        for d in range(c.lo, c.hi + 1):
            assert c.matrix(1, d).compose(c.matrix(2, d)).is_zero()


class TestDifferential:
    def test_d1_on_w(self):
        N = sphere(3, -1)
        c = build_complex(N, 1, 8, lo=-1)
        w = (GammaMonomial((0,), (-1,)), "x")
        assert c.basis(1, -1) == (w,)
        assert c.apply(1, {w: 1}) == {(gamma_unit(0), "x"): 1}
        assert c.matrix(1, -1).entries == {(0, 0): 1}

    def test_d1_on_q_pair_is_beta_power(self):
        c = build_complex(_shifted_bv1(), 1, 9, lo=-3)
        assert c.apply(1, {(GammaMonomial((), (0,)), "uv1"): 1}) == {(gamma_unit(0), "v2"): 2}

    def test_d1_on_r_pair_is_power(self):
        c = build_complex(_shifted_bv1(), 1, 9, lo=-3)
        assert c.apply(1, {(GammaMonomial((0,), (0,)), "v2"): 1}) == {(gamma_unit(0), "v4"): 1}

    def test_d1_vanishes_on_unstable_module(self):
        c = build_complex(bv1(3, 12), 1, 30)
        assert all(m.is_zero() for (_, s), m in c.differentials.items() if s == 1)

    def test_boundary_at_rank_zero(self):
        M = sphere(3, 0)
        assert boundary(M, M, 0, {(gamma_unit(0), "x"): 1}) == {}


class TestHomology:
    @pytest.mark.parametrize("M", [sphere(3, -1), sphere(3, 2), _shifted_bv1(), bv1(3, 10)])
    def test_h0_is_destabilization(self, M):
        c = build_complex(M, 1, M.hi, lo=M.lo)
        D = destabilize(M)
        h = homology(c, 0)
        for d, dim in h.dims.items():
            assert dim == D.dim(d)

    def test_upper_bound_at_top_position(self):
        assert homology(build_complex(sphere(3, 0), 1, 30), 1).upper_bound
        assert not homology(build_complex(sphere(3, 0), 1, 8), 1).upper_bound

    def test_homology_range(self):
        c = build_complex(sphere(3, 0), 1, 8)
        with pytest.raises(ValueError):
            homology(c, 2)

    def test_rows_include_zeros(self):
        c = build_complex(sphere(3, 0), 1, 8)
        rows = homology_rows(c)
        assert {(r.s, r.degree) for r in rows} == {(s, d) for s in (0, 1) for d in c.valid_degrees(s)}
        assert any(r.dim == 0 for r in rows)

    def test_representatives_are_cycles(self):
        c = build_complex(sphere(3, 0), 2, 30)
        h = homology(c, 1)
        for d, reps in h.representatives.items():
            assert len(reps) == h.dims[d]
            for rep in reps:
                assert c.apply(1, rep) == {}


class TestChecks:
    def test_connectivity(self):
        assert connectivity_check(build_complex(sphere(3, 0), 2, 40)).passed

    def test_free_module_has_no_higher_homology(self):
        result = vanishing_check(free_module(3, 0, 20), 1, 20)
        assert result.passed
        assert result.checked > 0

    @pytest.mark.parametrize("M", [sphere(3, 0), sphere(3, 1), sphere(5, 0)])
    def test_unstable_homology_at_s1(self, M):
        result = unstable_identification_check(M, 1, 40)
        assert result.passed, result.failures[:3]

    def test_connecting_map(self):
        for M in (sphere(3, -1), sphere(3, -2), _shifted_bv1()):
            result = connecting_map_check(build_complex(M, 1, M.hi + 1))
            assert result.passed, result.failures[:3]
            assert result.checked > 0

    @pytest.mark.parametrize("M,hi", [(sphere(3, 0), 30), (sphere(3, -1), 24)])
    def test_short_exact_sequence(self, M, hi):
        result = verify_ses(M, 2, hi)
        assert result.passed, result.failures[:3]

    @pytest.mark.slow
    def test_squares_carry_the_degree_sign(self):
        result = verify_ses(_shifted_bv1(), 2, 10)
        assert result.passed, result.failures[:3]
        assert result.details["nonzero_squares"].get(2, 0) > 0

    @pytest.mark.slow
    def test_square_with_flipped_d1_fails(self, monkeypatch):
        def flipped(source, target, s, e):
            image = boundary(source, target, s, e)
            return {k: -v for k, v in image.items()} if s == 1 else image

        monkeypatch.setattr(chain_complex, "boundary", flipped)
        result = verify_ses(_shifted_bv1(), 2, 10, samples=4)
        assert not result.passed
        assert any(f.reason == "square does not commute" for f in result.failures)

    def test_linearity(self):
        result = verify_dickson_linearity(sphere(3, 0), 2, 3, 1, 30)
        assert result.passed, result.failures[:3]
        assert not result.informative

    def test_small_twist_is_informative(self):
        result = verify_dickson_linearity(sphere(3, 0), 1, 3, 0, 20)
        assert result.informative
        with pytest.raises(TwistTooSmallError):
            verify_dickson_linearity(sphere(3, 0), 1, 3, 0, 20, strict=True)

    def test_linearity_needs_unstable_module(self):
        with pytest.raises(ValueError):
            verify_dickson_linearity(sphere(3, -1), 1, 1, 1, 20)

    def test_kernel_characterization(self):
        result = kernel_characterization(sphere(3, 0), 1, 30)
        assert result.passed, result.failures[:3]

    @pytest.mark.slow
    def test_unstable_homology_at_s2(self):
        assert unstable_identification_check(sphere(3, 0), 2, 40).passed

    @pytest.mark.slow
    def test_kernel_characterization_at_s2(self):
        result = kernel_characterization(sphere(3, 0), 2, 30)
        assert result.passed, result.failures[:3]
