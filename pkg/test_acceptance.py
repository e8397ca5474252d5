"""
Acceptance grids at the full degree windows. All tests here are marked slow.
"""

import pytest

from chain_complex import (
    build_complex, connectivity_bound, connectivity_check, homology, kernel_characterization, vanishing_check,
    verify_dickson_linearity, verify_ses, unstable_identification_check,
)
from oracle import clear_cache, compare
from rfunctor import act_on_rs, rs_gamma_basis
from run_model import SuiteType, rank_cap
from steenrod import bv1, direct_sum, free_module, sphere, suspend
from verification import run_suites

pytestmark = pytest.mark.slow

WINDOWS = {3: 60, 5: 40}


def _modules(p):
    hi = WINDOWS[p]
    return [sphere(p, t) for t in range(-4, 3)] + [bv1(p, 12), free_module(p, 0, hi), free_module(p, 1, hi)]


@pytest.fixture(autouse=True)
def fresh_cache():
    clear_cache()
    yield
    clear_cache()


@pytest.mark.parametrize("p", [3, 5])
def test_complex_and_connectivity(p):
    for M in _modules(p):
        c = build_complex(M, rank_cap(p), WINDOWS[p])
        assert connectivity_check(c).passed, M.name
        for s in range(c.s_max + 1):
            h = homology(c, s)
            below = connectivity_bound(p, s, M.bottom())
            assert not any(dim for d, dim in h.dims.items() if d < below)


@pytest.mark.parametrize("M", [sphere(3, t) for t in range(-3, 2)] + [bv1(3, 10)], ids=lambda M: M.name)
def test_oracle_equivalence(M):
    result = compare(M, 2, 40)
    assert result.passed, result.failures[:3]


@pytest.mark.parametrize("t", range(-2, 3))
def test_vanishing_on_free_modules(t):
    result = vanishing_check(free_module(3, t, 40), 2, 40)
    assert result.passed, result.failures[:3]
    assert result.checked > 0


@pytest.mark.parametrize("s", [1, 2, 3])
@pytest.mark.parametrize("M", [sphere(3, 0), direct_sum(sphere(3, 0), suspend(sphere(3, 0), 1)), bv1(3, 10)],
                         ids=["F3", "F3+SF3", "bv1"])
def test_unstable_identification(M, s):
    result = unstable_identification_check(M, s, 40)
    assert result.passed, result.failures[:3]


@pytest.mark.parametrize("s", [1, 2])
def test_kernel_characterization(s):
    assert kernel_characterization(sphere(3, 0), s, 30).passed


def test_closure_under_steenrod_operations():
    for N in (sphere(3, 0), sphere(3, -1), bv1(3, 12)):
        for s in (1, 2):
            for _, cell in rs_gamma_basis(N, s, N.lo, 40).items():
                for pair in cell:
                    for op in (("beta",), ("P", 1), ("P", 3)):
                        act_on_rs(N, s, {pair: 1}, op)


@pytest.mark.parametrize("M", [sphere(3, 0), sphere(3, -1)], ids=lambda M: M.name)
def test_short_exact_sequence(M):
    result = verify_ses(M, 2, 30)
    assert result.passed, result.failures[:3]


def test_dickson_semilinearity():
    assert verify_dickson_linearity(sphere(3, 0), 2, 3, 1, 30).passed
    for t in (1, 2):
        assert verify_dickson_linearity(sphere(3, 0), 2, t, 0, 30).passed


def test_verify_all_passes():
    results = run_suites(SuiteType.ALL, 3)
    assert all(r.passed for r in results), [r.name for r in results if not r.passed]
