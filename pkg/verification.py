"""
Verification Suites

Runs the structural identities of the destabilization complex over grids of
primes, modules and degree windows, collecting one CheckResult per suite.

Features:
- invariants: e_s^2 = Q_{s,0}, both Dickson constructions, St_1 recursions, GL invariance,
  psi coassociativity and compatibility of psi with theta and the Milnor coproduct
- steenrod: Adem reduction against the Milnor product, relations on built-in modules
- rfunctor: closure of R_s under beta, P^1 and P^p; the splitting of S_2 through S_1
- complex: d^2 = 0, vanishing on free modules, unstable modules, connectivity
- ses, linearity, oracle: the exact sequence, Dickson semilinearity, and the
  free-resolution cross-check
"""

import logging
from itertools import product
from typing import Callable, Dict, List, Optional, Tuple

from chain_complex import (
    build_complex, connectivity_check, kernel_characterization, vanishing_check, verify_dickson_linearity,
    verify_ses, unstable_identification_check,
)
from fpla import BasisMismatchError, DestabError, RelationViolationError, WindowExhaustedError
from invariants import (
    GammaMonomial, Tensor, bv_add, bv_multiply, bv_power, bv_scale, bv_substitute, bv_v, det_mod_p, dickson, gamma_q,
    gamma_r, gl_generators, legendre, mui, partial_s, psi_coproduct, st1_bv, tensor_add, theta,
)
from module_parser import check_relations
from oracle import compare
from rfunctor import act_on_rs, rs_gamma_basis, s_one_twice, split_s_total
from run_logger import CheckResult, FailureRecord
from run_model import SuiteType, rank_cap
from steenrod import (
    MILNOR_UNIT, MilnorElement, adem_reduce, bv1, change_of_basis, direct_sum, free_module, is_admissible,
    sphere, suspend, word_degree, word_to_milnor,
)

logger = logging.getLogger(__name__)

_DEFAULT_HI = {3: 60, 5: 40}


def _window(p: int, hi: Optional[int], default: int) -> int:
    return default if hi is None else min(hi, default)


def _guard(result: CheckResult, check: Callable[..., CheckResult], *args, **kwargs) -> None:
    """Run a check and fold it in; package errors other than an exhausted window become failures"""
    try:
        result.merge(check(*args, **kwargs))
    except WindowExhaustedError:
        raise
    except DestabError as exc:
        result.passed = False
        result.failures.append(FailureRecord.from_error(exc, check=getattr(check, "__name__", result.name)))
        logger.error(f"{result.name}: {exc}")


# --- invariants ---------------------------------------------------------------


def _xi(j: int, n: int = 1) -> MilnorElement:
    return MILNOR_UNIT if j == 0 else MilnorElement((), (0,) * (j - 1) + (n,))


def _milnor_coproduct(p: int, m: MilnorElement) -> List[Tuple[MilnorElement, MilnorElement]]:
    """Coproduct of a generator xi_k or tau_k of the dual Steenrod algebra"""
    if m.exterior:
        (k,) = m.exterior
        return [(m, MILNOR_UNIT)] + [(_xi(k - i, p ** i), MilnorElement((i,), ())) for i in range(k + 1)]
    k = len(m.exponents)
    return [(_xi(k - i, p ** i), _xi(i)) for i in range(k + 1)]


def _psi_on_factor(p: int, s: int, t: int, tensor: Tensor, position: int) -> Tensor:
    out: Tensor = {}
    for key, c in tensor.items():
        for split, c2 in psi_coproduct(p, s, t, {key[position]: 1}).items():
            tensor_add(p, out, {key[:position] + split + key[position + 1:]: c2}, c)
    return out


def suite_invariants(p: int, hi: Optional[int] = None) -> CheckResult:
    result = CheckResult("invariants")
    cap = rank_cap(p)
    for s in range(1, cap + 1):
        e = mui(p, s, "e")
        result.checked += 1
        if bv_multiply(p, e, e) != dickson(p, s, 0):
            result.fail("e_s^2 != Q_{s,0}", s)
    for s in range(1, min(cap, 2) + 1):
        for i in range(s + 1):
            result.checked += 1
            if dickson(p, s, i, "product") != dickson(p, s, i, "recursion"):
                result.fail("Dickson constructions disagree", s, index=i)
    if cap >= 2:
        for g in gl_generators(p, 2):
            result.checked += 1
            for i in range(2):
                if bv_substitute(p, dickson(p, 2, i), g) != dickson(p, 2, i):
                    result.fail("Dickson invariant moved by GL_2", 2, index=i, matrix=g)
            e = mui(p, 2, "e")
            if bv_substitute(p, e, g) != bv_scale(p, e, legendre(p, det_mod_p(p, g))):
                result.fail("e_2 is not a determinant character", 2, matrix=g)
    for s in range(1, cap):
        q10 = bv_v(s + 1, 0, p - 1)
        result.checked += 2
        if dickson(p, s + 1, 0) != bv_multiply(p, q10, st1_bv(p, dickson(p, s, 0), s)):
            result.fail("Q_{s+1,0} recursion", s + 1)
        for i in range(1, s + 1):
            expected = bv_multiply(p, bv_power(p, q10, p ** i, s + 1), st1_bv(p, dickson(p, s, i), s))
            bv_add(p, expected, st1_bv(p, dickson(p, s, i - 1), s))
            if dickson(p, s + 1, i) != expected:
                result.fail("Q_{s+1,i} recursion", s + 1, index=i)
        e1 = bv_v(s + 1, 0, (p - 1) // 2)
        if mui(p, s + 1, "e") != bv_multiply(p, e1, st1_bv(p, mui(p, s, "e"), s)):
            result.fail("e_{s+1} recursion", s + 1)
    for kind, i in product("QR", range(3)):
        g = gamma_q(3, i) if kind == "Q" else gamma_r(3, i)
        result.checked += 1
        left = _psi_on_factor(p, 1, 1, psi_coproduct(p, 2, 1, g), 0)
        right = _psi_on_factor(p, 1, 1, psi_coproduct(p, 1, 2, g), 1)
        if left != right:
            result.fail("psi is not coassociative", 3, generator=f"{kind}_{i}")
    generators = [_xi(k) for k in (1, 2, 3)] + [MilnorElement((j,), ()) for j in range(3)]
    for (s, t), m in product([(1, 1), (1, 2), (2, 1)], generators):
        left = psi_coproduct(p, s, t, theta(p, s + t, m))
        right: Tensor = {}
        for a, b in _milnor_coproduct(p, m):
            for ga, ca in theta(p, s, a).items():
                for gb, cb in theta(p, t, b).items():
                    tensor_add(p, right, {(ga, gb): ca * cb})
        result.checked += 1
        if left != right:
            result.fail("psi does not match theta on the Milnor coproduct", s + t, generator=str(m), t=t)
    for mask, e0, b1 in product([(0, 1), (0, 2), (1, 2), (0, 1, 2)], range(-4, 0), range(3)):
        result.checked += 1
        g = {GammaMonomial(mask, (e0, b1, 0)): 1}
        if partial_s(p, 2, partial_s(p, 3, g)):
            result.fail("partial squared is not zero", 3, mask=mask, e0=e0, b1=b1)
    return result


# --- steenrod -----------------------------------------------------------------


def suite_steenrod(p: int, hi: Optional[int] = None) -> CheckResult:
    result = CheckResult("steenrod")
    top = _window(p, hi, 30)

    def milnor_of(combo):
        out: Dict[MilnorElement, int] = {}
        for w, c in combo.items():
            for m, c2 in word_to_milnor(p, w).items():
                out[m] = (out.get(m, 0) + c * c2) % p
        return {m: c for m, c in out.items() if c}

    for word in product((0, 1), range(0, 4), (0, 1), range(0, 4), (0, 1)):
        if word_degree(p, word) > top:
            continue
        reduced = adem_reduce(p, word)
        result.checked += 1
        if not all(is_admissible(p, w) for w in reduced) or milnor_of(reduced) != milnor_of({word: 1}):
            result.fail("Adem reduction disagrees with the Milnor product", degree=word_degree(p, word),
                        word=word)
    for degree in range(top + 1):
        result.checked += 1
        try:
            change_of_basis(p, degree)
        except BasisMismatchError as exc:
            result.fail("basis mismatch", degree=degree, message=str(exc))
    for M in (bv1(p, top), free_module(p, 0, min(top, 24)), direct_sum(sphere(p, 0), sphere(p, 1))):
        result.checked += 1
        try:
            check_relations(M)
        except RelationViolationError as exc:
            result.fail("relation violation", module=M.name, **exc.witness)
    return result


# --- rfunctor -----------------------------------------------------------------


def suite_rfunctor(p: int, hi: Optional[int] = None) -> CheckResult:
    """Closure of R_s under beta, P^1 and P^p, and S_2 through S_1 twice"""
    result = CheckResult("rfunctor")
    top = _window(p, hi, 40)
    ops = [("beta",), ("P", 1), ("P", p)]
    for N, s in product([sphere(p, 0), sphere(p, -1), bv1(p, 12)], range(1, min(2, rank_cap(p)) + 1)):
        for degree, cell in rs_gamma_basis(N, s, N.lo, top).items():
            for pair in cell:
                for op in ops:
                    result.checked += 1
                    try:
                        act_on_rs(N, s, {pair: 1}, op)
                    except DestabError as exc:
                        result.fail("R_s not closed under the action", s, degree, element=str(pair),
                                    op=op, message=str(exc))
    if rank_cap(p) < 2:
        return result
    N = bv1(p, 20)
    for label in ("v1", "uv0", "v2"):
        result.checked += 1
        if split_s_total(N, label, 2, 14) != s_one_twice(N, label, 2, 14):
            result.fail("S_2 does not split through S_1", 2, label=label)
    return result


# --- complex ------------------------------------------------------------------


def suite_complex(p: int, hi: Optional[int] = None) -> CheckResult:
    result = CheckResult("complex")
    top = _window(p, hi, _DEFAULT_HI.get(p, 30))
    s_max = min(3, rank_cap(p))
    modules = [sphere(p, t) for t in range(-4, 3)]
    modules += [bv1(p, 12), free_module(p, 0, top), free_module(p, 1, top)]
    for M in modules:
        try:
            c = build_complex(M, s_max, top)
        except DestabError as exc:
            result.passed = False
            result.failures.append(FailureRecord.from_error(exc, check=f"d^2 {M.name}"))
            continue
        result.checked += len(c.differentials)
        _guard(result, connectivity_check, c)
    vanishing_top = _window(p, hi, 40)
    for t in range(-2, 3):
        _guard(result, vanishing_check, free_module(p, t, vanishing_top), min(2, rank_cap(p)), vanishing_top)
    unstable = [sphere(p, 0), direct_sum(sphere(p, 0), suspend(sphere(p, 0), 1)), bv1(p, 10)]
    for M, s in product(unstable, range(1, s_max + 1)):
        _guard(result, unstable_identification_check, M, s, _window(p, hi, 40))
    _guard(result, kernel_characterization, sphere(p, 0), 1, _window(p, hi, 30))
    return result


def suite_ses(p: int, hi: Optional[int] = None) -> CheckResult:
    result = CheckResult("ses")
    for M in (sphere(p, 0), sphere(p, -1)):
        _guard(result, verify_ses, M, min(2, rank_cap(p)), _window(p, hi, 30))
    return result


def suite_linearity(p: int, hi: Optional[int] = None) -> CheckResult:
    result = CheckResult("linearity")
    if rank_cap(p) < 2:
        result.details["skipped"] = f"rank cap {rank_cap(p)} at p={p}"
        return result
    top = _window(p, hi, 30)
    _guard(result, verify_dickson_linearity, sphere(p, 0), 2, 3, 1, top)
    for t in (1, 2):
        _guard(result, verify_dickson_linearity, sphere(p, 0), 2, t, 0, top)
    return result


def suite_oracle(p: int, hi: Optional[int] = None) -> CheckResult:
    result = CheckResult("oracle")
    top = _window(p, hi, 40)
    for M in [sphere(p, t) for t in range(-3, 2)] + [bv1(p, 10)]:
        _guard(result, compare, M, min(2, rank_cap(p)), top)
    return result


SUITES: Dict[SuiteType, Callable[[int, Optional[int]], CheckResult]] = {
    SuiteType.INVARIANTS: suite_invariants,
    SuiteType.STEENROD: suite_steenrod,
    SuiteType.RFUNCTOR: suite_rfunctor,
    SuiteType.COMPLEX: suite_complex,
    SuiteType.SES: suite_ses,
    SuiteType.LINEARITY: suite_linearity,
    SuiteType.ORACLE: suite_oracle,
}


def run_suites(suite: SuiteType, p: int, hi: Optional[int] = None) -> List[CheckResult]:
    """
    Run one suite, or all of them in order

    Args:
        suite: Suite to run; ALL runs every suite
        p: Odd prime
        hi: Upper bound on the degree windows; each suite keeps its own default below it

    Returns:
        One CheckResult per suite run
    """
    selected = list(SUITES) if suite == SuiteType.ALL else [suite]
    results = []
    for index, name in enumerate(selected, start=1):
        logger.info(f"running suite {name.value} at p={p} ({index}/{len(selected)})")
        result = SUITES[name](p, hi)
        status = "passed" if result.passed else "failed"
        logger.info(f"suite {name.value} {status}: {result.checked} checks, {len(result.failures)} failures")
        results.append(result)
    return results
