"""
Total Steenrod Powers and the Functors R_s

Features:
- The A_*-coaction of a module window and the total powers S_s and St_s
- Bases of R~_s N = R_s N ⊕ R_s^- N in K_s-form and in Gamma_s-form
- Expansion of R_s N into Gamma_s ⊗ N and the triangular pullback back
- The Steenrod action on R_s N through the Cartan formula on Gamma_s ⊗ N
- rho_1 and rho_s, the latter through the embedding R_s N ⊂ R_1 R_{s-1} N

An element of R_s N is stored as a combination of pairs (omega, m) meaning
omega·S_s(m), where omega = R_I Q_{s,0}^{e_0} Q_{s,1}^{b_1}... has b_j >= 0 and
2 e_0 + |I| >= |m|. This is k·St_s(m) with the e_s^{|m|} of St_s merged into k.
"""

import logging
from typing import Dict, Hashable, List, Optional, Tuple

from fpla import GradedBasis, StabilityViolationError
from invariants import (
    GammaMonomial, KsMonomial, Tensor, gamma_degree, gamma_to_ks, gamma_unit, ks_monomials,
    ks_to_gamma, mono_multiply, q_monomial, split_embedding, steenrod_on_gamma, theta,
)
from run_model import RsSign
from steenrod import Element, MilnorElement, ModuleWindow, add_into, frobenius, suspend

logger = logging.getLogger(__name__)

RsLabel = Tuple[GammaMonomial, str]
RsElement = Dict[RsLabel, int]
Ambient = Dict[Tuple[GammaMonomial, str], int]
# Gamma_1 ⊗ Gamma_{s-1} ⊗ N
Ambient2 = Dict[Tuple[GammaMonomial, GammaMonomial, str], int]


def _cache(N: ModuleWindow) -> Dict:
    return N.__dict__.setdefault("_rs_cache", {})


def _add(p: int, target: Dict, key: Hashable, c: int) -> None:
    value = (target.get(key, 0) + c) % p
    if value:
        target[key] = value
    else:
        target.pop(key, None)


def _times(p: int, mono: GammaMonomial, ambient: Ambient) -> Ambient:
    out: Ambient = {}
    for (g, label), c in ambient.items():
        prod_ = mono_multiply(mono, g)
        if prod_ is not None:
            _add(p, out, (prod_[0], label), c * prod_[1])
    return out


def _homogeneous_degree(N: ModuleWindow, x: Element) -> int:
    degrees = {N.degrees[label] for label in x}
    if len(degrees) != 1:
        raise ValueError(f"expected a homogeneous element, got degrees {sorted(degrees)}")
    return degrees.pop()


# --- coaction and total powers ----------------------------------------------


def coaction(N: ModuleWindow, x: Element, degree_budget: Optional[int] = None) -> List[Tuple[MilnorElement, Element]]:
    """Sum of b* ⊗ b·x over the Milnor basis, as (b, b·x) pairs with b·x != 0"""
    out: Dict[MilnorElement, Element] = {}
    for label, c in x.items():
        for m, image in N.coaction_terms(label, degree_budget):
            add_into(out.setdefault(m, {}), image, c, N.p)
    return [(m, v) for m, v in sorted(out.items()) if v]


def _s_label(N: ModuleWindow, label: str, s: int, degree_budget: Optional[int] = None) -> Ambient:
    key = ("S", s, label, degree_budget)
    cache = _cache(N)
    if key not in cache:
        out: Ambient = {}
        for m, image in N.coaction_terms(label, degree_budget):
            for mono, c in theta(N.p, s, m).items():
                for target, c2 in image.items():
                    _add(N.p, out, (mono, target), c * c2)
        cache[key] = out
    return cache[key]


def s_total(N: ModuleWindow, x: Element, s: int, degree_budget: Optional[int] = None) -> Ambient:
    """S_s(x) = (theta_s ⊗ N)(coaction of x) in Gamma_s ⊗ N"""
    out: Ambient = {}
    for label, c in x.items():
        for key, c2 in _s_label(N, label, s, degree_budget).items():
            _add(N.p, out, key, c * c2)
    return out


def st_total(N: ModuleWindow, x: Element, s: int, degree_budget: Optional[int] = None) -> Tuple[Ambient, int]:
    """
    St_s(x) = (-1)^{s[|x|/2]} e_s^{|x|} S_s(x), returned as (A, c) with St_s(x) = e_s^c·A.

    c is 0 for even |x| and 1 for odd |x|, in which case St_s(x) lies in the
    minus eigenspace and has no Gamma_s form.
    """
    if s == 0:
        return {(gamma_unit(0), label): c for label, c in x.items()}, 0
    d = _homogeneous_degree(N, x)
    sign = (-1) ** (s * (d // 2) % 2)
    ambient = _times(N.p, q_monomial(s, 0, d // 2), s_total(N, x, s, degree_budget))
    return {key: (sign * c) % N.p for key, c in ambient.items()}, d % 2


# --- bases --------------------------------------------------------------------


def is_rs_label(N: ModuleWindow, s: int, mono: GammaMonomial, label: str) -> bool:
    """Whether (mono, label) is a basis pair of R_s N"""
    if s == 0:
        return mono == gamma_unit(0)
    return (all(e >= 0 for e in mono.exps[1:])
            and 2 * mono.exps[0] + len(mono.mask) >= N.degrees[label])


def rs_basis(N: ModuleWindow, s: int, sign: RsSign, lo: int, hi: int) -> GradedBasis:
    """Pairs (k, m) spanning k·St_s(m) in R~_s N, in degrees [lo, hi]"""
    by_degree: Dict[int, List[Tuple[KsMonomial, str]]] = {}
    if s == 0:
        if sign == RsSign.MINUS:
            return GradedBasis()
        unit = KsMonomial((), 0, ())
        return GradedBasis({d: [(unit, label) for label in N.basis[d]] for d in N.basis.degrees() if lo <= d <= hi})
    for d in range(lo, hi + 1):
        cell = []
        for label in N.labels:
            dm = N.degrees[label]
            for k in ks_monomials(N.p, s, d - N.p ** s * dm):
                matches = k.parity == dm % 2
                if sign == RsSign.FULL or matches == (sign == RsSign.PLUS):
                    cell.append((k, label))
        if cell:
            by_degree[d] = cell
    return GradedBasis(by_degree)


def rs_gamma_basis(N: ModuleWindow, s: int, lo: int, hi: int) -> GradedBasis:
    """Basis of R_s N in degrees [lo, hi] as Gamma_s-form pairs (omega, m)"""
    plus = rs_basis(N, s, RsSign.PLUS, lo, hi)
    by_degree = {}
    for d, cell in plus.items():
        by_degree[d] = [(ks_to_gamma(s, k, N.degrees[label])[0] if s else gamma_unit(0), label)
                        for k, label in cell]
    return GradedBasis(by_degree)


def rs_dims(N: ModuleWindow, s: int, sign: RsSign, degree: int) -> int:
    return rs_basis(N, s, sign, degree, degree).dim(degree)


def rs_degree(N: ModuleWindow, label: RsLabel) -> int:
    mono, m = label
    return gamma_degree(N.p, mono) + N.degrees[m]


def ks_form(N: ModuleWindow, s: int, e: RsElement) -> Dict[Tuple[KsMonomial, str], int]:
    """Rewrite a Gamma_s-form element as a combination of k·St_s(m)"""
    out: Dict[Tuple[KsMonomial, str], int] = {}
    for (mono, label), c in e.items():
        k, sign = gamma_to_ks(s, mono, N.degrees[label])
        _add(N.p, out, (k, label), sign * c)
    return out


# --- ambient expansion and pullback ------------------------------------------


def rs_to_ambient(N: ModuleWindow, s: int, e: RsElement, degree_budget: Optional[int] = None) -> Ambient:
    out: Ambient = {}
    for (mono, label), c in e.items():
        for key, c2 in _times(N.p, mono, _s_label(N, label, s, degree_budget)).items():
            _add(N.p, out, key, c * c2)
    return out


def pullback(N: ModuleWindow, s: int, ambient: Ambient) -> RsElement:
    """
    Write an element of Gamma_s ⊗ N as a combination of omega·S_s(m).

    S_s(m) = 1 ⊗ m + terms of higher module degree, so the coefficients are
    read off layer by layer in ascending module degree.
    """
    p = N.p
    residual = dict(ambient)
    coeffs: RsElement = {}
    while residual:
        low = min(N.degrees[label] for _, label in residual)
        layer = [(key, c) for key, c in residual.items() if N.degrees[key[1]] == low]
        for (mono, label), c in layer:
            if not is_rs_label(N, s, mono, label):
                raise StabilityViolationError(
                    f"stability violation: {mono} ⊗ {label} is not in R_{s} {N.name}",
                    witness={"s": s, "monomial": str(mono), "label": label, "value": c},
                )
            _add(p, coeffs, (mono, label), c)
            for key, c2 in _times(p, mono, _s_label(N, label, s)).items():
                _add(p, residual, key, -c * c2)
    return coeffs


def _module_op(N: ModuleWindow, op: Tuple, label: str) -> Element:
    """beta or P^i on one class, zero past the top of the window"""
    if op[0] == "beta":
        if N.degrees[label] + 1 > N.hi:
            return {}
        return N.apply_beta({label: 1})
    i = op[1]
    if N.degrees[label] + 2 * i * (N.p - 1) > N.hi:
        return {}
    return N.apply_power(i, {label: 1})


def ambient_act(N: ModuleWindow, s: int, op: Tuple, ambient: Ambient) -> Ambient:
    """("beta",) or ("P", i) on Gamma_s ⊗ N by the Cartan formula"""
    p = N.p
    out: Ambient = {}
    for (g, label), c in ambient.items():
        if op[0] == "beta":
            for mono, c2 in steenrod_on_gamma(p, s, op, {g: 1}).items():
                _add(p, out, (mono, label), c * c2)
            sign = -1 if gamma_degree(p, g) % 2 else 1
            for target, c2 in _module_op(N, op, label).items():
                _add(p, out, (g, target), sign * c * c2)
            continue
        i = op[1]
        for a in range(i + 1):
            right = _module_op(N, ("P", i - a), label)
            if not right:
                continue
            for mono, c2 in steenrod_on_gamma(p, s, ("P", a), {g: 1}).items():
                for target, c3 in right.items():
                    _add(p, out, (mono, target), c * c2 * c3)
    return out


def act_on_rs(N: ModuleWindow, s: int, e: RsElement, op: Tuple) -> RsElement:
    """The Steenrod action on R_s N; raises StabilityViolationError if the image leaves R_s N"""
    return pullback(N, s, ambient_act(N, s, op, rs_to_ambient(N, s, e)))


# --- rho_1 and rho_s ---------------------------------------------------------


def rho_target(N: ModuleWindow) -> ModuleWindow:
    """Sigma^{-2} Phi Sigma N, with labels phi.<label>"""
    return suspend(frobenius(suspend(N, 1)), -2)


def rho_1(N: ModuleWindow, e: RsElement) -> Element:
    """
    rho_1: R_1 N -> Sigma^{-2} Phi Sigma N.

    St_1(m) -> -Phi(Sigma m) for |m| even and M~_{1,0} St_1(n) -> Phi(Sigma n)
    for |n| odd; everything in the image of Sigma^{-1} R_1(Sigma N) goes to 0.
    """
    out: Element = {}
    for (mono, label), c in e.items():
        e0, k = mono.exps[0], len(mono.mask)
        if 2 * e0 + k != N.degrees[label]:
            continue
        sign = (-1) ** (e0 % 2) if k else -(-1) ** (e0 % 2)
        _add(N.p, out, f"phi.{label}", sign * c)
    return out


def _y_degree(N: ModuleWindow, g2: GammaMonomial, label: str) -> int:
    return gamma_degree(N.p, g2) + N.degrees[label]


def s_one_on_ambient(N: ModuleWindow, r: int, z: Ambient, limit: int) -> Ambient2:
    """
    S_1 of an element z of Gamma_r ⊗ N, keeping the terms whose Gamma_r ⊗ N
    degree is at most limit.
    """
    p = N.p
    out: Ambient2 = {}
    if not z:
        return out
    k = _y_degree(N, *next(iter(z)))
    t = 0
    while k + 2 * t * (p - 1) <= limit:
        powered = ambient_act(N, r, ("P", t), z) if t else dict(z)
        for eps in (0, 1):
            if eps and k + 2 * t * (p - 1) + 1 > limit:
                continue
            image = ambient_act(N, r, ("beta",), powered) if eps else powered
            g1 = GammaMonomial((0,) if eps else (), (-eps - t,))
            sign = (-1) ** (eps + t)
            for (g2, label), c in image.items():
                _add(p, out, (g1, g2, label), sign * c)
        t += 1
    return out


def s_one_twice(N: ModuleWindow, label: str, s: int, limit: int) -> Ambient2:
    """S_1(S_{s-1}(m)) up to Gamma_{s-1} ⊗ N degree limit"""
    return s_one_on_ambient(N, s - 1, _s_label(N, label, s - 1), limit)


def _split_product(p: int, outer: Tensor, inner: Ambient2) -> Ambient2:
    """(a ⊗ b)·(g1 ⊗ g2 ⊗ n) = ± (a g1) ⊗ (b g2) ⊗ n"""
    out: Ambient2 = {}
    for (a, b), c1 in outer.items():
        for (g1, g2, label), c2 in inner.items():
            pa = mono_multiply(a, g1)
            pb = mono_multiply(b, g2)
            if pa is None or pb is None:
                continue
            sign = pa[1] * pb[1] * (-1 if b.parity and g1.parity else 1)
            _add(p, out, (pa[0], pb[0], label), sign * c1 * c2)
    return out


def split_ambient(N: ModuleWindow, s: int, e: RsElement, limit: int) -> Ambient2:
    """
    The image of e under R_s N ⊂ R_1 R_{s-1} N inside Gamma_1 ⊗ Gamma_{s-1} ⊗ N,
    up to Gamma_{s-1} ⊗ N degree limit: omega·S_s(m) goes to omega·S_1(S_{s-1}(m)).
    """
    p = N.p
    out: Ambient2 = {}
    for (mono, label), c in e.items():
        outer = split_embedding(p, s, {mono: 1}, limit - N.degrees[label])
        if not outer:
            continue
        lowest = min(gamma_degree(p, b) for _, b in outer)
        twice = s_one_twice(N, label, s, limit - min(lowest, 0))
        image = _split_product(p, outer, twice)
        for (g1, g2, n), c2 in image.items():
            if _y_degree(N, g2, n) <= limit:
                _add(p, out, (g1, g2, n), c * c2)
    return out


def split_s_total(N: ModuleWindow, label: str, s: int, limit: int) -> Ambient2:
    """
    S_s(m) pushed into Gamma_1 ⊗ Gamma_{s-1} ⊗ N term by term, keeping the terms
    whose Gamma_{s-1} ⊗ N degree is at most limit.

    Targets above limit still contribute: the Gamma_{s-1} factor of a split
    Q_{s,0}^{-1} has negative degree.
    """
    p = N.p
    out: Ambient2 = {}
    for (g, target), c in _s_label(N, label, s).items():
        for (a, b), c2 in split_embedding(p, s, {g: 1}, limit - N.degrees[target]).items():
            if _y_degree(N, b, target) <= limit:
                _add(p, out, (a, b, target), c * c2)
    return out


def embed_in_r1(N: ModuleWindow, s: int, e: RsElement, limit: Optional[int] = None) -> Dict[Tuple[GammaMonomial, RsLabel], int]:
    """
    Coordinates of e in R_1(R_{s-1} N), as pairs (gamma, y) meaning gamma·S_1(y).

    A pair of degree T has |y| <= T/p, so without a limit every coordinate is
    computed; with one, only those with |y| <= limit.
    """
    p = N.p
    r = s - 1
    if not e:
        return {}
    if limit is None:
        limit = max(rs_degree(N, key) for key in e) // p
    residual = split_ambient(N, s, e, limit)
    coeffs: Dict[Tuple[GammaMonomial, RsLabel], int] = {}
    while residual:
        k = min(_y_degree(N, g2, label) for _, g2, label in residual)
        groups: Dict[GammaMonomial, Ambient] = {}
        for (g1, g2, label), c in residual.items():
            if _y_degree(N, g2, label) == k:
                groups.setdefault(g1, {})[(g2, label)] = c
        for g1, z in groups.items():
            for y, c in pullback(N, r, z).items():
                if 2 * g1.exps[0] + len(g1.mask) < rs_degree(N, y):
                    raise StabilityViolationError(
                        f"stability violation: {g1} S_1(y) with |y| = {rs_degree(N, y)} is not in R_1",
                        witness={"s": s, "monomial": str(g1), "value": c},
                    )
                _add(p, coeffs, (g1, y), c)
            for (h1, g2, label), c in s_one_on_ambient(N, r, z, limit).items():
                prod_ = mono_multiply(g1, h1)
                if prod_ is not None:
                    _add(p, residual, (prod_[0], g2, label), -c * prod_[1])
    logger.debug(f"embedded an element of R_{s} {N.name} with {len(coeffs)} R_1 coordinates")
    return coeffs


def _rho_top_degree(p: int, total: int) -> Optional[int]:
    """Largest degree |y| of a pair gamma·S_1(y) of degree total that rho_1 can see"""
    candidates = []
    if total % p == 0 and (total // p) % 2 == 0:
        candidates.append(total // p)
    if (total - p + 2) % p == 0 and ((total - p + 2) // p) % 2 == 1:
        candidates.append((total - p + 2) // p)
    return max(candidates) if candidates else None


def rho_s(N: ModuleWindow, s: int, e: RsElement) -> Dict[Hashable, int]:
    """
    rho_s: R_s N -> Sigma^{-2} Phi Sigma R_{s-1} N.

    For s = 1 this is rho_1 with phi.<label> keys. For s >= 2 the keys are
    basis pairs y of R_{s-1} N, each standing for Sigma^{-2} Phi Sigma y.
    """
    if s < 1:
        raise ValueError("rho_s needs s >= 1")
    if s == 1:
        return rho_1(N, e)
    p = N.p
    out: Dict[Hashable, int] = {}
    by_degree: Dict[int, RsElement] = {}
    for key, c in e.items():
        by_degree.setdefault(rs_degree(N, key), {})[key] = c
    for total, part in by_degree.items():
        top = _rho_top_degree(p, total)
        if top is None:
            continue
        for (g1, y), c in embed_in_r1(N, s, part, top).items():
            if rs_degree(N, y) != top or 2 * g1.exps[0] + len(g1.mask) != top:
                continue
            sign = (-1) ** (g1.exps[0] % 2) if g1.mask else -(-1) ** (g1.exps[0] % 2)
            _add(p, out, y, sign * c)
    return out
