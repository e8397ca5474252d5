"""
Invariant Theory Module for the Destabilization Complex

Polynomials in H*(BV_s) = Lambda(u_1..u_s) ⊗ F_p[v_1..v_s], the Dickson and Mui
invariants, and the localized invariant algebras Gamma_s with their coproducts,
Steenrod action and the maps theta_s, partial_s and phi_s.

Features:
- BV polynomial arithmetic with exterior signs, GL_s substitution, beta and P^i
- Dickson invariants by product over V_s^* and by recursion
- Mui invariants L_s, e_s, M~_{s,i}, R_{s,i} as determinants
- Gamma_s monomials R_I Q_{s,0}^{e_0} Q_{s,1}^{e_1}..., tensor products with Koszul signs
- psi_{s,t}, theta_s, partial_1, partial_s, phi_s, Steenrod operations on Gamma_s
"""

import logging
from functools import lru_cache
from itertools import combinations, product
from math import comb
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from fpla import CapExceededError, RankCapError, StabilityViolationError, solve_mod_p
from run_model import degree_cap, rank_cap
from steenrod import MilnorElement

logger = logging.getLogger(__name__)

# --- H*(BV_s) ---------------------------------------------------------------

BVMono = Tuple[Tuple[int, ...], Tuple[int, ...]]
BVElement = Dict[BVMono, int]


def _merge_sign(a: Sequence[int], b: Sequence[int]) -> int:
    """Sign of sorting the concatenation of two ascending index lists"""
    inversions = sum(1 for x in a for y in b if x > y)
    return -1 if inversions % 2 else 1


def bv_add(p: int, target: BVElement, source: BVElement, coeff: int = 1) -> BVElement:
    for mono, c in source.items():
        value = (target.get(mono, 0) + coeff * c) % p
        if value:
            target[mono] = value
        else:
            target.pop(mono, None)
    return target


def bv_one(s: int) -> BVElement:
    return {((), (0,) * s): 1}


def bv_u(s: int, i: int) -> BVElement:
    return {((i,), (0,) * s): 1}


def bv_v(s: int, i: int, exponent: int = 1) -> BVElement:
    exps = [0] * s
    exps[i] = exponent
    return {((), tuple(exps)): 1}


def bv_degree(mono: BVMono) -> int:
    mask, exps = mono
    return len(mask) + 2 * sum(exps)


def bv_multiply(p: int, a: BVElement, b: BVElement) -> BVElement:
    out: BVElement = {}
    for (ma, ea), ca in a.items():
        for (mb, eb), cb in b.items():
            if set(ma) & set(mb):
                continue
            sign = _merge_sign(ma, mb)
            mono = (tuple(sorted(ma + mb)), tuple(x + y for x, y in zip(ea, eb)))
            value = (out.get(mono, 0) + sign * ca * cb) % p
            if value:
                out[mono] = value
            else:
                out.pop(mono, None)
    return out


def bv_power(p: int, a: BVElement, n: int, s: int) -> BVElement:
    result = bv_one(s)
    base = a
    while n:
        if n & 1:
            result = bv_multiply(p, result, base)
        n >>= 1
        if n:
            base = bv_multiply(p, base, base)
    return result


def bv_scale(p: int, a: BVElement, c: int) -> BVElement:
    return {m: (x * c) % p for m, x in a.items() if (x * c) % p}


def bv_det(p: int, rows: List[List[BVElement]], s: int) -> BVElement:
    """Determinant by expansion along the first row; only the first row may be odd"""
    n = len(rows)
    if n == 0:
        return bv_one(s)
    if n == 1:
        return dict(rows[0][0])
    out: BVElement = {}
    for col in range(n):
        minor = [row[:col] + row[col + 1:] for row in rows[1:]]
        term = bv_multiply(p, rows[0][col], bv_det(p, minor, s))
        bv_add(p, out, term, -1 if col % 2 else 1)
    return out


def bv_substitute(p: int, a: BVElement, g: Sequence[Sequence[int]]) -> BVElement:
    """Linear substitution x_i -> sum_j g[i][j] x_j on both u's and v's"""
    s = len(g)
    lin_u = [{((j,), (0,) * s): g[i][j] % p for j in range(s) if g[i][j] % p} for i in range(s)]
    lin_v = [{((), tuple(1 if k == j else 0 for k in range(s))): g[i][j] % p
              for j in range(s) if g[i][j] % p} for i in range(s)]
    out: BVElement = {}
    for (mask, exps), c in a.items():
        term = bv_one(s)
        for i in mask:
            term = bv_multiply(p, term, lin_u[i])
        for i, e in enumerate(exps):
            if e:
                term = bv_multiply(p, term, bv_power(p, lin_v[i], e, s))
        bv_add(p, out, term, c)
    return out


def bv_beta(p: int, a: BVElement) -> BVElement:
    """Bockstein: the derivation with beta u_i = v_i"""
    out: BVElement = {}
    for (mask, exps), c in a.items():
        for pos, i in enumerate(mask):
            new_exps = list(exps)
            new_exps[i] += 1
            mono = (mask[:pos] + mask[pos + 1:], tuple(new_exps))
            value = (out.get(mono, 0) + (-1) ** pos * c) % p
            if value:
                out[mono] = value
            else:
                out.pop(mono, None)
    return out


def bv_reduced_power(p: int, i: int, a: BVElement) -> BVElement:
    """P^i via the Cartan formula; P^c v^e = C(e, c) v^{e + c(p-1)} and P^c u = 0 for c > 0"""
    if i == 0:
        return dict(a)
    out: BVElement = {}
    for (mask, exps), c in a.items():
        s = len(exps)

        def splits(k: int, remaining: int):
            if k == s - 1:
                yield (remaining,)
                return
            for x in range(remaining + 1):
                for tail in splits(k + 1, remaining - x):
                    yield (x,) + tail

        if s == 0:
            continue
        for split in splits(0, i):
            coeff = c
            for e, x in zip(exps, split):
                coeff = coeff * comb(e, x) % p
                if not coeff:
                    break
            if coeff:
                mono = (mask, tuple(e + (p - 1) * x for e, x in zip(exps, split)))
                value = (out.get(mono, 0) + coeff) % p
                if value:
                    out[mono] = value
                else:
                    out.pop(mono, None)
    return out


def bv_embed(a: BVElement, shift: int, s_new: int) -> BVElement:
    """Move rank-s variables to indices shift..shift+s-1 inside rank s_new"""
    out: BVElement = {}
    for (mask, exps), c in a.items():
        new_exps = [0] * s_new
        for i, e in enumerate(exps):
            new_exps[i + shift] = e
        out[(tuple(i + shift for i in mask), tuple(new_exps))] = c
    return out


def st1_bv(p: int, x: BVElement, s: int) -> BVElement:
    """
    Total power St_1 of a homogeneous x in H*(BV_s), landing in H*(BV_{s+1}).

    The new variables (u, v) take index 0. With |x| = 2k + delta:
    St_1(x) = sum_{l, eps} (-1)^{l+eps} v^{(p-1)(delta+2l)/2 - eps} u^eps ⊗ beta^eps P^{k-l} x
    """
    if not x:
        return {}
    degree = bv_degree(next(iter(x)))
    k, delta = divmod(degree, 2)
    out: BVElement = {}
    for l in range(k + 1):
        reduced = bv_reduced_power(p, k - l, x)
        for eps in (0, 1):
            image = bv_beta(p, reduced) if eps else reduced
            if not image:
                continue
            v_exp = (p - 1) * (delta + 2 * l) // 2 - eps
            if v_exp < 0:
                raise ValueError(f"negative power of v in St_1 at l={l}, eps={eps}")
            lead: BVElement = {(((0,) if eps else ()), (v_exp,) + (0,) * s): 1}
            term = bv_multiply(p, lead, bv_embed(image, 1, s + 1))
            bv_add(p, out, term, (-1) ** (l + eps))
    return out


def legendre(p: int, a: int) -> int:
    """Legendre symbol as +1 / -1"""
    value = pow(a % p, (p - 1) // 2, p)
    return 1 if value == 1 else -1


def gl_generators(p: int, s: int) -> List[List[List[int]]]:
    """Standard generators of GL_s(F_p): a scaling, a transposition and a transvection"""
    ident = [[1 if i == j else 0 for j in range(s)] for i in range(s)]
    scale = [row[:] for row in ident]
    scale[0][0] = _primitive_root(p)
    gens = [scale]
    if s >= 2:
        swap = [row[:] for row in ident]
        swap[0], swap[1] = swap[1], swap[0]
        transvection = [row[:] for row in ident]
        transvection[0][1] = 1
        gens.extend([swap, transvection])
    return gens


def _primitive_root(p: int) -> int:
    for g in range(2, p):
        if all(pow(g, (p - 1) // q, p) != 1 for q in range(2, p) if (p - 1) % q == 0 and
               all(q % r for r in range(2, q))):
            return g
    return 1


def det_mod_p(p: int, g: Sequence[Sequence[int]]) -> int:
    a = [list(row) for row in g]
    n = len(a)
    det = 1
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] % p), None)
        if pivot is None:
            return 0
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            det = -det
        det = det * a[col][col] % p
        inv = pow(a[col][col], p - 2, p)
        for r in range(col + 1, n):
            f = a[r][col] * inv % p
            a[r] = [(x - f * y) % p for x, y in zip(a[r], a[col])]
    return det % p


def _check_rank(p: int, s: int) -> None:
    if s > rank_cap(p):
        raise RankCapError(f"rank cap: s={s} above {rank_cap(p)} at p={p}", witness={"s": s, "p": p})


# --- Dickson and Mui invariants --------------------------------------------


@lru_cache(maxsize=None)
def _dickson_product(p: int, s: int) -> Tuple[Tuple[Tuple[BVMono, int], ...], ...]:
    """Coefficients of f_s(X) = prod over all linear forms (X - l)"""
    # coefficient list indexed by the power of X
    poly: List[BVElement] = [bv_one(s)]
    for coeffs in product(range(p), repeat=s):
        form: BVElement = {}
        for i, a in enumerate(coeffs):
            if a:
                bv_add(p, form, bv_v(s, i), a)
        shifted: List[BVElement] = [{}] + [dict(c) for c in poly]
        for k, c in enumerate(poly):
            bv_add(p, shifted[k], bv_multiply(p, form, c), -1)
        poly = shifted
    return tuple(tuple(sorted(c.items())) for c in poly)


@lru_cache(maxsize=None)
def _dickson_recursive(p: int, s: int) -> Tuple[Tuple[Tuple[BVMono, int], ...], ...]:
    """Q_{s,0..s} by Q_{s+1,i} = Q_{s,i-1}^p + V^{p-1} Q_{s,i}, V = f_s(v_{s+1})"""
    if s == 0:
        return (tuple(sorted(bv_one(0).items())),)
    previous = [bv_embed(dict(q), 0, s) for q in _dickson_recursive(p, s - 1)]
    new_v = bv_v(s, s - 1)
    f_value: BVElement = {}
    for i, q in enumerate(previous):
        term = bv_multiply(p, q, bv_power(p, new_v, p ** i, s))
        bv_add(p, f_value, term, (-1) ** (s - 1 - i))
    v_power = bv_power(p, f_value, p - 1, s)
    out = []
    for i in range(s + 1):
        q: BVElement = {}
        if i >= 1:
            bv_add(p, q, bv_power(p, previous[i - 1], p, s))
        if i <= s - 1:
            bv_add(p, q, bv_multiply(p, v_power, previous[i]))
        out.append(tuple(sorted(q.items())))
    return tuple(out)


def dickson(p: int, s: int, i: int, method: str = "recursion") -> BVElement:
    """Dickson invariant Q_{s,i} as a polynomial in v_1..v_s"""
    _check_rank(p, s)
    if not 0 <= i <= s:
        raise ValueError(f"Dickson index {i} outside 0..{s}")
    if method == "product":
        coeffs = _dickson_product(p, s)
        poly = dict(coeffs[p ** i])
        return bv_scale(p, poly, (-1) ** (s - i))
    if method == "recursion":
        return dict(_dickson_recursive(p, s)[i])
    raise ValueError(f"unknown Dickson method {method!r}")


@lru_cache(maxsize=None)
def _mui_cached(p: int, s: int, which: str, i: int) -> Tuple[Tuple[BVMono, int], ...]:
    v_rows = [[bv_v(s, j, p ** k) for j in range(s)] for k in range(s)]
    if which == "L":
        result = bv_det(p, v_rows, s)
    elif which == "e":
        result = bv_power(p, dict(_mui_cached(p, s, "L", 0)), (p - 1) // 2, s)
    elif which == "M":
        rows = [[bv_u(s, j) for j in range(s)]] + [row for k, row in enumerate(v_rows) if k != i]
        result = bv_det(p, rows, s)
    elif which == "Mtilde":
        L = dict(_mui_cached(p, s, "L", 0))
        result = bv_multiply(p, dict(_mui_cached(p, s, "M", i)), bv_power(p, L, (p - 3) // 2, s))
    elif which == "R":
        result = bv_multiply(p, dict(_mui_cached(p, s, "Mtilde", i)), dict(_mui_cached(p, s, "e", 0)))
    else:
        raise ValueError(f"unknown Mui invariant {which!r}")
    return tuple(sorted(result.items()))


def mui(p: int, s: int, which: str, i: int = 0) -> BVElement:
    """Mui invariants: which in L, e, M, Mtilde, R (the last three indexed by i < s)"""
    _check_rank(p, s)
    if which in ("M", "Mtilde", "R") and not 0 <= i < s:
        raise ValueError(f"Mui index {i} outside 0..{s - 1}")
    return dict(_mui_cached(p, s, which, i))


# --- Gamma_s -----------------------------------------------------------------


class GammaMonomial(NamedTuple):
    """R_{mask} Q_{s,0}^{e_0} Q_{s,1}^{e_1} ... with mask ascending"""
    mask: Tuple[int, ...]
    exps: Tuple[int, ...]

    @property
    def rank(self) -> int:
        return len(self.exps)

    @property
    def parity(self) -> int:
        return len(self.mask) % 2


Gamma = Dict[GammaMonomial, int]


def gamma_unit(s: int) -> GammaMonomial:
    return GammaMonomial((), (0,) * s)


def gamma_degree(p: int, mono: GammaMonomial) -> int:
    s = mono.rank
    return (sum(2 * (p ** s - p ** j) - 1 for j in mono.mask)
            + sum(e * 2 * (p ** s - p ** i) for i, e in enumerate(mono.exps)))


def q_monomial(s: int, i: int, exponent: int = 1) -> GammaMonomial:
    exps = [0] * s
    exps[i] = exponent
    return GammaMonomial((), tuple(exps))


def gamma_q(s: int, i: int) -> Gamma:
    """Q_{s,i} with Q_{s,s} = 1 and Q_{s,i} = 0 outside 0..s"""
    if i == s:
        return {gamma_unit(s): 1}
    if i < 0 or i > s:
        return {}
    return {q_monomial(s, i): 1}


def gamma_r(s: int, i: int) -> Gamma:
    """R_{s,i}, zero for i >= s"""
    if i < 0 or i >= s:
        return {}
    return {GammaMonomial((i,), (0,) * s): 1}


def mono_multiply(a: GammaMonomial, b: GammaMonomial) -> Optional[Tuple[GammaMonomial, int]]:
    if set(a.mask) & set(b.mask):
        return None
    sign = _merge_sign(a.mask, b.mask)
    return GammaMonomial(tuple(sorted(a.mask + b.mask)), tuple(x + y for x, y in zip(a.exps, b.exps))), sign


def gamma_add(p: int, target: Gamma, source: Gamma, coeff: int = 1) -> Gamma:
    for mono, c in source.items():
        value = (target.get(mono, 0) + coeff * c) % p
        if value:
            target[mono] = value
        else:
            target.pop(mono, None)
    return target


def gamma_multiply(p: int, a: Gamma, b: Gamma) -> Gamma:
    """Graded-commutative product in Gamma_s"""
    out: Gamma = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            prod_ = mono_multiply(ma, mb)
            if prod_ is None:
                continue
            mono, sign = prod_
            value = (out.get(mono, 0) + sign * ca * cb) % p
            if value:
                out[mono] = value
            else:
                out.pop(mono, None)
    return out


def gamma_power(p: int, a: Gamma, n: int, s: int) -> Gamma:
    result: Gamma = {gamma_unit(s): 1}
    for _ in range(n):
        result = gamma_multiply(p, result, a)
    return result


def format_gamma(g: Gamma) -> List[str]:
    lines = []
    for mono, c in sorted(g.items()):
        mask = ",".join(str(i) for i in mono.mask)
        exps = ",".join(str(e) for e in mono.exps)
        lines.append(f"{c} * R{{{mask}}} Q^({exps})")
    return lines


def format_bv(a: BVElement) -> List[str]:
    lines = []
    for (mask, exps), c in sorted(a.items()):
        lines.append(f"{c} * u{{{','.join(str(i) for i in mask)}}} v^({','.join(str(e) for e in exps)})")
    return lines


@lru_cache(maxsize=None)
def _generator_bv(p: int, s: int, kind: str, i: int) -> Tuple[Tuple[BVMono, int], ...]:
    if kind == "Q":
        return tuple(sorted(dickson(p, s, i).items()))
    return tuple(sorted(mui(p, s, "R", i).items()))


def gamma_to_bv(p: int, g: Gamma) -> BVElement:
    """Evaluate a Gamma element with no negative Q_{s,0} power as a polynomial"""
    out: BVElement = {}
    for mono, c in g.items():
        s = mono.rank
        if mono.exps and mono.exps[0] < 0:
            raise ValueError("negative power of Q_{s,0} has no polynomial value")
        term = bv_one(s)
        for i in mono.mask:
            term = bv_multiply(p, term, dict(_generator_bv(p, s, "R", i)))
        for i, e in enumerate(mono.exps):
            if e:
                term = bv_multiply(p, term, bv_power(p, dict(_generator_bv(p, s, "Q", i)), e, s))
        bv_add(p, out, term, c)
    return out


# --- tensor products of Gamma algebras --------------------------------------

TensorKey = Tuple[GammaMonomial, ...]
Tensor = Dict[TensorKey, int]


def tensor_multiply(p: int, a: Tensor, b: Tensor) -> Tensor:
    """(a_1⊗..⊗a_n)(b_1⊗..⊗b_n) with the Koszul sign of moving each b_j past a_i, i > j"""
    out: Tensor = {}
    for ka, ca in a.items():
        for kb, cb in b.items():
            sign = 1
            for j in range(len(kb)):
                if kb[j].parity and sum(x.parity for x in ka[j + 1:]) % 2:
                    sign = -sign
            factors = []
            for x, y in zip(ka, kb):
                prod_ = mono_multiply(x, y)
                if prod_ is None:
                    break
                factors.append(prod_[0])
                sign *= prod_[1]
            else:
                key = tuple(factors)
                value = (out.get(key, 0) + sign * ca * cb) % p
                if value:
                    out[key] = value
                else:
                    out.pop(key, None)
    return out


def tensor_add(p: int, target: Tensor, source: Tensor, coeff: int = 1) -> Tensor:
    for key, c in source.items():
        value = (target.get(key, 0) + coeff * c) % p
        if value:
            target[key] = value
        else:
            target.pop(key, None)
    return target


def _pure(g: Gamma, other: GammaMonomial, left: bool) -> Tensor:
    return {((m, other) if left else (other, m)): c for m, c in g.items()}


@lru_cache(maxsize=None)
def _psi_generator(p: int, s: int, t: int, kind: str, i: int) -> Tuple[Tuple[TensorKey, int], ...]:
    """psi_{s,t} on Q_{s+t,i}, R_{s+t,i}, or the inverse of Q_{s+t,0} (kind "Qinv")"""
    out: Tensor = {}
    q0_power = lambda e: {q_monomial(s, 0, e): 1}
    if kind == "Qinv":
        out = {(q_monomial(s, 0, -p ** t), q_monomial(t, 0, -1)): 1}
    elif kind == "Q":
        for j in range(t + 1):
            left = gamma_multiply(p, gamma_power(p, gamma_q(s, i - j), p ** j, s), q0_power(p ** t - p ** j))
            tensor_add(p, out, tensor_multiply(p, _pure(left, gamma_unit(t), True),
                                               _pure(gamma_q(t, j), gamma_unit(s), False)))
    elif kind == "R":
        left = gamma_multiply(p, gamma_r(s, i), q0_power(p ** t - 1))
        tensor_add(p, out, tensor_multiply(p, _pure(left, gamma_unit(t), True),
                                           _pure(gamma_q(t, 0), gamma_unit(s), False)))
        for j in range(t):
            left = gamma_multiply(p, gamma_power(p, gamma_q(s, i - j), p ** j, s), q0_power(p ** t - p ** j))
            tensor_add(p, out, tensor_multiply(p, _pure(left, gamma_unit(t), True),
                                               _pure(gamma_r(t, j), gamma_unit(s), False)))
    else:
        raise ValueError(f"unknown generator kind {kind!r}")
    return tuple(sorted(out.items()))


@lru_cache(maxsize=None)
def _psi_mono(p: int, s: int, t: int, mono: GammaMonomial) -> Tuple[Tuple[TensorKey, int], ...]:
    result: Tensor = {(gamma_unit(s), gamma_unit(t)): 1}
    for i in mono.mask:
        result = tensor_multiply(p, result, dict(_psi_generator(p, s, t, "R", i)))
    e0 = mono.exps[0]
    if e0:
        base = dict(_psi_generator(p, s, t, "Q" if e0 > 0 else "Qinv", 0))
        for _ in range(abs(e0)):
            result = tensor_multiply(p, result, base)
    for i, e in enumerate(mono.exps[1:], start=1):
        base = dict(_psi_generator(p, s, t, "Q", i))
        for _ in range(e):
            result = tensor_multiply(p, result, base)
    return tuple(sorted(result.items()))


def psi_coproduct(p: int, s: int, t: int, g: Gamma) -> Tensor:
    """The algebra map psi_{s,t}: Gamma_{s+t} -> Gamma_s ⊗ Gamma_t"""
    if s < 1 or t < 1:
        raise ValueError("psi_{s,t} needs s, t >= 1")
    out: Tensor = {}
    for mono, c in g.items():
        tensor_add(p, out, dict(_psi_mono(p, s, t, mono)), c)
    return out


def theta(p: int, s: int, m: MilnorElement) -> Gamma:
    """
    theta_s on the dual of a Milnor basis element:
    xi_i -> (-1)^i Q_{s,i}/Q_{s,0},  tau_j -> (-1)^{j+1} R_{s,j}/Q_{s,0}.
    The dual of Q_E carries the tau's in reversed order.
    """
    if s == 0:
        return {GammaMonomial((), ()): 1} if m == MilnorElement() else {}
    if any(j >= s for j in m.exterior):
        return {}
    if any(r and i > s for i, r in enumerate(m.exponents, start=1)):
        return {}
    k = len(m.exterior)
    sign = (-1) ** (k * (k - 1) // 2)
    sign *= (-1) ** sum(j + 1 for j in m.exterior)
    sign *= (-1) ** sum(i * r for i, r in enumerate(m.exponents, start=1))
    exps = [0] * s
    exps[0] = -k - sum(m.exponents)
    for i, r in enumerate(m.exponents, start=1):
        if i < s:
            exps[i] += r
    return {GammaMonomial(tuple(m.exterior), tuple(exps)): sign % p}


W_MONOMIAL = GammaMonomial((0,), (-1,))


def partial_1(g: Gamma) -> int:
    """Coefficient of w = R_{1,0} Q_{1,0}^{-1}"""
    return g.get(W_MONOMIAL, 0)


def _compositions(total: int, bounds: Sequence[int]):
    if not bounds:
        if total == 0:
            yield ()
        return
    for c in range(min(total, bounds[0]) + 1):
        for tail in _compositions(total - c, bounds[1:]):
            yield (c,) + tail


@lru_cache(maxsize=None)
def _partial_mono(p: int, s: int, mono: GammaMonomial) -> Tuple[Tuple[GammaMonomial, int], ...]:
    """
    partial_s on one monomial: psi_{s-1,1} followed by Gamma_{s-1} ⊗ partial_1.

    partial_1 has odd degree, so a term a ⊗ w contributes (-1)^{|a|} a; the
    parity of a is the number of R factors left in it.
    """
    r = s - 1
    mask, e0, b = mono.mask, mono.exps[0], mono.exps[1:]
    k = len(mask)
    if k == 0:
        return ()
    needed = -e0 - k
    if needed < 0 or needed > sum(b):
        return ()
    q0 = lambda e: {q_monomial(r, 0, e): 1}
    out: Gamma = {}
    for pos in range(k):
        others = mask[:pos] + mask[pos + 1:]
        if any(i >= r for i in others):
            continue
        head: Gamma = {GammaMonomial(others, (0,) * r): 1}
        head = gamma_multiply(p, head, q0((p - 1) * k + p * e0))
        head = gamma_multiply(p, head, gamma_q(r, mask[pos]))
        if not head:
            continue
        # (-1)^{k-1-pos} from moving the later R factors past R_{1,0}, times (-1)^{k-1} for |a|
        sign = (-1) ** pos
        for choice in _compositions(needed, b):
            coeff = sign
            term = head
            for j, (c, bj) in enumerate(zip(choice, b), start=1):
                coeff = coeff * comb(bj, c) % p
                if not coeff:
                    break
                a_part = gamma_multiply(p, q0((p - 1) * c), gamma_power(p, gamma_q(r, j), c, r))
                b_part = gamma_power(p, gamma_q(r, j - 1), p * (bj - c), r)
                term = gamma_multiply(p, term, gamma_multiply(p, a_part, b_part))
            if coeff and term:
                gamma_add(p, out, term, coeff)
    return tuple(sorted(out.items()))


def partial_s(p: int, s: int, g: Gamma) -> Gamma:
    """partial_s: Gamma_s -> Gamma_{s-1}, raising the internal degree by one"""
    if s < 1:
        raise ValueError("partial_s needs s >= 1")
    if s == 1:
        c = partial_1(g)
        return {GammaMonomial((), ()): c} if c else {}
    out: Gamma = {}
    for mono, c in g.items():
        gamma_add(p, out, dict(_partial_mono(p, s, mono)), c)
    return out


def phi_s_map(p: int, s: int, q: Gamma) -> Gamma:
    """Algebra map on Dickson polynomials: Q_{s,0} -> 0, Q_{s,j} -> Q_{s-1,j-1}^p"""
    out: Gamma = {}
    for mono, c in q.items():
        if mono.mask or any(e < 0 for e in mono.exps):
            raise ValueError("phi_s is defined on Dickson polynomials only")
        if mono.exps[0]:
            continue
        term: Gamma = {gamma_unit(s - 1): 1}
        for j, e in enumerate(mono.exps[1:], start=1):
            if e:
                term = gamma_multiply(p, term, gamma_power(p, gamma_q(s - 1, j - 1), p * e, s - 1))
        gamma_add(p, out, term, c)
    return out


# --- Steenrod operations on Gamma_s -----------------------------------------


def _gamma_basis(p: int, s: int, degree: int, exterior: int) -> List[GammaMonomial]:
    """Monomials with nonnegative exponents, |mask| = exterior, of the given degree"""
    weights = [2 * (p ** s - p ** i) for i in range(s)]
    monos = []
    for mask in combinations(range(s), exterior):
        rest = degree - sum(2 * (p ** s - p ** j) - 1 for j in mask)
        if rest < 0:
            continue

        def fill(i: int, remaining: int):
            if i == s:
                if remaining == 0:
                    yield ()
                return
            for e in range(remaining // weights[i] + 1):
                for tail in fill(i + 1, remaining - e * weights[i]):
                    yield (e,) + tail

        for exps in fill(0, rest):
            monos.append(GammaMonomial(mask, exps))
    return monos


def _express_invariant(p: int, s: int, poly: BVElement, degree: int, exterior: int) -> Gamma:
    if not poly:
        return {}
    basis = _gamma_basis(p, s, degree, exterior)
    images = [gamma_to_bv(p, {m: 1}) for m in basis]
    monos = sorted(set(poly).union(*[set(im) for im in images]))
    index = {m: i for i, m in enumerate(monos)}
    a = np.zeros((len(monos), len(basis)), dtype=np.int64)
    for col, im in enumerate(images):
        for m, c in im.items():
            a[index[m], col] = c
    b = np.zeros(len(monos), dtype=np.int64)
    for m, c in poly.items():
        b[index[m]] = c
    x = solve_mod_p(p, a, b) if basis else None
    if x is None:
        raise StabilityViolationError(
            f"stability violation: invariant of degree {degree} not in the span of Gamma_{s} monomials",
            witness={"s": s, "degree": degree},
        )
    return {m: int(c) for m, c in zip(basis, x) if c}


@lru_cache(maxsize=None)
def _power_table(p: int, s: int, kind: str, i: int, k: int) -> Tuple[Tuple[GammaMonomial, int], ...]:
    """P^k of the generator Q_{s,i} or R_{s,i}, or beta R_{s,i} (k = -1)"""
    generator = gamma_q(s, i) if kind == "Q" else gamma_r(s, i)
    if k == 0:
        return tuple(sorted(generator.items()))
    poly = gamma_to_bv(p, generator)
    if k < 0:
        image = bv_beta(p, poly)
        degree = gamma_degree(p, next(iter(generator))) + 1
        exterior = 0
    else:
        image = bv_reduced_power(p, k, poly)
        degree = gamma_degree(p, next(iter(generator))) + 2 * k * (p - 1)
        exterior = 1 if kind == "R" else 0
    return tuple(sorted(_express_invariant(p, s, image, degree, exterior).items()))


Series = List[Gamma]


def _series_multiply(p: int, a: Series, b: Series, top: int) -> Series:
    out: Series = [{} for _ in range(top + 1)]
    for i, x in enumerate(a):
        if not x:
            continue
        for j, y in enumerate(b[:top + 1 - i]):
            if y:
                gamma_add(p, out[i + j], gamma_multiply(p, x, y))
    return out


def _generator_series(p: int, s: int, kind: str, i: int, top: int) -> Series:
    return [dict(_power_table(p, s, kind, i, k)) for k in range(top + 1)]


def _inverse_q0_series(p: int, s: int, top: int) -> Series:
    """Total power of Q_{s,0}^{-1}: Q_0^{-1} (1 + X)^{-1} with X = Q_0^{-1}(P_t(Q_0) - Q_0)"""
    inv = {q_monomial(s, 0, -1): 1}
    total = _generator_series(p, s, "Q", 0, top)
    x: Series = [{}] + [gamma_multiply(p, inv, total[k]) for k in range(1, top + 1)]
    result: Series = [{gamma_unit(s): 1}] + [{} for _ in range(top)]
    term: Series = [{gamma_unit(s): 1}] + [{} for _ in range(top)]
    for n in range(1, top + 1):
        term = _series_multiply(p, term, x, top)
        for k in range(top + 1):
            gamma_add(p, result[k], term[k], (-1) ** n)
    return [gamma_multiply(p, inv, c) for c in result]


def _check_cap(p: int, i: int) -> None:
    if 2 * i * (p - 1) > degree_cap(p):
        raise CapExceededError(f"cap exceeded: P^{i} has degree above {degree_cap(p)}",
                               witness={"operation": i})


@lru_cache(maxsize=None)
def _power_on_mono(p: int, s: int, i: int, mono: GammaMonomial) -> Tuple[Tuple[GammaMonomial, int], ...]:
    if i == 0:
        return ((mono, 1),)
    result: Series = [{gamma_unit(s): 1}] + [{} for _ in range(i)]
    for j in mono.mask:
        result = _series_multiply(p, result, _generator_series(p, s, "R", j, i), i)
    e0 = mono.exps[0]
    if e0:
        base = _generator_series(p, s, "Q", 0, i) if e0 > 0 else _inverse_q0_series(p, s, i)
        for _ in range(abs(e0)):
            result = _series_multiply(p, result, base, i)
    for j, e in enumerate(mono.exps[1:], start=1):
        if e:
            base = _generator_series(p, s, "Q", j, i)
            for _ in range(e):
                result = _series_multiply(p, result, base, i)
    return tuple(sorted(result[i].items()))


@lru_cache(maxsize=None)
def _beta_on_mono(p: int, s: int, mono: GammaMonomial) -> Tuple[Tuple[GammaMonomial, int], ...]:
    out: Gamma = {}
    rest = GammaMonomial((), mono.exps)
    for pos, j in enumerate(mono.mask):
        others = GammaMonomial(mono.mask[:pos] + mono.mask[pos + 1:], (0,) * s)
        image = dict(_power_table(p, s, "R", j, -1))
        term = gamma_multiply(p, gamma_multiply(p, image, {others: 1}), {rest: 1})
        gamma_add(p, out, term, (-1) ** pos)
    return tuple(sorted(out.items()))


def steenrod_on_gamma(p: int, s: int, op: Tuple, g: Gamma) -> Gamma:
    """Apply ("beta",) or ("P", i) to a Gamma_s element"""
    if s == 0:
        return dict(g) if op[0] == "P" and op[1] == 0 else {}
    _check_rank(p, s)
    out: Gamma = {}
    if op[0] == "beta":
        for mono, c in g.items():
            gamma_add(p, out, dict(_beta_on_mono(p, s, mono)), c)
        return out
    i = op[1]
    _check_cap(p, i)
    for mono, c in g.items():
        gamma_add(p, out, dict(_power_on_mono(p, s, i, mono)), c)
    return out


# --- K_s monomials -------------------------------------------------------------


class KsMonomial(NamedTuple):
    """M~_{s,mask} e_s^a Q_{s,1}^{b_1} ... Q_{s,s-1}^{b_{s-1}}"""
    mask: Tuple[int, ...]
    a: int
    b: Tuple[int, ...]

    @property
    def parity(self) -> int:
        return (len(self.mask) + self.a) % 2


def ks_degree(p: int, s: int, k: KsMonomial) -> int:
    return (sum(p ** s - 2 * p ** i for i in k.mask) + k.a * (p ** s - 1)
            + sum(e * 2 * (p ** s - p ** j) for j, e in enumerate(k.b, start=1)))


def ks_monomials(p: int, s: int, degree: int) -> List[KsMonomial]:
    """All K_s monomials of the given degree"""
    if s == 0:
        return [KsMonomial((), 0, ())] if degree == 0 else []
    weights = [p ** s - 1] + [2 * (p ** s - p ** j) for j in range(1, s)]
    out = []
    for n in range(s + 1):
        for mask in combinations(range(s), n):
            rest = degree - sum(p ** s - 2 * p ** i for i in mask)
            if rest < 0:
                continue

            def fill(i: int, remaining: int):
                if i == len(weights):
                    if remaining == 0:
                        yield ()
                    return
                for e in range(remaining // weights[i] + 1):
                    for tail in fill(i + 1, remaining - e * weights[i]):
                        yield (e,) + tail

            for exps in fill(0, rest):
                out.append(KsMonomial(mask, exps[0], tuple(exps[1:])))
    return sorted(out)


def ks_to_gamma(s: int, k: KsMonomial, module_degree: int) -> Tuple[GammaMonomial, int]:
    """
    k·St_s(m) as sign · omega·S_s(m): M~_I e_s^{a+|m|} = R_I Q_{s,0}^{(a+|m|-|I|)/2}
    and St_s(m) = (-1)^{s[|m|/2]} e_s^{|m|} S_s(m).
    """
    twice_e0 = k.a + module_degree - len(k.mask)
    if twice_e0 % 2:
        raise ValueError("K_s monomial in the minus eigenspace has no Gamma_s form")
    sign = (-1) ** (s * (module_degree // 2) % 2)
    return GammaMonomial(k.mask, (twice_e0 // 2,) + k.b), sign


def gamma_to_ks(s: int, mono: GammaMonomial, module_degree: int) -> Tuple[KsMonomial, int]:
    a = 2 * mono.exps[0] + len(mono.mask) - module_degree
    if a < 0:
        raise ValueError("Gamma_s monomial outside R_s")
    return KsMonomial(mono.mask, a, tuple(mono.exps[1:])), (-1) ** (s * (module_degree // 2) % 2)


# --- splitting V_s = F_p ⊕ F_p^{s-1} ---------------------------------------------


def _truncate(p: int, t: Tensor, limit: int) -> Tensor:
    return {key: c for key, c in t.items() if gamma_degree(p, key[1]) <= limit}


def _min_inner_degree(p: int, t: Tensor) -> int:
    return min(gamma_degree(p, key[1]) for key in t)


def _outer_monomial(p: int, eps: int, n: int) -> Tuple[GammaMonomial, int]:
    """u^eps v^n in H*(BV_1) as c times a Gamma_1 monomial"""
    (_, c_q), = _generator_bv(p, 1, "Q", 0)
    (_, c_r), = _generator_bv(p, 1, "R", 0)
    inv_q = pow(c_q, p - 2, p)
    rest = n - eps * (p - 2)
    if rest < 0 or rest % (p - 1):
        raise StabilityViolationError(f"stability violation: u^{eps} v^{n} is not GL_1-invariant",
                                      witness={"exterior": eps, "exponent": n})
    k = rest // (p - 1)
    c = pow(inv_q, k, p) * (pow(c_r, p - 2, p) if eps else 1) % p
    return GammaMonomial((0,) if eps else (), (k,)), c


@lru_cache(maxsize=None)
def _split_generator(p: int, s: int, kind: str, i: int) -> Tuple[Tuple[TensorKey, int], ...]:
    """Q_{s,i} or R_{s,i} restricted along V_s = F_p ⊕ F_p^{s-1}; the first coordinate goes outside"""
    groups: Dict[Tuple[int, int], BVElement] = {}
    for (mask, exps), c in _generator_bv(p, s, kind, i):
        eps = 1 if mask and mask[0] == 0 else 0
        inner = (tuple(j - 1 for j in mask[eps:]), exps[1:])
        groups.setdefault((eps, exps[0]), {})[inner] = c
    out: Tensor = {}
    for (eps, n), inner in groups.items():
        outer, c = _outer_monomial(p, eps, n)
        first = next(iter(inner))
        for mono, c2 in _express_invariant(p, s - 1, inner, bv_degree(first), len(first[0])).items():
            tensor_add(p, out, {(outer, mono): c2}, c)
    return tuple(sorted(out.items()))


def _split_q0_inverse(p: int, s: int, limit: int) -> Tensor:
    """Q_{s,0}^{-1} = L^{-1} (1 + X)^{-1} with L the lowest inner-degree term of Q_{s,0}"""
    e = dict(_split_generator(p, s, "Q", 0))
    low = _min_inner_degree(p, e)
    lead = [(key, c) for key, c in e.items() if gamma_degree(p, key[1]) == low]
    (a, b), c = lead[0]
    if len(lead) != 1 or a.mask or b.mask or any(b.exps[1:]):
        raise ValueError(f"Q_{{{s},0}} has no invertible leading term")
    unit = (gamma_unit(1), gamma_unit(s - 1))
    inv = {(GammaMonomial((), (-a.exps[0],)), GammaMonomial((), (-b.exps[0],) + b.exps[1:])): pow(c, p - 2, p)}
    x = tensor_add(p, tensor_multiply(p, inv, e), {unit: 1}, -1)
    result: Tensor = {unit: 1}
    term: Tensor = {unit: 1}
    n = 0
    while True:
        n += 1
        term = _truncate(p, tensor_multiply(p, term, x), limit + low)
        if not term:
            break
        tensor_add(p, result, term, (-1) ** n)
    return _truncate(p, tensor_multiply(p, result, inv), limit)


@lru_cache(maxsize=None)
def _split_mono(p: int, s: int, mono: GammaMonomial, limit: int) -> Tuple[Tuple[TensorKey, int], ...]:
    q0_low = gamma_degree(p, q_monomial(s - 1, 0))
    factors: List[Optional[Tensor]] = [dict(_split_generator(p, s, "R", i)) for i in mono.mask]
    e0 = mono.exps[0]
    factors += [dict(_split_generator(p, s, "Q", 0)) if e0 > 0 else None] * abs(e0)
    for i, e in enumerate(mono.exps[1:], start=1):
        factors += [dict(_split_generator(p, s, "Q", i))] * e
    mins = [_min_inner_degree(p, f) if f is not None else -q0_low for f in factors]
    result: Tensor = {(gamma_unit(1), gamma_unit(s - 1)): 1}
    remaining = sum(mins)
    for f, low in zip(factors, mins):
        remaining -= low
        bound = limit - remaining
        current = _min_inner_degree(p, result)
        if f is None:
            f = _split_q0_inverse(p, s, bound - current)
        result = _truncate(p, tensor_multiply(p, result, f), bound)
        if not result:
            return ()
    return tuple(sorted(result.items()))


def split_embedding(p: int, s: int, g: Gamma, limit: int) -> Tensor:
    """
    The algebra embedding Gamma_s -> Gamma_1 ⊗ Gamma_{s-1} (completed) induced by
    V_s = F_p ⊕ F_p^{s-1}, keeping terms whose Gamma_{s-1} factor has degree <= limit.

    Negative powers of Q_{s,0} expand as series with unbounded negative outer
    degree and growing inner degree.
    """
    if s < 2:
        raise ValueError("split_embedding needs s >= 2")
    _check_rank(p, s)
    out: Tensor = {}
    for mono, c in g.items():
        tensor_add(p, out, dict(_split_mono(p, s, mono, limit)), c)
    return out
