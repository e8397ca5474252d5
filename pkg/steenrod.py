"""
Steenrod Algebra Module for the Destabilization Complex

The odd-primary Steenrod algebra degree by degree, and finite windows of modules over it.

Features:
- Admissible basis enumeration and Adem reduction of arbitrary words
- Milnor basis, Milnor product and the admissible <-> Milnor change of basis
- ModuleWindow: graded F_p modules with explicit beta / P^i tables
- Built-in modules: spheres, free modules, truncated H*(BV_1)
- Suspension, truncation, direct sums, Frobenius, lambda and destabilization
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb, factorial
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from fpla import (
    BasisMismatchError, GradedBasis, WindowExceededError, _rref, check_prime, inverse_mod_p,
)

logger = logging.getLogger(__name__)

# (eps_0, s_1, eps_1, ..., s_k, eps_k)
Word = Tuple[int, ...]
UNIT: Word = (0,)
BETA: Word = (1,)

Element = Dict[str, int]


def power(i: int) -> Word:
    """The word P^i"""
    return (0, i, 0) if i else UNIT


def word_degree(p: int, word: Word) -> int:
    return sum(word[0::2]) + 2 * (p - 1) * sum(word[1::2])


def concat(a: Word, b: Word) -> Word:
    """Product a·b as a (possibly inadmissible) word"""
    return a[:-1] + (a[-1] + b[0],) + b[1:]


def word_label(word: Word) -> str:
    """Compact text form: unit -> "1", beta P^3 beta P^1 -> "b_P3_b_P1" """
    tokens = ["b"] if word[0] else []
    for k in range(1, len(word), 2):
        tokens.append(f"P{word[k]}")
        if word[k + 1]:
            tokens.append("b")
    return "_".join(tokens) if tokens else "1"


def parse_word_label(text: str) -> Word:
    if text == "1":
        return UNIT
    word = [0]
    for token in text.split("_"):
        if token == "b":
            word[-1] += 1
        elif token.startswith("P"):
            word.extend([int(token[1:]), 0])
        else:
            raise ValueError(f"bad word token {token!r}")
    return tuple(word)


def is_admissible(p: int, word: Word) -> bool:
    if any(e not in (0, 1) for e in word[0::2]) or any(s < 1 for s in word[1::2]):
        return False
    for k in range(1, len(word) - 2, 2):
        if word[k] < p * word[k + 2] + word[k + 1]:
            return False
    return True


def excess(p: int, word: Word) -> int:
    """eps_0 + 2 s_1 minus the degree of the remaining word"""
    if len(word) == 1:
        return word[0]
    lead = word[0] + 2 * word[1]
    rest = word_degree(p, word) - word[0] - 2 * (p - 1) * word[1]
    return lead - rest


@lru_cache(maxsize=None)
def _tails(p: int, degree: int, bound: int) -> Tuple[Tuple[int, ...], ...]:
    out: List[Tuple[int, ...]] = []
    if degree == 0:
        out.append(())
    for s in range(1, bound + 1):
        for eps in (0, 1):
            rest = degree - 2 * s * (p - 1) - eps
            if rest < 0:
                continue
            for tail in _tails(p, rest, (s - eps) // p):
                out.append((s, eps) + tail)
    return tuple(out)


@lru_cache(maxsize=None)
def admissible_basis(p: int, degree: int) -> Tuple[Word, ...]:
    """All admissible words of the given degree, sorted"""
    if degree < 0:
        return ()
    words = []
    for eps in (0, 1):
        rest = degree - eps
        if rest < 0:
            continue
        for tail in _tails(p, rest, rest // (2 * (p - 1))):
            words.append((eps,) + tail)
    return tuple(sorted(words))


def unstable_free_dims(p: int, t: int, degree: int) -> int:
    """dim F(t) in the given degree: admissible words of degree - t with excess <= t"""
    return sum(1 for w in admissible_basis(p, degree - t) if excess(p, w) <= t)


def _normalize(word: Word) -> Optional[Word]:
    """Drop P^0 factors and merge Bocksteins; None when a beta^2 appears"""
    out = [word[0]]
    for k in range(1, len(word), 2):
        if word[k] == 0:
            out[-1] += word[k + 1]
        else:
            out.extend([word[k], word[k + 1]])
    if any(e > 1 for e in out[0::2]):
        return None
    return tuple(out)


def _adem_terms(p: int, a: int, eps: int, b: int) -> List[Tuple[Tuple[int, int, int, int], int]]:
    """P^a beta^eps P^b as (lead, A, mid, B) -> coefficient"""
    terms = []
    if eps == 0:
        for j in range(a // p + 1):
            c = (-1) ** (a + j) * comb((p - 1) * (b - j) - 1, a - p * j)
            if c % p:
                terms.append(((0, a + b - j, 0, j), c % p))
    else:
        for j in range(a // p + 1):
            c = (-1) ** (a + j) * comb((p - 1) * (b - j), a - p * j)
            if c % p:
                terms.append(((1, a + b - j, 0, j), c % p))
        for j in range((a - 1) // p + 1 if a >= 1 else 0):
            c = (-1) ** (a + j - 1) * comb((p - 1) * (b - j) - 1, a - p * j - 1)
            if c % p:
                terms.append(((0, a + b - j, 1, j), c % p))
    return terms


@lru_cache(maxsize=None)
def _adem_cached(p: int, word: Word) -> Tuple[Tuple[Word, int], ...]:
    for k in range(1, len(word) - 2, 2):
        a, eps, b = word[k], word[k + 1], word[k + 2]
        if a < p * b + eps:
            break
    else:
        return ((word, 1),)
    prefix, suffix = word[:k], word[k + 3:]
    result: Dict[Word, int] = {}
    for (lead, big, mid, small), c in _adem_terms(p, a, eps, b):
        spliced = prefix[:-1] + (prefix[-1] + lead, big, mid, small) + suffix
        normal = _normalize(spliced)
        if normal is None:
            continue
        for w, c2 in _adem_cached(p, normal):
            result[w] = (result.get(w, 0) + c * c2) % p
    return tuple(sorted((w, c) for w, c in result.items() if c))


def adem_reduce(p: int, word: Word) -> Dict[Word, int]:
    """Express an arbitrary product of beta and P^i in the admissible basis"""
    normal = _normalize(tuple(word))
    if normal is None:
        return {}
    return dict(_adem_cached(p, normal))


def multiply_words(p: int, a: Dict[Word, int], b: Dict[Word, int]) -> Dict[Word, int]:
    out: Dict[Word, int] = {}
    for wa, ca in a.items():
        for wb, cb in b.items():
            for w, c in adem_reduce(p, concat(wa, wb)).items():
                out[w] = (out.get(w, 0) + ca * cb * c) % p
    return {w: c for w, c in out.items() if c}


# --- Milnor basis ---------------------------------------------------------


class MilnorElement(NamedTuple):
    """Q_E P(R): exterior indices ascending, exponents without trailing zeros"""
    exterior: Tuple[int, ...] = ()
    exponents: Tuple[int, ...] = ()

    def degree(self, p: int) -> int:
        return (sum(2 * p ** j - 1 for j in self.exterior)
                + sum(r * 2 * (p ** i - 1) for i, r in enumerate(self.exponents, start=1)))


MILNOR_UNIT = MilnorElement((), ())


def _trim(exps) -> Tuple[int, ...]:
    exps = list(exps)
    while exps and exps[-1] == 0:
        exps.pop()
    return tuple(exps)


@lru_cache(maxsize=None)
def milnor_basis(p: int, degree: int) -> Tuple[MilnorElement, ...]:
    if degree < 0:
        return ()
    q_degrees = []
    j = 0
    while 2 * p ** j - 1 <= degree:
        q_degrees.append(j)
        j += 1
    weights = []
    i = 1
    while 2 * (p ** i - 1) <= degree:
        weights.append(2 * (p ** i - 1))
        i += 1

    def exps_of(rest: int, k: int) -> List[Tuple[int, ...]]:
        if k == len(weights):
            return [()] if rest == 0 else []
        out = []
        for r in range(rest // weights[k] + 1):
            for tail in exps_of(rest - r * weights[k], k + 1):
                out.append((r,) + tail)
        return out

    elements = []
    for n in range(len(q_degrees) + 1):
        for ext in combinations(q_degrees, n):
            rest = degree - sum(2 * p ** j - 1 for j in ext)
            if rest < 0:
                continue
            for exps in exps_of(rest, 0):
                elements.append(MilnorElement(ext, _trim(exps)))
    return tuple(sorted(elements))


def _multinomial_mod(p: int, parts: Iterable[int]) -> int:
    """Multinomial coefficient mod p via base-p digits"""
    parts = [x for x in parts if x]
    total = 1
    while any(parts):
        digits = [x % p for x in parts]
        if sum(digits) >= p:
            return 0
        value = factorial(sum(digits))
        for d in digits:
            value //= factorial(d)
        total = total * value % p
        parts = [x // p for x in parts]
    return total


def _insert_q(exterior: Tuple[int, ...], k: int) -> Tuple[Tuple[int, ...], int]:
    """Append Q_k on the right and sort; sign counts the larger indices crossed"""
    larger = sum(1 for e in exterior if e > k)
    return tuple(sorted(exterior + (k,))), (-1) ** larger


def _milnor_matrices(p: int, r: Tuple[int, ...], s: Tuple[int, ...]):
    """Yield diagonal sums t and the coefficient for every Milnor matrix of (r, s)"""
    rows, cols = len(r), len(s)

    def row_choices(i: int, capacity: List[int]):
        if i == rows:
            yield []
            return
        target = r[i]

        def fill(j: int, remaining: int, cap: List[int]):
            if j == cols:
                yield []
                return
            weight = p ** (j + 1)
            for x in range(min(remaining // weight, cap[j]) + 1):
                for tail in fill(j + 1, remaining - x * weight, cap):
                    yield [x] + tail

        for row in fill(0, target, capacity):
            x0 = target - sum(x * p ** (j + 1) for j, x in enumerate(row))
            new_cap = [c - x for c, x in zip(capacity, row)]
            for rest in row_choices(i + 1, new_cap):
                yield [[x0] + row] + rest

    for body in row_choices(0, list(s)):
        # row 0: column remainders
        top = [0] + [s[j] - sum(body[i][j + 1] for i in range(rows)) for j in range(cols)]
        matrix = [top] + body
        coeff = 1
        diagonals = []
        for n in range(1, rows + cols + 1):
            entries = [matrix[i][n - i] for i in range(max(0, n - cols), min(n, rows) + 1)]
            coeff = coeff * _multinomial_mod(p, entries) % p
            if coeff == 0:
                break
            diagonals.append(sum(entries))
        if coeff:
            yield _trim(diagonals), coeff


@lru_cache(maxsize=None)
def _milnor_product(p: int, a: MilnorElement, b: MilnorElement) -> Tuple[Tuple[MilnorElement, int], ...]:
    answer: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], int] = {(a.exterior, a.exponents): 1}
    for k in b.exterior:
        previous, answer = answer, {}
        for (ext, exps), c in previous.items():
            if k not in ext:
                new_ext, sign = _insert_q(ext, k)
                key = (new_ext, exps)
                answer[key] = (answer.get(key, 0) + sign * c) % p
            for i in range(1, len(exps) + 1):
                if k + i not in ext and p ** k <= exps[i - 1]:
                    new_ext, sign = _insert_q(ext, k + i)
                    lowered = list(exps)
                    lowered[i - 1] -= p ** k
                    key = (new_ext, _trim(lowered))
                    answer[key] = (answer.get(key, 0) + sign * c) % p
    result: Dict[MilnorElement, int] = {}
    for (ext, exps), c in answer.items():
        if not c:
            continue
        if not b.exponents:
            key = MilnorElement(ext, exps)
            result[key] = (result.get(key, 0) + c) % p
            continue
        for t, coeff in _milnor_matrices(p, exps, b.exponents):
            key = MilnorElement(ext, t)
            result[key] = (result.get(key, 0) + c * coeff) % p
    return tuple(sorted((m, c) for m, c in result.items() if c))


def milnor_multiply(p: int, a: MilnorElement, b: MilnorElement) -> Dict[MilnorElement, int]:
    return dict(_milnor_product(p, a, b))


def milnor_multiply_sums(p: int, a: Dict[MilnorElement, int], b: Dict[MilnorElement, int]) -> Dict[MilnorElement, int]:
    out: Dict[MilnorElement, int] = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            for m, c in _milnor_product(p, ma, mb):
                out[m] = (out.get(m, 0) + ca * cb * c) % p
    return {m: c for m, c in out.items() if c}


@lru_cache(maxsize=None)
def _word_to_milnor(p: int, word: Word) -> Tuple[Tuple[MilnorElement, int], ...]:
    current = {MILNOR_UNIT: 1}
    q0 = {MilnorElement((0,), ()): 1}
    if word[0]:
        current = milnor_multiply_sums(p, current, q0)
    for k in range(1, len(word), 2):
        current = milnor_multiply_sums(p, current, {MilnorElement((), (word[k],)): 1})
        if word[k + 1]:
            current = milnor_multiply_sums(p, current, q0)
    return tuple(sorted(current.items()))


def word_to_milnor(p: int, word: Word) -> Dict[MilnorElement, int]:
    return dict(_word_to_milnor(p, tuple(word)))


@dataclass(frozen=True)
class BasisChange:
    """Columns: admissible words; rows: Milnor basis; inverse maps back"""
    degree: int
    milnor: Tuple[MilnorElement, ...]
    admissible: Tuple[Word, ...]
    matrix: np.ndarray
    inverse: np.ndarray


@lru_cache(maxsize=None)
def change_of_basis(p: int, degree: int) -> BasisChange:
    milnor = milnor_basis(p, degree)
    words = admissible_basis(p, degree)
    if len(milnor) != len(words):
        raise BasisMismatchError(f"basis mismatch in degree {degree}: "
                                 f"{len(milnor)} Milnor vs {len(words)} admissible",
                                 witness={"degree": degree})
    index = {m: i for i, m in enumerate(milnor)}
    matrix = np.zeros((len(milnor), len(words)), dtype=np.int64)
    for col, w in enumerate(words):
        for m, c in word_to_milnor(p, w).items():
            matrix[index[m], col] = c
    inverse = inverse_mod_p(p, matrix) if len(words) else matrix.copy()
    if inverse is None:
        raise BasisMismatchError(f"basis mismatch in degree {degree}: singular change of basis",
                                 witness={"degree": degree})
    return BasisChange(degree, milnor, words, matrix, inverse)


def milnor_to_admissible(p: int, m: MilnorElement) -> Dict[Word, int]:
    change = change_of_basis(p, m.degree(p))
    row = change.milnor.index(m)
    return {w: int(change.inverse[col, row]) for col, w in enumerate(change.admissible)
            if change.inverse[col, row]}


# --- modules --------------------------------------------------------------


def add_into(target: Element, source: Element, coeff: int, p: int) -> None:
    for label, c in source.items():
        value = (target.get(label, 0) + coeff * c) % p
        if value:
            target[label] = value
        else:
            target.pop(label, None)


@dataclass
class ModuleWindow:
    """
    A finite-type graded module over the Steenrod algebra on degrees [lo, hi].

    beta and powers hold the images of basis labels; missing entries are zero.
    open_top marks modules that continue above hi (free modules), where
    acting past hi is an error rather than zero.
    """
    p: int
    lo: int
    hi: int
    degrees: Dict[str, int]
    beta: Dict[str, Element] = field(default_factory=dict)
    powers: Dict[Tuple[int, str], Element] = field(default_factory=dict)
    open_top: bool = False
    shift: int = 0
    name: str = "M"
    order: Optional[List[str]] = None

    def __post_init__(self):
        check_prime(self.p)
        by_degree: Dict[int, List[str]] = {}
        labels = self.order if self.order is not None else sorted(self.degrees)
        for label in labels:
            by_degree.setdefault(self.degrees[label], []).append(label)
        self.basis = GradedBasis(by_degree)
        self._milnor_cache: Dict[Tuple[MilnorElement, str], Element] = {}
        self._coaction_cache: Dict[Tuple[str, int], List[Tuple[MilnorElement, Element]]] = {}

    @property
    def labels(self) -> List[str]:
        return [label for _, labels in self.basis.items() for label in labels]

    def degree_of(self, label: str) -> int:
        return self.degrees[label]

    def dim(self, degree: int) -> int:
        return self.basis.dim(degree)

    def top(self) -> int:
        """Highest degree actually carrying a class"""
        degrees = self.basis.degrees()
        return degrees[-1] if degrees else self.lo - 1

    def bottom(self) -> int:
        degrees = self.basis.degrees()
        return degrees[0] if degrees else self.hi + 1

    def _check_target(self, degree: int) -> bool:
        """True when the target degree is inside the window"""
        if degree <= self.hi:
            return True
        if self.open_top:
            raise WindowExceededError(
                f"window exceeded: degree {degree} above {self.hi} in {self.name}",
                witness={"degree": degree, "hi": self.hi},
            )
        return False

    def apply_beta(self, x: Element) -> Element:
        out: Element = {}
        for label, c in x.items():
            if not self._check_target(self.degrees[label] + 1):
                continue
            add_into(out, self.beta.get(label, {}), c, self.p)
        return out

    def apply_power(self, i: int, x: Element) -> Element:
        if i == 0:
            return dict(x)
        out: Element = {}
        for label, c in x.items():
            if not self._check_target(self.degrees[label] + 2 * i * (self.p - 1)):
                continue
            add_into(out, self.powers.get((i, label), {}), c, self.p)
        return out

    def apply_word(self, word: Word, x: Element) -> Element:
        """Apply the tokens of a word right to left"""
        current = dict(x)
        for k in range(len(word) - 1, -1, -1):
            if not current:
                break
            if k % 2 == 0:
                if word[k]:
                    current = self.apply_beta(current)
            else:
                current = self.apply_power(word[k], current)
        return current

    def milnor_on_label(self, m: MilnorElement, label: str) -> Element:
        key = (m, label)
        if key not in self._milnor_cache:
            out: Element = {}
            for w, c in milnor_to_admissible(self.p, m).items():
                add_into(out, self.apply_word(w, {label: 1}), c, self.p)
            self._milnor_cache[key] = out
        return self._milnor_cache[key]

    def coaction_terms(self, label: str, budget: Optional[int] = None) -> List[Tuple[MilnorElement, Element]]:
        """All (b, b·x) with b a Milnor basis element, |b| <= budget and b·x != 0"""
        limit = self.hi - self.degrees[label]
        if budget is not None:
            limit = min(limit, budget)
        key = (label, limit)
        if key not in self._coaction_cache:
            terms = []
            for k in range(limit + 1):
                for m in milnor_basis(self.p, k):
                    image = self.milnor_on_label(m, label)
                    if image:
                        terms.append((m, image))
            self._coaction_cache[key] = terms
        return self._coaction_cache[key]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModuleWindow):
            return NotImplemented
        strip = lambda table: {k: v for k, v in table.items() if v}
        return (self.p == other.p and self.lo == other.lo and self.hi == other.hi
                and self.degrees == other.degrees and strip(self.beta) == strip(other.beta)
                and strip(self.powers) == strip(other.powers) and self.open_top == other.open_top)


def act(M: ModuleWindow, op: Union[Word, MilnorElement], x: Element) -> Element:
    """Action of an operation on an element of M"""
    if isinstance(op, MilnorElement):
        out: Element = {}
        for label, c in x.items():
            degree = M.degrees[label] + op.degree(M.p)
            if not M._check_target(degree):
                continue
            add_into(out, M.milnor_on_label(op, label), c, M.p)
        return out
    out = {}
    for w, c in adem_reduce(M.p, op).items():
        add_into(out, M.apply_word(w, x), c, M.p)
    return out


def _powers_range(M: ModuleWindow, degree: int) -> range:
    return range(1, (M.hi - degree) // (2 * (M.p - 1)) + 1)


def sphere(p: int, t: int = 0, name: Optional[str] = None) -> ModuleWindow:
    """Sigma^t F_p"""
    return ModuleWindow(p, t, t, {"x": t}, name=name or f"sphere({t})")


def free_module(p: int, n: int, hi: int) -> ModuleWindow:
    """Sigma^n A on the window [n, hi]; labels are admissible words"""
    degrees: Dict[str, int] = {}
    order: List[str] = []
    for d in range(n, hi + 1):
        for w in admissible_basis(p, d - n):
            label = word_label(w)
            degrees[label] = d
            order.append(label)
    beta: Dict[str, Element] = {}
    powers: Dict[Tuple[int, str], Element] = {}
    for label in order:
        w = parse_word_label(label)
        d = degrees[label]
        if d + 1 <= hi:
            beta[label] = {word_label(v): c for v, c in adem_reduce(p, concat(BETA, w)).items()}
        for i in range(1, (hi - d) // (2 * (p - 1)) + 1):
            powers[(i, label)] = {word_label(v): c for v, c in adem_reduce(p, concat(power(i), w)).items()}
    return ModuleWindow(p, n, hi, degrees, beta, powers, open_top=True,
                        name=f"free({n})", order=order)


def bv1(p: int, top: int) -> ModuleWindow:
    """H*(BV_1) = Lambda(u) ⊗ F_p[v] truncated above degree top"""
    degrees: Dict[str, int] = {}
    order: List[str] = []
    for d in range(0, top + 1):
        k, odd = divmod(d, 2)
        label = f"uv{k}" if odd else f"v{k}"
        degrees[label] = d
        order.append(label)
    beta: Dict[str, Element] = {}
    powers: Dict[Tuple[int, str], Element] = {}
    for label in order:
        d = degrees[label]
        k, odd = divmod(d, 2)
        if odd and d + 1 <= top:
            beta[label] = {f"v{k + 1}": 1}
        for i in range(1, k + 1):
            target = d + 2 * i * (p - 1)
            if target > top:
                break
            c = comb(k, i) % p
            if c:
                powers[(i, label)] = {(f"uv{k + i * (p - 1)}" if odd else f"v{k + i * (p - 1)}"): c}
    return ModuleWindow(p, 0, top, degrees, beta, powers, name=f"bv1({top})", order=order)


def suspend(M: ModuleWindow, t: int) -> ModuleWindow:
    if t == 0:
        return M
    return ModuleWindow(
        M.p, M.lo + t, M.hi + t, {label: d + t for label, d in M.degrees.items()},
        dict(M.beta), dict(M.powers), M.open_top, M.shift + t, M.name, order=M.labels,
    )


def truncate(M: ModuleWindow, c: int, side: str) -> ModuleWindow:
    """M^{<c} (side="below", a quotient) or M^{>=c} (side="above", a submodule)"""
    if side == "below":
        keep = [label for label in M.labels if M.degrees[label] < c]
        lo, hi = M.lo, min(M.hi, c - 1)
        open_top = M.open_top and c - 1 > M.hi
    elif side == "above":
        keep = [label for label in M.labels if M.degrees[label] >= c]
        lo, hi = max(M.lo, c), M.hi
        open_top = M.open_top
    else:
        raise ValueError(f"side must be 'below' or 'above', got {side!r}")
    kept = set(keep)
    restrict = lambda v: {k: x for k, x in v.items() if k in kept}
    beta = {k: restrict(v) for k, v in M.beta.items() if k in kept and restrict(v)}
    powers = {k: restrict(v) for k, v in M.powers.items() if k[1] in kept and restrict(v)}
    return ModuleWindow(M.p, lo, hi, {k: M.degrees[k] for k in keep}, beta, powers,
                        open_top, M.shift, f"{M.name}[{side} {c}]", order=keep)


def direct_sum(*modules: ModuleWindow) -> ModuleWindow:
    """Direct sum with labels prefixed by the summand index"""
    p = modules[0].p
    if any(M.p != p for M in modules):
        raise ValueError("direct sum of modules over different primes")
    degrees: Dict[str, int] = {}
    beta: Dict[str, Element] = {}
    powers: Dict[Tuple[int, str], Element] = {}
    order: List[str] = []
    for index, M in enumerate(modules):
        tag = lambda label: f"{index}:{label}"
        for label in M.labels:
            degrees[tag(label)] = M.degrees[label]
            order.append(tag(label))
        for label, v in M.beta.items():
            beta[tag(label)] = {tag(k): c for k, c in v.items()}
        for (i, label), v in M.powers.items():
            powers[(i, tag(label))] = {tag(k): c for k, c in v.items()}
    order.sort(key=lambda label: degrees[label])
    open_tops = [M.hi for M in modules if M.open_top]
    hi = min(open_tops) if open_tops else max(M.hi for M in modules)
    return ModuleWindow(p, min(M.lo for M in modules), hi, degrees, beta, powers,
                        bool(open_tops), 0, " + ".join(M.name for M in modules), order=order)


def frobenius_degree(p: int, d: int) -> int:
    return p * d if d % 2 == 0 else p * (d - 1) + 2


def frobenius(M: ModuleWindow) -> ModuleWindow:
    """Phi M: Phi x in degree pd (d even) or p(d-1)+2 (d odd); beta acts trivially"""
    p = M.p
    tag = lambda label: f"phi.{label}"
    degrees = {tag(label): frobenius_degree(p, d) for label, d in M.degrees.items()}
    if M.open_top:
        hi = min(frobenius_degree(p, M.hi + 1), frobenius_degree(p, M.hi + 2)) - 1
    else:
        hi = frobenius_degree(p, M.hi)
    powers: Dict[Tuple[int, str], Element] = {}
    for label in M.labels:
        d = M.degrees[label]
        for i in range(1, (hi - degrees[tag(label)]) // (2 * (p - 1)) + 1):
            if d % 2 == 0 and i % p == 0:
                image = M.apply_power(i // p, {label: 1})
            elif d % 2 == 1 and i % p == 1:
                image = M.apply_beta(M.apply_power((i - 1) // p, {label: 1}))
            else:
                continue
            if image:
                powers[(i, tag(label))] = {tag(k): c for k, c in image.items()}
    return ModuleWindow(p, frobenius_degree(p, M.lo), hi, degrees, {}, powers, M.open_top, M.shift, f"phi({M.name})",
                        order=[tag(label) for label in M.labels])


def lambda_map(M: ModuleWindow) -> Dict[str, Element]:
    """lambda_M(Phi x) = beta^eps P^i x with |x| = 2i + eps, keyed by Phi labels"""
    images: Dict[str, Element] = {}
    for label in M.labels:
        i, eps = divmod(M.degrees[label], 2)
        if i < 0:
            images[f"phi.{label}"] = {}
            continue
        image = M.apply_power(i, {label: 1})
        if eps:
            image = M.apply_beta(image)
        images[f"phi.{label}"] = image
    return images


def instability_span(M: ModuleWindow, degree: int) -> List[Element]:
    """beta^eps P^i x with eps + 2i > |x| landing in the given degree"""
    p = M.p
    vectors = []
    for src_degree, labels in M.basis.items():
        for eps in (0, 1):
            rest = degree - src_degree - eps
            if rest < 0 or rest % (2 * (p - 1)):
                continue
            i = rest // (2 * (p - 1))
            if eps + 2 * i <= src_degree:
                continue
            for label in labels:
                image = M.apply_power(i, {label: 1})
                if eps:
                    image = M.apply_beta(image)
                if image:
                    vectors.append(image)
    return vectors


def is_unstable(M: ModuleWindow) -> bool:
    return all(not instability_span(M, d) for d in M.basis.degrees())


def destabilize(M: ModuleWindow) -> ModuleWindow:
    """D M = M / BM, with the complement of the pivot labels as quotient basis"""
    p = M.p
    reducers: Dict[int, Tuple[np.ndarray, List[int], Tuple[str, ...]]] = {}
    keep: List[str] = []
    for degree, labels in M.basis.items():
        vectors = instability_span(M, degree)
        if vectors:
            dense = np.array([[v.get(label, 0) for label in labels] for v in vectors], dtype=np.int64)
            reduced, pivots = _rref(p, dense)
            reducers[degree] = (reduced[:len(pivots)], pivots, labels)
            pivot_labels = {labels[c] for c in pivots}
        else:
            pivot_labels = set()
        keep.extend(label for label in labels if label not in pivot_labels)

    def reduce(v: Element) -> Element:
        if not v:
            return v
        degree = M.degrees[next(iter(v))]
        if degree not in reducers:
            return v
        rows, pivots, labels = reducers[degree]
        vec = np.array([v.get(label, 0) for label in labels], dtype=np.int64)
        for row, col in zip(rows, pivots):
            if vec[col]:
                vec = (vec - vec[col] * row) % p
        return {labels[k]: int(c) for k, c in enumerate(vec) if c}

    kept = set(keep)
    beta = {label: reduce(v) for label, v in M.beta.items() if label in kept}
    powers = {key: reduce(v) for key, v in M.powers.items() if key[1] in kept}
    logger.debug(f"destabilized {M.name}: {len(M.degrees)} -> {len(keep)} classes")
    return ModuleWindow(p, M.lo, M.hi, {label: M.degrees[label] for label in keep},
                        {k: v for k, v in beta.items() if v}, {k: v for k, v in powers.items() if v},
                        M.open_top, M.shift, f"D({M.name})", order=keep)


@dataclass
class FreeModuleWindow:
    """Direct sum of shifted copies of A, one per generator, through degree hi"""
    p: int
    hi: int
    generators: List[Tuple[str, int]] = field(default_factory=list)

    def generator_degree(self, name: str) -> int:
        return dict(self.generators)[name]

    def basis(self, degree: int) -> List[Tuple[Word, str]]:
        out = []
        for name, n in self.generators:
            for w in admissible_basis(self.p, degree - n):
                out.append((w, name))
        return out

    def multiply(self, word: Word, x: Dict[Tuple[Word, str], int]) -> Dict[Tuple[Word, str], int]:
        """word · x, reduced to the admissible basis"""
        out: Dict[Tuple[Word, str], int] = {}
        for (w, g), c in x.items():
            for v, c2 in adem_reduce(self.p, concat(word, w)).items():
                key = (v, g)
                value = (out.get(key, 0) + c * c2) % self.p
                if value:
                    out[key] = value
                else:
                    out.pop(key, None)
        return out
