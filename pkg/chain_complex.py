"""
Destabilization Chain Complex

D_s M = Sigma R_s Sigma^{s-1} M, with d_s induced by partial_s on the Gamma_s
factor, its homology, and the structural checks run against it.

Features:
- build_complex: bases and differential matrices of D_0 M .. D_{s_max} M on a degree window
- validity windows for modules that continue above their top degree
- homology with representatives, flagged as an upper bound at an unchecked top position
- the short exact sequence 0 -> Sigma^{-1} D(Sigma M) -> D M -> Sigma^{-1} Phi D_{*-1}(Sigma M) -> 0
- connectivity, Dickson linearity, kernel, vanishing and unstable-module checks

A basis element of D_s M is a pair (omega, m): omega·S_s(m) in R_s Sigma^{s-1} M,
suspended once, sitting in degree |omega| + |m| + s.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from fpla import (
    BasisMismatchError, DifferentialError, GradedBasis, NotAComplexError, RankCapError, SparseMatFp,
    StabilityViolationError, TwistTooSmallError, homology_at, rank_of,
)
from invariants import GammaMonomial, mono_multiply, partial_s, phi_s_map, q_monomial
from rfunctor import RsElement, RsLabel, pullback, rho_1, rho_s, rs_degree, rs_dims, rs_gamma_basis, rs_to_ambient
from run_logger import CheckResult, HomologyRow
from run_model import RsSign, rank_cap
from steenrod import ModuleWindow, add_into, frobenius_degree, is_unstable, suspend

logger = logging.getLogger(__name__)


def connectivity_bound(p: int, s: int, bottom: int) -> int:
    """D_s M and H_s vanish below this degree when M starts in degree bottom"""
    return 1 + p ** s * (bottom + s - 1)


def min_basis_degree(p: int, s: int, module_degree: int) -> int:
    """Lowest degree of a basis element omega·S_s(m) of D_s M with |m| = module_degree"""
    if s == 0:
        return module_degree
    n = module_degree + s - 1
    return 1 + p ** s * n + (p ** s - 2 * p ** (s - 1) if n % 2 else 0)


def complex_sources(M: ModuleWindow, s_max: int) -> Dict[int, ModuleWindow]:
    """Sigma^{s-1} M for s = 0..s_max; D_s M is built over the s-th entry"""
    return {s: suspend(M, s - 1) for s in range(s_max + 1)}


def boundary(source: ModuleWindow, target: ModuleWindow, s: int, e: RsElement) -> RsElement:
    """
    d_s on an element of R_s(source), landing in R_{s-1}(target) with
    source = Sigma target: expand into Gamma_s ⊗ source, apply partial_s to the
    Gamma factor and pull back along S_{s-1} over target.
    """
    if s == 0 or not e:
        return {}
    p = source.p
    image: Dict[Tuple[GammaMonomial, str], int] = {}
    for (g, label), c in rs_to_ambient(source, s, e).items():
        for g2, c2 in partial_s(p, s, {g: 1}).items():
            add_into(image, {(g2, label): c2}, c, p)
    try:
        return pullback(target, s - 1, image)
    except StabilityViolationError as exc:
        raise DifferentialError(
            f"differential leaves R_{s - 1}: {exc}",
            witness={"s": s, "element": str(sorted(e.items())), **exc.witness},
        ) from exc


@dataclass
class ComplexWindow:
    """D_0 M .. D_{s_max} M on degrees [lo, hi] with the matrices of d_1 .. d_{s_max}"""
    module: ModuleWindow
    s_max: int
    lo: int
    hi: int
    sources: Dict[int, ModuleWindow]
    bases: Dict[int, GradedBasis]
    differentials: Dict[Tuple[int, int], SparseMatFp] = field(default_factory=dict)
    valid_below: Dict[int, int] = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.module.p

    def basis(self, s: int, degree: int) -> Tuple[RsLabel, ...]:
        if s not in self.bases:
            return ()
        return self.bases[s][degree]

    def dim(self, s: int, degree: int) -> int:
        return len(self.basis(s, degree))

    def matrix(self, s: int, degree: int) -> SparseMatFp:
        """d_s: D_s -> D_{s-1} in one degree, columns indexed by D_s; zero past either end"""
        if (degree, s) in self.differentials:
            return self.differentials[(degree, s)]
        return SparseMatFp.zero(self.p, self.dim(s - 1, degree), self.dim(s, degree),
                                self.basis(s - 1, degree), self.basis(s, degree))

    def apply(self, s: int, e: RsElement) -> RsElement:
        return boundary(self.sources[s], self.sources[s - 1], s, e) if s else {}

    def valid_degrees(self, s: int) -> range:
        """Degrees where H_s of the window agrees with H_s of the module"""
        bounds = [self.valid_below[t] for t in (s - 1, s, s + 1) if t in self.valid_below]
        top = min([self.hi + 1] + bounds)
        return range(self.lo, top)


@dataclass
class HomologyResult:
    s: int
    dims: Dict[int, int]
    representatives: Dict[int, List[RsElement]]
    upper_bound: bool = False


def _matrix(c: ComplexWindow, s: int, degree: int) -> SparseMatFp:
    cols = c.basis(s, degree)
    rows = c.bases[s - 1]
    entries = []
    for col, pair in enumerate(cols):
        for key, value in c.apply(s, {pair: 1}).items():
            if not rows.contains(degree, key):
                raise BasisMismatchError(
                    f"basis mismatch: d_{s} of {pair} has term {key} outside D_{s - 1} in degree {degree}",
                    witness={"s": s, "degree": degree, "term": str(key)},
                )
            entries.append((rows.index(degree, key), col, value))
    return SparseMatFp.from_entries(c.p, len(rows[degree]), len(cols), entries, rows[degree], cols)


def build_complex(M: ModuleWindow, s_max: int, hi: int, lo: Optional[int] = None,
                  check: bool = True) -> ComplexWindow:
    """
    Assemble D_0 M .. D_{s_max} M on [lo, hi].

    Args:
        M: Source module
        s_max: Highest homological degree built
        hi: Highest internal degree
        lo: Lowest internal degree; defaults to the lowest connectivity bound
        check: Verify d_{s-1} d_s = 0 degree by degree

    Returns:
        ComplexWindow holding the bases, matrices and validity windows
    """
    p = M.p
    if s_max > rank_cap(p):
        raise RankCapError(f"rank cap: s_max={s_max} above {rank_cap(p)} at p={p}",
                           witness={"s": s_max, "p": p})
    bottom = M.bottom()
    if lo is None:
        lo = min(min(connectivity_bound(p, s, bottom) for s in range(s_max + 1)), hi)
    sources = complex_sources(M, s_max)
    bases: Dict[int, GradedBasis] = {}
    valid_below: Dict[int, int] = {}
    for s, source in sources.items():
        shifted = rs_gamma_basis(source, s, lo - 1, hi - 1)
        bases[s] = GradedBasis({d + 1: cell for d, cell in shifted.items()})
        valid_below[s] = min(hi + 1, connectivity_bound(p, s, M.hi + 1)) if M.open_top else hi + 1
    c = ComplexWindow(M, s_max, lo, hi, sources, bases, valid_below=valid_below)
    for s in range(1, s_max + 1):
        for degree in range(lo, hi + 1):
            if c.dim(s, degree) and c.dim(s - 1, degree):
                c.differentials[(degree, s)] = _matrix(c, s, degree)
            if check and s >= 2 and (degree, s - 1) in c.differentials and (degree, s) in c.differentials:
                composite = c.differentials[(degree, s - 1)].compose(c.differentials[(degree, s)])
                if not composite.is_zero():
                    (r, col), v = min(composite.entries.items())
                    raise NotAComplexError(
                        f"not a complex: d_{s - 1} d_{s} != 0 in degree {degree}",
                        witness={"s": s, "degree": degree, "row": r, "col": col, "value": v},
                    )
        logger.debug(f"d_{s} on {M.name}: {sum(1 for d, t in c.differentials if t == s)} nonzero blocks")
    dims = {s: len(b) for s, b in bases.items()}
    logger.info(f"built D_*({M.name}) at p={p} on [{lo}, {hi}] with basis sizes {dims}")
    return c


def homology(c: ComplexWindow, s: int) -> HomologyResult:
    """H_s on the validity window; at s_max the result is only a kernel unless D_{s+1} is provably zero"""
    if s < 0 or s > c.s_max:
        raise ValueError(f"homology needs 0 <= s <= {c.s_max}, got {s}")
    exact = s < c.s_max or connectivity_bound(c.p, s + 1, c.module.bottom()) > c.hi
    dims: Dict[int, int] = {}
    reps: Dict[int, List[RsElement]] = {}
    for degree in c.valid_degrees(s):
        dim, vectors = homology_at(c.matrix(s + 1, degree), c.matrix(s, degree))
        dims[degree] = dim
        basis = c.basis(s, degree)
        reps[degree] = [{basis[i]: v for i, v in enumerate(vec) if v} for vec in vectors]
    if not exact:
        logger.warning(f"H_{s}({c.module.name}) is an upper bound: D_{s + 1} was not built")
    return HomologyResult(s, dims, reps, upper_bound=not exact)


def homology_rows(c: ComplexWindow, s_max: Optional[int] = None) -> List[HomologyRow]:
    """One row per (s, degree) in the validity window, zeros included"""
    rows = []
    top = c.s_max if s_max is None else min(s_max, c.s_max)
    for s in range(top + 1):
        h = homology(c, s)
        rows.extend(HomologyRow(s, d, dim, h.upper_bound) for d, dim in sorted(h.dims.items()))
    return rows


def matrix_dump(c: ComplexWindow) -> Dict[Tuple[int, int], SparseMatFp]:
    return dict(sorted(c.differentials.items()))


# --- checks -----------------------------------------------------------------


def connectivity_check(c: ComplexWindow) -> CheckResult:
    """D_s and H_s vanish strictly below 1 + p^s(|M| + s - 1)"""
    result = CheckResult("connectivity")
    bottom = c.module.bottom()
    for s in range(c.s_max + 1):
        bound = connectivity_bound(c.p, s, bottom)
        for degree, cell in c.bases[s].items():
            result.checked += 1
            if degree < bound:
                result.fail("connectivity", s, degree, bound=bound, dim=len(cell))
        for degree, dim in homology(c, s).dims.items():
            if dim and degree < bound:
                result.fail("connectivity", s, degree, bound=bound, homology=dim)
    return result


def _rank(p: int, images: List[Dict]) -> int:
    keys = sorted({k for v in images for k in v}, key=repr)
    if not keys:
        return 0
    index = {k: i for i, k in enumerate(keys)}
    entries = [(r, index[k], v) for r, image in enumerate(images) for k, v in image.items()]
    return rank_of(SparseMatFp.from_entries(p, len(images), len(keys), entries))


def _rho_targets(c: ComplexWindow, s: int, degree: int) -> int:
    """dim of Sigma^{-1} Phi D_{s-1}(Sigma M) in the given degree"""
    p = c.p
    N = c.sources[s]
    top = (degree + 1) // p + 1
    low = min(p ** (s - 1) * N.bottom(), N.bottom()) - 1
    count = 0
    for y_degree, cell in rs_gamma_basis(N, s - 1, low, top).items():
        if frobenius_degree(p, y_degree + 1) - 1 == degree:
            count += len(cell)
    return count


def _lambda_image(M: ModuleWindow, label: str) -> Optional[Dict[str, int]]:
    """lambda of Phi(Sigma m) read back in M, or None when it leaves an open window"""
    i, eps = divmod(M.degrees[label] + 1, 2)
    if i < 0:
        return {}
    if M.open_top and M.degrees[label] + 2 * i * (M.p - 1) + eps > M.hi:
        return None
    image = M.apply_power(i, {label: 1})
    return M.apply_beta(image) if eps else image


def connecting_map_check(c: ComplexWindow) -> CheckResult:
    """
    At s = 1 the connecting map Sigma^{-1} Phi D(Sigma M) -> Sigma^{-1} D(Sigma M)
    sends Phi(Sigma m) to (-1)^{|m|} lambda(Phi(Sigma m)).
    """
    result = CheckResult("connecting map")
    if c.s_max < 1:
        return result
    p, M, N = c.p, c.module, c.sources[1]
    for label in M.labels:
        m = M.degrees[label]
        l, odd = divmod(m, 2)
        if odd:
            lift = {(GammaMonomial((0,), (l,)), label): (-1) ** (l % 2) % p}
        else:
            lift = {(GammaMonomial((), (l,)), label): -(-1) ** (l % 2) % p}
        expected = _lambda_image(M, label)
        if expected is None:
            continue
        result.checked += 1
        if rho_1(N, lift) != {f"phi.{label}": 1}:
            result.fail("connecting map", 1, m + 1, label=label, reason="lift does not map to Phi(Sigma m)")
            continue
        image = {key[1]: v for key, v in c.apply(1, lift).items()}
        sign = -1 if m % 2 else 1
        expected = {k: (sign * v) % p for k, v in expected.items()}
        if image != expected:
            result.fail("connecting map", 1, m + 1, label=label, image=image, expected=expected)
    return result


def verify_ses(M: ModuleWindow, s_max: int, hi: int, lo: Optional[int] = None,
               samples: Optional[int] = None) -> CheckResult:
    """
    The short exact sequence of complexes
    0 -> Sigma^{-1} D(Sigma M) -> D M -> Sigma^{-1} Phi D_{*-1}(Sigma M) -> 0:
    degreewise dimensions, surjectivity of rho_s by rank, the squares
    rho_{s-1} d_s = Phi(d_{s-1}) rho_s up to the sign (-1)^{|y|} on the rho_s
    component y, and the connecting map at s = 1.

    d_1 anticommutes with beta, so d_s is R_{s-1} of the A-linear twist of d_1
    only up to (-1)^{degree}; naturality of rho_1 then leaves the fixed sign
    (-1)^{|y|} on each square.
    """
    p = M.p
    c = build_complex(M, s_max, hi, lo)
    result = CheckResult("ses")
    sigma = suspend(M, 1)
    for s in range(s_max + 1):
        N = c.sources[s]
        for degree in c.valid_degrees(s):
            lhs = c.dim(s, degree)
            kernel_part = rs_dims(suspend(N, 1), s, RsSign.PLUS, degree) if s else sigma.dim(degree + 1)
            quotient_part = _rho_targets(c, s, degree) if s else 0
            result.checked += 1
            if lhs != kernel_part + quotient_part:
                result.fail("dimension identity", s, degree, dim=lhs, sub=kernel_part, quotient=quotient_part)
            if s and quotient_part:
                images = [rho_s(N, s, {pair: 1}) for pair in c.basis(s, degree)]
                if _rank(p, images) != quotient_part:
                    result.fail("rho not onto", s, degree, rank=_rank(p, images), expected=quotient_part)
    squares: Dict[int, int] = {}
    for s in range(2, s_max + 1):
        source, target = c.sources[s], c.sources[s - 1]
        for degree in c.valid_degrees(s):
            cell = c.basis(s, degree)
            for pair in cell[:samples] if samples else cell:
                left = rho_s(target, s - 1, c.apply(s, {pair: 1}))
                twisted = {y: v * (-1) ** (rs_degree(source, y) % 2) for y, v in rho_s(source, s, {pair: 1}).items()}
                right = boundary(source, target, s - 1, twisted)
                if s == 2:
                    right = {f"phi.{key[1]}": v for key, v in right.items()}
                result.checked += 1
                right = {k: v % p for k, v in right.items() if v % p}
                if left:
                    squares[s] = squares.get(s, 0) + 1
                if left != right:
                    result.fail("square does not commute", s, degree, element=str(pair),
                                left=str(left), right=str(right))
    result.details["nonzero_squares"] = squares
    result.merge(connecting_map_check(c))
    return result


def verify_dickson_linearity(M: ModuleWindow, s: int, t: int, w: int, hi: int,
                             strict: bool = False) -> CheckResult:
    """
    d_s: R_s(Sigma^{-t} M) -> R_{s-1}(Sigma^{-t-1} M) against q = Q_{s,j}^{p^w}:
    d_s(q e) = phi_s(q) d_s(e), valid when p^w >= [(t+1)/2].
    """
    p = M.p
    result = CheckResult(f"linearity s={s} t={t} w={w}")
    if s < 1:
        raise ValueError("linearity needs s >= 1")
    if not is_unstable(M):
        raise ValueError(f"{M.name} is not unstable")
    u = (t + 1) // 2
    if p ** w < u:
        message = f"twist too small: p^{w} < {u}"
        if strict:
            raise TwistTooSmallError(message, witness={"s": s, "t": t, "w": w})
        logger.warning(f"{message}; linearity failures are informative")
        result.informative = True
    sources = complex_sources(suspend(M, -t - s + 1), s)
    source, target = sources[s], sources[s - 1]
    for degree, cell in rs_gamma_basis(source, s, source.bottom() * p ** s - 1, hi - 1).items():
        for omega, label in cell:
            base = boundary(source, target, s, {(omega, label): 1})
            for j in range(s):
                q = q_monomial(s, j, p ** w)
                moved, sign = mono_multiply(q, omega)
                left = boundary(source, target, s, {(moved, label): sign})
                right: RsElement = {}
                for g, coeff in phi_s_map(p, s, {q: 1}).items():
                    for (h, m), c2 in base.items():
                        prod_ = mono_multiply(g, h)
                        if prod_ is not None:
                            add_into(right, {(prod_[0], m): prod_[1]}, coeff * c2, p)
                result.checked += 1
                if left != right:
                    result.fail("twist too small" if result.informative else "linearity", s, degree + 1,
                                element=str((omega, label)), generator=j, left=str(left), right=str(right))
    return result


def kernel_characterization(M: ModuleWindow, s: int, hi: int) -> CheckResult:
    """
    On D_*(Sigma^{-s} M) with M unstable: d_{s+1} = 0, so H_s = ker d_s, and the
    copy of R_s M (pairs with 2 e_0 + |I| >= |m| in M) lies in that kernel.
    """
    if not is_unstable(M):
        raise ValueError(f"{M.name} is not unstable")
    p = M.p
    result = CheckResult(f"kernel s={s}")
    c = build_complex(suspend(M, -s), min(s + 1, rank_cap(p)), hi)
    if c.s_max > s:
        for (degree, t), m in c.differentials.items():
            if t == s + 1 and not m.is_zero():
                result.fail("incoming differential nonzero", s + 1, degree, entries=len(m.entries))
    h = homology(c, s)
    for degree in c.valid_degrees(s):
        d = c.matrix(s, degree)
        kernel = c.dim(s, degree) - rank_of(d)
        result.checked += 1
        if h.dims.get(degree) != kernel:
            result.fail("homology is not the kernel", s, degree, homology=h.dims.get(degree), kernel=kernel)
        embedded = [pair for pair in c.basis(s, degree)
                    if 2 * pair[0].exps[0] + len(pair[0].mask) >= c.sources[s].degrees[pair[1]] + 1]
        if s and len(embedded) != rs_dims(M, s, RsSign.PLUS, degree):
            result.fail("embedded copy has the wrong size", s, degree, found=len(embedded))
        for pair in embedded:
            if c.apply(s, {pair: 1}):
                result.fail("embedded class is not a cycle", s, degree, element=str(pair))
    return result


def vanishing_check(M: ModuleWindow, s_max: int, hi: int) -> CheckResult:
    """H_s(D_* M) = 0 for 1 <= s <= s_max on a free module M"""
    result = CheckResult(f"vanishing {M.name}")
    c = build_complex(M, min(s_max + 1, rank_cap(M.p)), hi)
    for s in range(1, s_max + 1):
        h = homology(c, s)
        if h.upper_bound:
            result.details[f"H_{s}"] = "upper bound only"
            continue
        for degree, dim in h.dims.items():
            result.checked += 1
            if dim:
                result.fail("homology of a free module", s, degree, dim=dim)
    return result


def unstable_identification_check(M: ModuleWindow, s: int, hi: int) -> CheckResult:
    """
    For M unstable, the differentials on either side of position s of
    D_*(Sigma^{1-s} M) vanish and H_s has the dimensions of Sigma R_s M.
    """
    if not is_unstable(M):
        raise ValueError(f"{M.name} is not unstable")
    result = CheckResult(f"unstable s={s}")
    c = build_complex(suspend(M, 1 - s), min(s + 1, rank_cap(M.p)), hi)
    for (degree, t), m in c.differentials.items():
        if t in (s, s + 1) and not m.is_zero():
            result.fail("adjacent differential nonzero", t, degree, entries=len(m.entries))
    h = homology(c, s)
    for degree, dim in h.dims.items():
        expected = rs_dims(M, s, RsSign.PLUS, degree - 1)
        result.checked += 1
        if dim != expected:
            result.fail("homology differs from Sigma R_s M", s, degree, dim=dim, expected=expected)
    return result
