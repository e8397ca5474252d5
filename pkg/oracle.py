"""
Derived Destabilization Oracle

Computes the derived functors of destabilization by their definition: a
minimal free resolution of M over the Steenrod algebra, destabilized term by
term, then homology. Used to cross-check the homology of the chain complex.

Features:
- free_resolution: minimal resolution F_length -> ... -> F_0 -> M through a degree window
- derived_destab: dims of H_s of the destabilized resolution
- compare: degreewise equality against the chain complex on the common window
- action_check: sampled Steenrod operations on homology representatives stay cycles
- resolution cache keyed by (module fingerprint, window, length), in memory and,
  when a cache directory is configured, as JSON files that outlive the process
"""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from chain_complex import build_complex, homology
from fpla import (
    CapExceededError, DestabError, NotAComplexError, SparseMatFp, WindowExhaustedError, homology_at, rank_of,
)
from rfunctor import act_on_rs
from run_logger import CheckResult
from run_model import cache_dir, degree_cap, rank_cap
from steenrod import FreeModuleWindow, ModuleWindow, Word, excess

logger = logging.getLogger(__name__)

_RESOLUTIONS: Dict[Tuple, "ResolutionWindow"] = {}


def module_fingerprint(M: ModuleWindow) -> str:
    """Stable digest of the degrees and action tables of M"""
    strip = lambda table: sorted((repr(k), sorted(v.items())) for k, v in table.items() if v)
    text = repr((M.p, M.lo, M.hi, M.open_top, sorted(M.degrees.items()), strip(M.beta), strip(M.powers)))
    return hashlib.sha1(text.encode()).hexdigest()


def clear_cache() -> None:
    """Forget resolutions held in memory; files in the cache directory stay"""
    _RESOLUTIONS.clear()


@dataclass
class ResolutionWindow:
    """
    Free resolution of M, exact in every degree of [lo, hi].

    generators[s] lists (name, degree) for F_s; images[s] maps each generator
    of F_s to its boundary, in M for s = 0 and in F_{s-1} otherwise.
    degrees[s] is generators[s] as a dict.
    """
    module: ModuleWindow
    length: int
    lo: int
    hi: int
    generators: List[List[Tuple[str, int]]] = field(default_factory=list)
    images: List[Dict[str, Dict]] = field(default_factory=list)
    degrees: List[Dict[str, int]] = field(default_factory=list)
    minimal: bool = True

    @property
    def p(self) -> int:
        return self.module.p

    def free(self, s: int) -> FreeModuleWindow:
        return FreeModuleWindow(self.p, self.hi, self.generators[s])

    def generator_degree(self, s: int, name: str) -> int:
        return self.degrees[s][name]

    def target_basis(self, s: int, degree: int) -> List:
        if s == 0:
            return list(self.module.basis[degree])
        return self.free(s - 1).basis(degree)

    def apply(self, s: int, word: Word, generator: str) -> Dict:
        """Boundary of word·generator in F_s"""
        image = self.images[s][generator]
        if s == 0:
            return self.module.apply_word(word, image)
        return self.free(s - 1).multiply(word, image)

    def matrix(self, s: int, degree: int) -> SparseMatFp:
        """d_s: F_s -> F_{s-1} (M for s = 0) in one degree"""
        return _matrix(self.p, self.free(s).basis(degree), self.target_basis(s, degree),
                       lambda pair: self.apply(s, *pair))

    def destab_basis(self, s: int, degree: int) -> List[Tuple[Word, str]]:
        """Basis of D(F_s): admissible words of excess at most the generator degree"""
        if s < 0 or s > self.length:
            return []
        return [(w, g) for w, g in self.free(s).basis(degree) if excess(self.p, w) <= self.degrees[s][g]]

    def destab_matrix(self, s: int, degree: int) -> SparseMatFp:
        """D(d_s): D(F_s) -> D(F_{s-1}) in one degree; zero with no rows at s = 0"""
        cols = self.destab_basis(s, degree)
        if s == 0:
            return SparseMatFp.zero(self.p, 0, len(cols), (), cols)
        rows = self.destab_basis(s - 1, degree)
        return _matrix(self.p, cols, rows, lambda pair: self.apply(s, *pair))

    def dims(self, s: int) -> Dict[int, int]:
        return {d: len(self.free(s).basis(d)) for d in range(self.lo, self.hi + 1)}


_CACHE_DIR: Optional[Path] = None


def set_cache_dir(path: Union[str, Path, None]) -> None:
    """Persist resolutions under path; None falls back to DESTAB_CACHE_DIR"""
    global _CACHE_DIR
    _CACHE_DIR = Path(path) if path is not None else None


def _cache_file(M: ModuleWindow, lo: int, hi: int, length: int) -> Optional[Path]:
    root = _CACHE_DIR if _CACHE_DIR is not None else cache_dir()
    if root is None:
        return None
    return Path(root) / f"{module_fingerprint(M)}-{lo}-{hi}-{length}.json"


def _encode_key(s: int, key):
    return key if s == 0 else [list(key[0]), key[1]]


def _decode_key(s: int, key):
    return key if s == 0 else (tuple(key[0]), key[1])


def _save_resolution(res: ResolutionWindow, path: Path) -> None:
    payload = {
        "generators": [[[name, degree] for name, degree in gens] for gens in res.generators],
        "images": [
            {name: [[_encode_key(s, k), int(v)] for k, v in image.items()] for name, image in res.images[s].items()}
            for s in range(res.length + 1)
        ],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(payload))
    os.replace(tmp, path)
    logger.debug(f"resolution written to {path}")


def _load_resolution(M: ModuleWindow, lo: int, hi: int, length: int, path: Path) -> Optional[ResolutionWindow]:
    if not path.is_file():
        return None
    try:
        payload = json.loads(path.read_text())
        generators = [[(name, int(degree)) for name, degree in gens] for gens in payload["generators"]]
        images = [
            {name: {_decode_key(s, k): int(v) for k, v in image} for name, image in payload["images"][s].items()}
            for s in range(length + 1)
        ]
    except (OSError, ValueError, KeyError, IndexError, TypeError) as e:
        logger.warning(f"ignoring unreadable cached resolution {path}: {e}")
        return None
    if len(generators) != length + 1:
        logger.warning(f"ignoring cached resolution {path}: expected {length + 1} terms, found {len(generators)}")
        return None
    degrees = [dict(gens) for gens in generators]
    logger.debug(f"resolution of {M.name} through {hi} loaded from {path}")
    return ResolutionWindow(M, length, lo, hi, generators, images, degrees)


def _matrix(p: int, cols: List, rows: List, image_of) -> SparseMatFp:
    """Columns are images of cols; terms outside rows are dropped (quotient maps)"""
    index = {key: i for i, key in enumerate(rows)}
    entries = []
    for c, pair in enumerate(cols):
        for key, v in image_of(pair).items():
            if key in index:
                entries.append((index[key], c, v))
    return SparseMatFp.from_entries(p, len(rows), len(cols), entries, rows, cols)


def free_resolution(M: ModuleWindow, length: int, hi: int, lo: Optional[int] = None) -> ResolutionWindow:
    """
    Minimal free resolution of M through degree hi.

    Generators are added degree by degree, lowest degree first; in each degree
    the new generators of F_s span a complement of the image of the existing
    ones inside the kernel of d_{s-1}.

    Args:
        M: Module to resolve
        length: Index of the last free module built
        hi: Highest internal degree
        lo: Lowest internal degree; defaults to the bottom of M

    Returns:
        ResolutionWindow exact through hi
    """
    p = M.p
    if hi > degree_cap(p):
        raise CapExceededError(f"cap exceeded: degree {hi} above {degree_cap(p)}", witness={"degree": hi})
    if M.open_top and hi > M.hi:
        raise WindowExhaustedError(
            f"window exhausted: {M.name} is only known through degree {M.hi}",
            first_unreliable=M.hi + 1,
        )
    if lo is None:
        lo = M.bottom()
    key = (p, module_fingerprint(M), lo, hi, length)
    if key in _RESOLUTIONS:
        logger.debug(f"resolution of {M.name} through {hi} served from cache")
        return _RESOLUTIONS[key]
    path = _cache_file(M, lo, hi, length)
    cached = _load_resolution(M, lo, hi, length, path) if path is not None else None
    if cached is not None:
        _RESOLUTIONS[key] = cached
        return cached

    res = ResolutionWindow(M, length, lo, hi,
                           [[] for _ in range(length + 1)],
                           [{} for _ in range(length + 1)], [{} for _ in range(length + 1)])
    for degree in range(lo, hi + 1):
        for s in range(length + 1):
            current = res.matrix(s, degree)
            if s == 0:
                outgoing = SparseMatFp.zero(p, 0, M.dim(degree))
            else:
                outgoing = res.matrix(s - 1, degree)
            _, fresh = homology_at(current, outgoing)
            targets = res.target_basis(s, degree)
            for vector in fresh:
                name = f"g{s}_{len(res.generators[s])}"
                res.generators[s].append((name, degree))
                res.degrees[s][name] = degree
                res.images[s][name] = {targets[i]: v for i, v in enumerate(vector) if v}
            if fresh:
                logger.debug(f"F_{s} of {M.name}: {len(fresh)} generators in degree {degree}")
        _check_exact(res, degree)

    counts = [len(g) for g in res.generators]
    logger.info(f"resolved {M.name} at p={p} through degree {hi}: generators per F_s {counts}")
    _RESOLUTIONS[key] = res
    if path is not None:
        try:
            _save_resolution(res, path)
        except OSError as e:
            logger.warning(f"could not write resolution cache {path}: {e}")
    return res


def _check_exact(res: ResolutionWindow, degree: int) -> None:
    """rank d_0 = dim M and rank d_s + rank d_{s+1} = dim F_s below the last term"""
    ranks = [rank_of(res.matrix(s, degree)) for s in range(res.length + 1)]
    if ranks[0] != res.module.dim(degree):
        raise NotAComplexError(f"not a complex: F_0 does not cover {res.module.name} in degree {degree}",
                               witness={"degree": degree, "rank": ranks[0]})
    for s in range(res.length):
        dim = len(res.free(s).basis(degree))
        if ranks[s] + ranks[s + 1] != dim:
            raise NotAComplexError(
                f"not a complex: resolution not exact at F_{s} in degree {degree}",
                witness={"s": s, "degree": degree, "rank_out": ranks[s], "rank_in": ranks[s + 1], "dim": dim},
            )


def derived_destab(M: ModuleWindow, s: int, hi: int, lo: Optional[int] = None,
                   resolution: Optional[ResolutionWindow] = None) -> Dict[int, int]:
    """Dimensions of D_s M = H_s(D(F_*)) in each degree of the window"""
    if s < 0:
        raise ValueError(f"derived functors need s >= 0, got {s}")
    res = resolution or free_resolution(M, s + 1, hi, lo)
    if res.length < s + 1:
        raise WindowExhaustedError(f"window exhausted: resolution of length {res.length} cannot give D_{s}",
                                   witness={"s": s})
    dims = {}
    for degree in range(res.lo, min(hi, res.hi) + 1):
        dim, _ = homology_at(res.destab_matrix(s + 1, degree), res.destab_matrix(s, degree))
        dims[degree] = dim
    return dims


def oracle_table(M: ModuleWindow, s_max: int, hi: int, lo: Optional[int] = None) -> Dict[int, Dict[int, int]]:
    """D_s M dims for s = 0..s_max from a single resolution"""
    res = free_resolution(M, s_max + 1, hi, lo)
    return {s: derived_destab(M, s, hi, resolution=res) for s in range(s_max + 1)}


def compare(M: ModuleWindow, s_max: int, hi: int) -> CheckResult:
    """
    Chain complex homology against the oracle on their common window

    Args:
        M: Module compared
        s_max: Highest homological degree compared
        hi: Highest internal degree

    Returns:
        CheckResult with one comparison per (s, degree); mismatches carry both tables
    """
    p = M.p
    result = CheckResult(f"oracle {M.name}")
    built = min(s_max + 1, rank_cap(p))
    c = build_complex(M, built, hi)
    top = hi if not M.open_top else min(hi, M.hi)
    table = oracle_table(M, s_max, top, lo=min(c.lo, M.bottom()))
    for s in range(s_max + 1):
        h = homology(c, s)
        if h.upper_bound:
            result.details[f"H_{s}"] = "upper bound only"
            continue
        common = [d for d in c.valid_degrees(s) if d in table[s]]
        result.details[f"window_{s}"] = [common[0], common[-1]] if common else []
        for degree in common:
            result.checked += 1
            if h.dims[degree] != table[s][degree]:
                result.fail("oracle mismatch", s, degree, complex=h.dims[degree], oracle=table[s][degree],
                            complex_table=h.dims, oracle_table=table[s])
    logger.info(f"oracle comparison for {M.name}: {result.checked} degrees, {len(result.failures)} mismatches")
    return result


def action_check(M: ModuleWindow, s_max: int, hi: int, samples: int) -> CheckResult:
    """
    beta and P^1 applied to sampled cycle representatives of H_s(D_* M) give cycles.

    The result is informative: it reports on the action without failing a run.

    Args:
        M: Module
        s_max: Highest homological degree sampled
        hi: Highest internal degree
        samples: Number of representatives tried per s

    Returns:
        CheckResult with one comparison per (representative, operation)
    """
    result = CheckResult(f"action {M.name}", informative=True)
    c = build_complex(M, min(s_max, rank_cap(M.p)), hi)
    ops = [("beta",), ("P", 1)]
    for s in range(1, c.s_max + 1):
        reps = [(d, z) for d, zs in sorted(homology(c, s).representatives.items()) for z in zs][:samples]
        for (degree, z), op in product(reps, ops):
            result.checked += 1
            try:
                image = act_on_rs(c.sources[s], s, z, op)
                if c.apply(s, image):
                    result.fail("action does not preserve cycles", s, degree, op=op, element=str(sorted(z.items())))
            except DestabError as exc:
                result.fail(exc.reason, s, degree, op=op, message=str(exc))
    logger.info(f"action samples on {M.name}: {result.checked} tried, {len(result.failures)} off")
    return result
