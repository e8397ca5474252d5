"""
Module File Parser

Reads and writes finite modules over the Steenrod algebra in the line-oriented
text format, and resolves built-in module specs.

Format:
    prime: 3
    window: 0 8
    generator: a 0
    generator: b 1
    beta a = b
    P 1 b = 0
    suspend: -1

Features:
- parse_module_file with line-numbered errors and degree / window validation
- Adem spot checks (beta^2 = 0 and the two-letter Adem relations) on the declared actions
- dump_module, the inverse of parse_module_file
- built-in specs sphere(t), free(n), bv1(N), joined with +
"""

import logging
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from fpla import ModuleParseError, PrimeMismatchError, RelationViolationError, check_prime
from steenrod import Element, ModuleWindow, adem_reduce, bv1, direct_sum, free_module, sphere, suspend

logger = logging.getLogger(__name__)

_TERM = re.compile(r"^(?:(-?\d+)\s*\*\s*)?([^\s*+]+)$")
_BUILTIN = re.compile(r"^(sphere|free|bv1)\((-?\d+)\)$")


def _parse_lincomb(text: str, p: int, line: int) -> Element:
    text = text.strip()
    if text == "0":
        return {}
    out: Element = {}
    for term in text.split("+"):
        match = _TERM.match(term.strip())
        if not match:
            raise ModuleParseError(f"bad term {term.strip()!r}", line)
        coeff = int(match.group(1)) if match.group(1) else 1
        name = match.group(2)
        out[name] = (out.get(name, 0) + coeff) % p
    return {k: v for k, v in out.items() if v}


def parse_module_file(text: str, p: Optional[int] = None, name: str = "M") -> ModuleWindow:
    """
    Parse a module file

    Args:
        text: File contents
        p: Prime expected by the caller; the file's prime line must agree when both are given
        name: Name given to the module

    Returns:
        The module, suspended by the file's suspend line if any
    """
    prime: Optional[int] = None
    window: Optional[Tuple[int, int]] = None
    shift = 0
    open_top = False
    degrees: Dict[str, int] = {}
    order: List[str] = []
    actions: List[Tuple[int, str, Optional[int], str, str]] = []

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if line.startswith("prime:"):
                prime = check_prime(int(line.split(":", 1)[1]))
            elif line.startswith("window:"):
                lo, hi = (int(x) for x in line.split(":", 1)[1].split())
                if lo > hi:
                    raise ModuleParseError(f"empty window [{lo}, {hi}]", number)
                window = (lo, hi)
            elif line.startswith("generator:"):
                label, degree = line.split(":", 1)[1].split()
                if label in degrees:
                    raise ModuleParseError(f"duplicate generator {label!r}", number)
                degrees[label] = int(degree)
                order.append(label)
            elif line.startswith("suspend:"):
                shift = int(line.split(":", 1)[1])
            elif line.startswith("open:"):
                open_top = line.split(":", 1)[1].strip().lower() in ("true", "yes", "1")
            elif line.startswith("beta ") or line.startswith("P "):
                lhs, rhs = line.split("=", 1)
                head = lhs.split()
                if head[0] == "beta" and len(head) == 2:
                    actions.append((number, "beta", None, head[1], rhs))
                elif head[0] == "P" and len(head) == 3:
                    actions.append((number, "P", int(head[1]), head[2], rhs))
                else:
                    raise ModuleParseError(f"bad action {lhs.strip()!r}", number)
            else:
                raise ModuleParseError(f"unrecognized line {line!r}", number)
        except ValueError as exc:
            if isinstance(exc, ModuleParseError):
                raise
            raise ModuleParseError(str(exc), number) from exc

    if prime is None:
        if p is None:
            raise ModuleParseError("missing prime line")
        prime = p
    elif p is not None and p != prime:
        raise PrimeMismatchError(f"prime mismatch: file has p={prime}, run has p={p}",
                                 witness={"file": prime, "run": p})
    if window is None:
        window = (min(degrees.values(), default=0), max(degrees.values(), default=0))
    lo, hi = window
    for label, degree in degrees.items():
        if not lo <= degree <= hi:
            raise ModuleParseError(f"generator {label!r} in degree {degree} outside window [{lo}, {hi}]")

    beta: Dict[str, Element] = {}
    powers: Dict[Tuple[int, str], Element] = {}
    for number, kind, i, label, rhs in actions:
        if label not in degrees:
            raise ModuleParseError(f"unknown generator {label!r}", number)
        if kind == "P" and i < 1:
            raise ModuleParseError(f"reduced power P^{i} must have i >= 1", number)
        target = degrees[label] + (1 if kind == "beta" else 2 * i * (prime - 1))
        image = _parse_lincomb(rhs, prime, number)
        for term in image:
            if term not in degrees:
                raise ModuleParseError(f"unknown generator {term!r}", number)
            if degrees[term] != target:
                raise ModuleParseError(
                    f"{kind} on {label!r} lands in degree {target}, but {term!r} has degree {degrees[term]}", number)
        if kind == "beta":
            beta[label] = image
        else:
            powers[(i, label)] = image

    M = ModuleWindow(prime, lo, hi, degrees, beta, powers, open_top=open_top, name=name, order=order)
    check_relations(M)
    logger.debug(f"parsed {name}: {len(degrees)} generators on [{lo}, {hi}] at p={prime}")
    return suspend(M, shift) if shift else M


def check_relations(M: ModuleWindow) -> None:
    """beta^2 = 0 and every two-letter Adem relation P^a beta^e P^b (a < pb + e) on each class"""
    p = M.p
    for label in M.labels:
        x = {label: 1}
        room = M.hi - M.degrees[label]
        if room >= 2 and M.apply_beta(M.apply_beta(x)):
            raise RelationViolationError(f"relation violation: beta^2 {label} != 0",
                                         witness={"label": label, "relation": "beta^2"})
        for b in range(1, room // (2 * (p - 1)) + 1):
            for eps in (0, 1):
                for a in range(1, p * b + eps):
                    word = (0, a, eps, b, 0)
                    if 2 * (a + b) * (p - 1) + eps > room:
                        break
                    direct = M.apply_word(word, x)
                    reduced: Element = {}
                    for w, c in adem_reduce(p, word).items():
                        for k, v in M.apply_word(w, x).items():
                            reduced[k] = (reduced.get(k, 0) + c * v) % p
                    reduced = {k: v for k, v in reduced.items() if v}
                    if direct != reduced:
                        raise RelationViolationError(
                            f"relation violation: Adem relation for P^{a} beta^{eps} P^{b} fails on {label}",
                            witness={"label": label, "a": a, "eps": eps, "b": b,
                                     "direct": direct, "reduced": reduced},
                        )


def _format_lincomb(image: Element) -> str:
    if not image:
        return "0"
    return " + ".join(f"{c}*{label}" for label, c in image.items())


def dump_module(M: ModuleWindow) -> str:
    """Text form of M; parse_module_file(dump_module(M)) == M"""
    lines = [f"prime: {M.p}", f"window: {M.lo} {M.hi}"]
    if M.open_top:
        lines.append("open: true")
    lines += [f"generator: {label} {M.degrees[label]}" for label in M.labels]
    for label in M.labels:
        if M.beta.get(label):
            lines.append(f"beta {label} = {_format_lincomb(M.beta[label])}")
    for (i, label), image in sorted(M.powers.items(), key=lambda kv: (M.degrees[kv[0][1]], kv[0][1], kv[0][0])):
        if image:
            lines.append(f"P {i} {label} = {_format_lincomb(image)}")
    return "\n".join(lines) + "\n"


def resolve_builtin(spec: str, p: int, hi: int) -> ModuleWindow:
    """sphere(t), free(n) through degree hi, bv1(N), or a sum of these joined with +"""
    parts = [part.strip() for part in spec.split("+")]
    modules = []
    for part in parts:
        match = _BUILTIN.match(part)
        if not match:
            raise ModuleParseError(f"unknown built-in module {part!r}")
        kind, n = match.group(1), int(match.group(2))
        if kind == "sphere":
            modules.append(sphere(p, n))
        elif kind == "free":
            modules.append(free_module(p, n, hi))
        else:
            if n < 0:
                raise ModuleParseError(f"bv1 needs a nonnegative top degree, got {n}")
            modules.append(bv1(p, n))
    return modules[0] if len(modules) == 1 else direct_sum(*modules)


def load_module(source: str, p: int, hi: int) -> ModuleWindow:
    """Module from a file path or a built-in spec"""
    path = Path(source)
    if path.is_file():
        logger.info(f"loading module file {path}")
        return parse_module_file(path.read_text(), p, name=path.stem)
    return resolve_builtin(source, p, hi)
