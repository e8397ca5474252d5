import pytest

from fpla import ModuleParseError, PrimeMismatchError, RelationViolationError
from module_parser import check_relations, dump_module, load_module, parse_module_file, resolve_builtin
from steenrod import admissible_basis, bv1, direct_sum, free_module, sphere, suspend

TWO_CELL = """
# Sigma^{-1} of the mod 3 Moore spectrum cohomology
prime: 3
window: 0 1
generator: a 0
generator: b 1
beta a = b
beta b = 0
suspend: -1
"""


class TestParse:
    def test_two_cell(self):
        M = parse_module_file(TWO_CELL)
        assert M.p == 3
        assert M.degrees == {"a": -1, "b": 0}
        assert M.apply_beta({"a": 1}) == {"b": 1}

    def test_coefficients(self):
        text = "prime: 5\ngenerator: x 0\ngenerator: y 8\ngenerator: z 8\nP 1 x = 2*y + -1*z\n"
        M = parse_module_file(text)
        assert M.apply_power(1, {"x": 1}) == {"y": 2, "z": 4}

    def test_default_window(self):
        M = parse_module_file("prime: 3\ngenerator: x 2\ngenerator: y 6\nP 1 x = y\n")
        assert (M.lo, M.hi) == (2, 6)

    def test_prime_from_caller(self):
        assert parse_module_file("generator: x 0\n", p=5).p == 5
        with pytest.raises(PrimeMismatchError):
            parse_module_file("prime: 3\ngenerator: x 0\n", p=5)

    @pytest.mark.parametrize("text,line", [
        ("prime: 3\ngenerator: x 0\nfoo\n", 3),
        ("prime: 3\ngenerator: x 0\ngenerator: x 1\n", 3),
        ("prime: 3\ngenerator: x 0\nbeta x = y\n", 3),
        ("prime: 4\n", 1),
        ("prime: 3\ngenerator: x 0\ngenerator: y 2\nbeta x = y\n", 4),
        ("prime: 3\ngenerator: x 0\nP 0 x = 0\n", 3),
        ("prime: 3\ngenerator: x 0\nbeta x = 2**y\n", 3),
    ])
    def test_errors_carry_line_numbers(self, text, line):
        with pytest.raises(ModuleParseError) as info:
            parse_module_file(text)
        assert info.value.line == line
        assert info.value.witness == {"line": line}

    def test_outside_window(self):
        with pytest.raises(ModuleParseError):
            parse_module_file("prime: 3\nwindow: 0 4\ngenerator: x 6\n")

    def test_beta_squared(self):
        text = "prime: 3\ngenerator: x 0\ngenerator: y 1\ngenerator: z 2\nbeta x = y\nbeta y = z\n"
        with pytest.raises(RelationViolationError):
            parse_module_file(text)

    def test_adem_relation(self):
        # P^1 P^1 = 2 P^2 at p = 3
        text = ("prime: 3\ngenerator: x 0\ngenerator: y 4\ngenerator: z 8\n"
                "P 1 x = y\nP 1 y = z\nP 2 x = 0\n")
        with pytest.raises(RelationViolationError) as info:
            parse_module_file(text)
        assert info.value.witness["a"] == 1
        fixed = text.replace("P 2 x = 0", "P 2 x = 2*z")
        assert parse_module_file(fixed).apply_power(2, {"x": 1}) == {"z": 2}

    def test_open_window_top_classes(self):
        text = "prime: 3\nwindow: 0 5\nopen: true\ngenerator: x 4\ngenerator: y 5\nbeta x = y\n"
        M = parse_module_file(text)
        assert M.open_top
        assert M.apply_beta({"x": 1}) == {"y": 1}

    @pytest.mark.parametrize("hi", [4, 12, 13])
    def test_relations_on_free_module(self, hi):
        check_relations(free_module(3, 0, hi))


class TestDump:
    @pytest.mark.parametrize("M", [
        sphere(3, -2),
        bv1(3, 14),
        bv1(5, 20),
        direct_sum(sphere(3, 0), suspend(sphere(3, 0), 1)),
        free_module(3, 0, 13),
    ])
    def test_round_trip(self, M):
        assert parse_module_file(dump_module(M)) == M

    def test_parsed_round_trip(self):
        M = parse_module_file(TWO_CELL)
        assert parse_module_file(dump_module(M)) == M

    def test_deterministic(self):
        assert dump_module(bv1(3, 12)) == dump_module(bv1(3, 12))


class TestBuiltins:
    def test_sphere(self):
        M = resolve_builtin("sphere(0)", 3, 20)
        assert M.degrees == {"x": 0}

    def test_free(self):
        M = resolve_builtin("free(0)", 3, 20)
        assert [M.dim(d) for d in range(21)] == [len(admissible_basis(3, d)) for d in range(21)]

    def test_sum(self):
        M = resolve_builtin("sphere(0) + sphere(1)", 3, 20)
        assert sorted(M.degrees.values()) == [0, 1]

    def test_unknown(self):
        with pytest.raises(ModuleParseError):
            resolve_builtin("torus(2)", 3, 20)

    def test_load_file(self, tmp_path):
        path = tmp_path / "moore.mod"
        path.write_text(TWO_CELL)
        M = load_module(str(path), 3, 20)
        assert M.name == "moore"
        assert M.bottom() == -1
        assert load_module("bv1(6)", 3, 20) == bv1(3, 6)
