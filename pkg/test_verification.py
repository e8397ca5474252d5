import pytest

from fpla import NotAComplexError, WindowExhaustedError
from run_logger import CheckResult
from run_model import SuiteType
from verification import SUITES, _guard, run_suites, suite_invariants, suite_steenrod


class TestGuard:
    def test_merges_result(self):
        result = CheckResult("outer")
        inner = CheckResult("inner", checked=4)
        _guard(result, lambda: inner)
        assert result.passed and result.checked == 4

    def test_error_becomes_failure(self):
        def broken():
            raise NotAComplexError("not a complex: d_1 d_2 != 0", witness={"degree": 7})

        result = CheckResult("outer")
        _guard(result, broken)
        assert not result.passed
        assert result.failures[0].reason == "not a complex"
        assert result.failures[0].degree == 7
        assert result.failures[0].check == "broken"

    def test_window_exhausted_propagates(self):
        def exhausted():
            raise WindowExhaustedError("window exhausted", first_unreliable=11)

        with pytest.raises(WindowExhaustedError):
            _guard(CheckResult("outer"), exhausted)


class TestSuites:
    def test_every_suite_registered(self):
        assert set(SUITES) == set(SuiteType) - {SuiteType.ALL}

    def test_invariants_at_five(self):
        result = suite_invariants(5)
        assert result.passed, result.failures[:3]
        assert result.checked > 0

    @pytest.mark.slow
    def test_invariants_at_three(self):
        result = suite_invariants(3)
        assert result.passed, result.failures[:3]

    def test_steenrod(self):
        result = suite_steenrod(3, hi=16)
        assert result.passed, result.failures[:3]

    def test_run_single_suite(self):
        results = run_suites(SuiteType.STEENROD, 3, 12)
        assert [r.name for r in results] == ["steenrod"]

    def test_linearity_skipped_above_rank_cap(self):
        (result,) = run_suites(SuiteType.LINEARITY, 7)
        assert result.passed
        assert "skipped" in result.details

    @pytest.mark.slow
    def test_all_at_three(self):
        results = run_suites(SuiteType.ALL, 3)
        assert [r.name for r in results] == [s.value for s in SUITES]
        assert all(r.passed for r in results), [r.failures[:2] for r in results if not r.passed]
