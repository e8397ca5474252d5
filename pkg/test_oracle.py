import pytest

from fpla import CapExceededError, WindowExhaustedError, rank_of
from oracle import (
    action_check, clear_cache, compare, derived_destab, free_resolution, module_fingerprint, oracle_table,
    set_cache_dir,
)
from rfunctor import rs_dims
from run_model import CACHE_DIR_ENV, RsSign
from steenrod import direct_sum, free_module, sphere, suspend, unstable_free_dims


@pytest.fixture(autouse=True)
def fresh_cache(monkeypatch):
    monkeypatch.delenv(CACHE_DIR_ENV, raising=False)
    set_cache_dir(None)
    clear_cache()
    yield
    set_cache_dir(None)
    clear_cache()


class TestResolution:
    def test_free_module_is_its_own_resolution(self):
        M = free_module(3, 2, 20)
        res = free_resolution(M, 1, 20)
        assert [n for _, n in res.generators[0]] == [2]
        assert res.generators[1] == []

    def test_sphere_syzygies_are_indecomposables(self):
        res = free_resolution(sphere(3, 0), 1, 20)
        assert [n for _, n in res.generators[0]] == [0]
        assert [n for _, n in res.generators[1]] == [1, 4, 12]

    def test_exact(self):
        res = free_resolution(sphere(3, -1), 2, 16)
        for d in range(res.lo, res.hi + 1):
            assert res.matrix(0, d).compose(res.matrix(1, d)).is_zero()
            assert rank_of(res.matrix(1, d)) + rank_of(res.matrix(2, d)) == len(res.free(1).basis(d))

    def test_cached(self):
        M = sphere(3, 0)
        assert free_resolution(M, 1, 12) is free_resolution(sphere(3, 0), 1, 12)
        assert module_fingerprint(M) != module_fingerprint(sphere(3, 1))

    def test_persisted_between_runs(self, tmp_path, monkeypatch):
        monkeypatch.setenv(CACHE_DIR_ENV, str(tmp_path))
        M = sphere(3, -1)
        first = free_resolution(M, 2, 16)
        files = list(tmp_path.glob("*.json"))
        assert [f.name for f in files] == [f"{module_fingerprint(M)}-{first.lo}-16-2.json"]

        clear_cache()
        second = free_resolution(sphere(3, -1), 2, 16)
        assert second is not first
        assert second.generators == first.generators
        assert second.images == first.images
        assert second.degrees == first.degrees
        clear_cache()
        assert derived_destab(M, 1, 16) == derived_destab(M, 1, 16, resolution=first)

    def test_explicit_cache_dir(self, tmp_path):
        set_cache_dir(tmp_path / "resolutions")
        free_resolution(sphere(3, 0), 1, 12)
        assert len(list((tmp_path / "resolutions").glob("*.json"))) == 1

    def test_unreadable_cache_is_rebuilt(self, tmp_path, caplog):
        set_cache_dir(tmp_path)
        M = sphere(3, 0)
        expected = free_resolution(M, 1, 12)
        path = next(tmp_path.glob("*.json"))
        path.write_text("{not json")
        clear_cache()
        with caplog.at_level("WARNING"):
            rebuilt = free_resolution(M, 1, 12)
        assert "unreadable cached resolution" in caplog.text
        assert rebuilt.generators == expected.generators

    def test_no_files_without_cache_dir(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        free_resolution(sphere(3, 0), 1, 12)
        assert list(tmp_path.iterdir()) == []

    def test_open_window_exhausted(self):
        with pytest.raises(WindowExhaustedError) as info:
            free_resolution(free_module(3, 0, 10), 1, 20)
        assert info.value.first_unreliable == 11

    def test_degree_cap(self):
        with pytest.raises(CapExceededError):
            free_resolution(sphere(3, 0), 1, 500)


class TestDerivedDestab:
    def test_rank_zero_of_free_module(self):
        dims = derived_destab(free_module(3, 2, 24), 0, 24)
        assert dims == {d: unstable_free_dims(3, 2, d) for d in range(2, 25)}

    def test_free_modules_have_no_derived_functors(self):
        assert not any(derived_destab(free_module(3, 1, 24), 1, 24).values())

    def test_rank_zero_of_sphere(self):
        dims = derived_destab(sphere(3, 0), 0, 12)
        assert dims[0] == 1
        assert not any(v for d, v in dims.items() if d)

    def test_first_derived_of_sphere(self):
        dims = derived_destab(sphere(3, 0), 1, 20)
        for d in range(0, 21):
            assert dims[d] == rs_dims(sphere(3, 0), 1, RsSign.PLUS, d - 1)

    def test_additive(self):
        a, b = sphere(3, 0), sphere(3, 1)
        total = oracle_table(direct_sum(a, b), 1, 16)
        first, second = oracle_table(a, 1, 16), oracle_table(b, 1, 16)
        for s in (0, 1):
            for d in range(0, 17):
                assert total[s][d] == first[s].get(d, 0) + second[s].get(d, 0)

    def test_negative_rank(self):
        with pytest.raises(ValueError):
            derived_destab(sphere(3, 0), -1, 10)


class TestCompare:
    @pytest.mark.parametrize("M", [sphere(3, 0), sphere(3, -1), suspend(sphere(3, 0), -2)])
    def test_agrees_with_complex(self, M):
        result = compare(M, 1, 20)
        assert result.passed, result.failures[:3]
        assert result.checked > 0

    @pytest.mark.slow
    def test_agrees_at_rank_two(self):
        result = compare(sphere(3, -1), 2, 30)
        assert result.passed, result.failures[:3]


class TestActionCheck:
    def test_samples_are_informative(self):
        result = action_check(sphere(3, -1), 1, 20, 3)
        assert result.informative
        assert 0 < result.checked <= 6

    def test_no_samples(self):
        assert action_check(sphere(3, 0), 1, 12, 0).checked == 0
