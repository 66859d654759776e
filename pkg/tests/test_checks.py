import io
import time

import pytest

from stiefelqn import checks, cli, stiefel


def test_names_unique_and_levels_valid():
    assert len(checks.REGISTRY) >= 30
    for c in checks.REGISTRY.values():
        assert set(c.levels) <= set(checks.LEVELS)
    assert "proj idempotent" in checks.REGISTRY


def test_fast_suite_passes_quickly():
    buf = io.StringIO()
    t0 = time.perf_counter()
    code = cli.cmd_check("fast", out=buf)
    elapsed = time.perf_counter() - t0
    assert code == 0, buf.getvalue()
    assert elapsed < 60


@pytest.fixture
def sign_error_in_projection(monkeypatch):
    """Mutation fixture: flip the sign of the normal component."""
    def broken(X, Z):
        return Z + X @ stiefel.sym(X.T @ Z)
    monkeypatch.setattr(stiefel, "proj_tangent", broken)


def test_mutation_is_named(sign_error_in_projection):
    buf = io.StringIO()
    code = cli.cmd_check("fast", only=["proj idempotent", "proj tangent"], out=buf)
    assert code != 0
    assert "FAIL proj idempotent" in buf.getvalue()


def test_unknown_check_name():
    with pytest.raises(KeyError):
        checks.run_checks("fast", names=["no such check"])
    assert cli.main(["check", "--only", "no such check"]) == 1


def test_crash_reported_as_failure(monkeypatch):
    def boom(level):
        raise RuntimeError("exploded")
    monkeypatch.setitem(checks.REGISTRY, "tmp boom", checks.Check("tmp boom", boom, checks.LEVELS))
    res = checks.run_checks("fast", names=["tmp boom"])
    assert not res[0].ok and "exploded" in res[0].detail
