"""Release gate: every validation criterion at its pinned tolerance, one
pass/fail line per criterion."""

import pytest

from dsopt.validate import CHECKS, run_check


@pytest.mark.parametrize("name,budget", [(n, b) for n, b, _ in CHECKS])
def test_criterion(name, budget, capsys):
    result = run_check(name)
    verdict = "PASS" if result.ok else "FAIL"
    with capsys.disabled():
        print(f"\n{verdict} {name} [{result.runtime_s:.2f}s < {budget:.0f}s] "
              f"{result.details}")
    assert result.passed, f"{name}: {result.details}"
    assert result.runtime_s < budget, (
        f"{name} took {result.runtime_s:.2f}s, budget {budget}s"
    )
