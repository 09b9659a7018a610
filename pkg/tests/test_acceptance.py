"""One test per acceptance criterion; each prints its pass/fail line."""

import pytest

from digitflux.acceptance import CRITERIA, run_criteria


@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"{c[0]:02d}-{c[1].replace(' ', '-')}" for c in CRITERIA])
def test_criterion(number):
    (result,) = run_criteria([number])
    print(result.line())
    assert not result.skipped
    assert result.passed, result.detail
