"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import pytest

from tracer_token import acceptance


@pytest.mark.acceptance
@pytest.mark.parametrize("check", acceptance.CRITERIA, ids=[c.__name__ for c in acceptance.CRITERIA])
def test_criterion(check, capsys):
    outcome = check()
    with capsys.disabled():
        print("\n" + outcome.line())
    assert outcome.passed, outcome.detail
