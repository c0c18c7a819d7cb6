"""The ten acceptance criteria at their stated tolerances; each prints one pass/fail line."""

import pytest

from steinchi import acceptance


@pytest.mark.parametrize("criterion", acceptance.CRITERIA, ids=lambda c: f"criterion_{c.number:02d}")
def test_criterion(criterion, capsys):
    result = criterion()
    with capsys.disabled():
        print("\n" + result.line)
    assert result.passed, result.line
