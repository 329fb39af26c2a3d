"""Desk-scale acceptance criteria, one test per criterion at its stated tolerance."""
import json

import pytest

from nseb.acceptance import CRITERIA


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    r = CRITERIA[number]()
    with capsys.disabled():
        print("\n" + r.line())
        print("    " + json.dumps(r.detail, default=str))
    assert r.passed, r.note
