"""All eleven acceptance criteria at their stated tolerances.

Each test prints one ``[PASS]``/``[FAIL]`` line; failures also print the
offending values. Criterion 8 runs the full oracle grid and takes minutes.
"""

import pytest

from gqr.acceptance import CRITERIA

RESULTS = {}


def _run(number):
    fn = CRITERIA[number]
    return fn("full") if number == 8 else fn()


@pytest.mark.parametrize("number", [n for n in CRITERIA if n != 8])
def test_criterion(number, capsys):
    res = _run(number)
    RESULTS[number] = res
    with capsys.disabled():
        print("\n" + res.line())
        for line in res.detail:
            print("    " + line)
    assert res.passed, "\n".join(res.detail)


@pytest.mark.slow
def test_criterion_8_oracle_grid(capsys):
    res = _run(8)
    RESULTS[8] = res
    with capsys.disabled():
        print("\n" + res.line())
        for line in res.detail:
            print("    " + line)
    assert res.passed, "\n".join(res.detail)
