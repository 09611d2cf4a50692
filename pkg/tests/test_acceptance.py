"""The ten acceptance checks at their stated tolerances, one printed line each.

The long runs (trend, decay, contrast) take about half an hour together on one
core. The sandwich check runs last so it inspects every run made before it.
"""

import pytest

from nullwave.verify import KEYS, Context, run_check


@pytest.fixture(scope="module")
def ctx():
    return Context()


@pytest.mark.parametrize("key", KEYS)
def test_acceptance(key, ctx, capsys):
    result = run_check(key, ctx)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
