import pytest

from alcs.envs import parse_task

TINY = """
name: Tiny
step_cap: 50
vocabulary: [c, o]
legend: {c: c, o: o}
rule: {kind: precedence, final: o, requires: {o: [c]}}
grid: |
  S.c
  ...
  o..
"""

# 4x4 open room with one subtask in a corner.
SINGLE = """
name: Single
step_cap: 100
vocabulary: [g]
legend: {g: g}
rule: {kind: precedence, final: g}
grid: |
  S...
  ....
  ....
  ...g
"""


@pytest.fixture
def tiny_spec():
    return parse_task(TINY)


@pytest.fixture
def single_spec():
    return parse_task(SINGLE)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
