"""Shared pytest plumbing: the acceptance-criteria result banner.

The acceptance tests register one (number, name, passed) entry each; after
the run a summary section prints one PASS/FAIL line per criterion so the
result survives pytest's output capture.
"""

import pytest

_ACCEPTANCE_RESULTS: list[tuple[int, str, bool]] = []


@pytest.fixture(scope="session")
def acceptance_registry() -> list[tuple[int, str, bool]]:
    return _ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed in sorted(_ACCEPTANCE_RESULTS):
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"CRITERION {number} ({name}): {verdict}")
