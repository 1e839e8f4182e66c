"""Suite-wide hooks: no outbound network, and the acceptance verdict summary."""

import socket
import time

import pytest

SUITE_TIME_LIMIT = 300.0
CRITERIA = range(1, 10)

# criterion number -> (passed, detail); filled in by test_acceptance.
VERDICTS: dict[int, tuple[bool, str]] = {}
_started = [0.0]


def pytest_sessionstart(session):
    _started[0] = time.monotonic()


@pytest.fixture(autouse=True, scope="session")
def _no_network():
    real_connect = socket.socket.connect

    def guarded(self, address):
        if self.family in (socket.AF_INET, socket.AF_INET6):
            raise OSError(f"network access disabled in tests (tried {address})")
        return real_connect(self, address)

    socket.socket.connect = guarded
    yield
    socket.socket.connect = real_connect


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not VERDICTS:
        return
    elapsed = time.monotonic() - _started[0]
    if 9 in VERDICTS:
        ok, detail = VERDICTS[9]
        ok = ok and elapsed < SUITE_TIME_LIMIT
        VERDICTS[9] = (ok, f"{detail}; session wall time {elapsed:.1f} s (limit {SUITE_TIME_LIMIT:.0f} s)")
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        ok, detail = VERDICTS.get(n, (False, "not run or crashed before reaching a verdict"))
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_sessionfinish(session, exitstatus):
    if 9 in VERDICTS and time.monotonic() - _started[0] >= SUITE_TIME_LIMIT and session.exitstatus == 0:
        session.exitstatus = pytest.ExitCode.TESTS_FAILED
