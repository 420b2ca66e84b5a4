"""Test-suite wiring.

Provides the ``acceptance`` fixture used by ``test_acceptance.py`` to record
one visible PASS/FAIL/SKIP line per acceptance criterion, printed in the
terminal summary at the end of the run.
"""

from __future__ import annotations

import contextlib

import pytest

# criterion number -> (status, detail)
_RESULTS: dict[int, tuple[str, str]] = {}

CRITERIA = {
    1: "equation unit suite (exact arithmetic, 1e-9 relative)",
    2: "clean-signal oracle equivalence (60 s, 80 bpm)",
    3: "noise robustness (SNR 10 dB, 5 seeds, F >= 0.99)",
    4: "limitation scenarios beat the classic baseline",
    5: "real-data spot check (MIT-BIH record 100, MLII)",
    6: "refractory / threshold-coupling / scale-equivariance properties",
    7: "parser golden tests (format 212, header, round-trip)",
    8: "throughput budget (30-min record < 18 s)",
}


@pytest.fixture
def acceptance():
    """Context manager recording the outcome of one acceptance criterion.

    Usage::

        def test_criterion_2(acceptance):
            with acceptance(2, detail="F=1.000"):
                assert ...

    Assertion failures and skips propagate normally; the recorded status is
    what the terminal summary prints.
    """

    @contextlib.contextmanager
    def criterion(number: int, detail: str = ""):
        result = {"detail": detail}

        def note(text: str) -> None:
            result["detail"] = text

        try:
            yield note
        except pytest.skip.Exception as exc:
            _RESULTS[number] = ("SKIP", str(exc))
            raise
        except BaseException as exc:
            _RESULTS[number] = ("FAIL", f"{type(exc).__name__}: {exc}")
            raise
        else:
            _RESULTS[number] = ("PASS", result["detail"])

    return criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        if number in _RESULTS:
            status, detail = _RESULTS[number]
        else:
            status, detail = "NOT RUN", ""
        line = f"ACCEPTANCE {number}: {status} - {CRITERIA[number]}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)
