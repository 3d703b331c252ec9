import itertools

import numpy as np
import pytest

from semantic_ic import ldpc


@pytest.fixture(scope="session")
def default_code():
    H = ldpc.construct_regular_code(ldpc.CodeSpec())
    return ldpc.systematize(H)


@pytest.fixture(scope="session")
def toy_code():
    H = ldpc.construct_regular_code(ldpc.CodeSpec(n=6, dv=2, dc=3, seed=0))
    return ldpc.systematize(H)


def all_words(n):
    return np.array(list(itertools.product([0, 1], repeat=n)), dtype=np.uint8)


def ml_codewords(H, llr):
    """Every codeword maximizing the likelihood, found by enumeration."""
    words = all_words(H.n)
    codewords = words[ldpc.syndrome_check(H, words)]
    score = (1.0 - 2.0 * codewords) @ llr
    return codewords[np.isclose(score, score.max())]


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_a") or "_" not in name[6:]:
        return
    label = name[5:].split("_", 1)[0].upper()
    if not label[1:].isdigit():
        return
    if report.when == "call" or report.outcome != "passed":
        ACCEPTANCE.setdefault(label, report.outcome)
        if report.outcome != "passed":
            ACCEPTANCE[label] = report.outcome


@pytest.fixture
def measured(request):
    """Free-form measurements printed next to the criterion's verdict."""
    store = request.config.stash.setdefault(_MEASURED, {})
    label = request.node.name[5:].split("_", 1)[0].upper()
    return store.setdefault(label, {})


_MEASURED = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, config):
    if not ACCEPTANCE:
        return
    values = config.stash.get(_MEASURED, {})
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s[1:])):
        verdict = "PASS" if ACCEPTANCE[label] == "passed" else "FAIL"
        detail = ", ".join(f"{k}={_fmt(v)}" for k, v in values.get(label, {}).items())
        terminalreporter.write_line(f"{label:>4} {verdict}  {detail}")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
