import numpy as np
import pytest

from disentangle_eval.dataset import CodeTensor, FactorTable, validate_pairing

_criteria = {}


def make_dataset(factors, codes, names=None, cards=None):
    """Pair an (N, m) factor matrix with (N, d) or (N, d, T) codes."""
    factors = np.asarray(factors, dtype=np.int64)
    if factors.ndim == 1:
        factors = factors[:, None]
    codes = np.asarray(codes, dtype=np.float32)
    if codes.ndim == 2:
        codes = codes[:, :, None]
    m = factors.shape[1]
    names = names or [f"f{k}" for k in range(m)]
    cards = cards or [int(factors[:, k].max()) + 1 for k in range(m)]
    return validate_pairing(FactorTable(factors, names, cards), CodeTensor(codes))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    label = _criterion_of.get(report.nodeid)
    if label is None:
        return
    ok = report.passed
    _criteria[label] = _criteria.get(label, True) and ok


_criterion_of = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None and mark.args:
            _criterion_of[item.nodeid] = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_criteria, key=lambda s: int(s.split()[0][2:])):
        status = "PASS" if _criteria[label] else "FAIL"
        terminalreporter.write_line(f"{status}  {label}")
