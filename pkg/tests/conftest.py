import numpy as np
import pytest

from gradleak import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available_backends())
def backend(request, monkeypatch):
    """Rebind the active kernels to each available backend in turn."""
    ns = kernels.get_backend(request.param)
    for name in ("conv_forward", "conv_weight_grad", "conv_input_grad",
                 "scatter_input_grad", "gradient_block", "weight_rows"):
        monkeypatch.setattr(kernels, name, getattr(ns, name))
    return request.param


_CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record an acceptance criterion's outcome for the end-of-run summary.

    Usage: ``criterion(3, "detail")`` before asserting; the line reads FAIL
    unless the test body finishes.
    """
    entry = {}

    def record(number, detail):
        entry["number"], entry["detail"] = number, detail

    yield record
    if entry:
        failed = getattr(request.node, "rep_call", None)
        ok = failed is not None and failed.passed
        _CRITERIA[entry["number"]] = (ok, entry["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
