import pytest

from oracles import write_digits_idx

_criteria = {}


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory):
    """A small MNIST-shaped IDX directory built from sklearn's bundled digits."""
    return str(write_digits_idx(tmp_path_factory.mktemp("digits")))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    num, title = marker.args
    entry = _criteria.setdefault(num, {"title": title, "passed": True, "ran": False})
    if rep.when == "call" or rep.failed:
        entry["ran"] = True
        if rep.failed:
            entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        e = _criteria[num]
        status = "PASS" if e["passed"] and e["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {num:>2}: {status}  {e['title']}")
