import time

import numpy as np
import pytest

from dregn.data import InteractionDataset


@pytest.fixture(scope="session")
def tiny_ds():
    # 4 users, 5 items; user 3 has no train positives
    return InteractionDataset.from_sets(
        {0: [0, 1], 1: [1, 2, 4], 2: [0], 3: []},
        num_users=4,
        num_items=5,
        val={0: [3], 1: [0]},
        test={0: [4], 2: [2, 3]},
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


@pytest.fixture
def timer():
    return Timer


# acceptance reporting: tests marked ``criterion(n, title)`` get one summary line each
_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown":
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
    _CRITERIA[n] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        if n in _CRITERIA:
            title, status, detail = _CRITERIA[n]
            terminalreporter.write_line(f"C{n:<2} {status:4}  {title}  [{detail}]")
        else:
            terminalreporter.write_line(f"C{n:<2} NOT RUN  (deselected; see README)")
