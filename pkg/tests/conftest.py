import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kddlike import kdd_lines, write_kdd_like  # noqa: E402

from whalefs import encode, generate_synthetic, parse_kdd  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def kdd_records():
    return parse_kdd(kdd_lines(600, seed=7))


@pytest.fixture(scope="session")
def kdd_data(kdd_records):
    return encode(kdd_records)


@pytest.fixture
def kdd_file(tmp_path):
    path = tmp_path / "train.txt"
    write_kdd_like(path, 900, seed=11)
    return path


@pytest.fixture(scope="session")
def synthetic_small():
    return generate_synthetic(200, 10, [1, 4, 7], 0.05, seed=3)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or (rep.failed and rep.when == "setup")):
        return
    code, title = marker.args
    details = [v for k, v in item.user_properties if k == "detail"]
    if rep.failed:
        crash = getattr(rep.longrepr, "reprcrash", None)
        details.append(crash.message.splitlines()[0] if crash else str(rep.longrepr)[:200])
    verdict = "PASS" if rep.passed else "FAIL"
    item.config.stash[_ACCEPTANCE].append(f"{code} {verdict}  {title}: {'; '.join(details)}")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
