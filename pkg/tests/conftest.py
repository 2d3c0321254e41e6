import sys
import warnings

import pytest

from glmeasure.nystrom import NystromWarning


@pytest.fixture(autouse=True)
def _quiet_nystrom():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NystromWarning)
        yield


@pytest.fixture(scope="session")
def scene_bundle(tmp_path_factory):
    """1x synthetic measurement scene written to disk (image, dictionaries, config)."""
    from glmeasure.synthetic import write_scene_bundle

    return write_scene_bundle(tmp_path_factory.mktemp("scene"), scale=1.0, seed=0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.LINES):
            terminalreporter.write_line(line)
