import sys
import warnings


warnings.filterwarnings("ignore", message=".*TBB.*")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running statistical test")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
