import pytest

# filled by tests/test_acceptance.py: (number, title, passed, detail)
ACCEPTANCE_RESULTS = []


@pytest.fixture
def acceptance():
    def report(number, title, passed, detail=""):
        line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {title}" + (f" [{detail}]" if detail else "")
        ACCEPTANCE_RESULTS.append((number, line))
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)
