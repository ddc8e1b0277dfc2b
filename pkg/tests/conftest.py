import sys
from pathlib import Path

# shared helpers (oracle.py, patches.py) import as top-level modules
sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE = {}  # criterion number -> (passed, line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n][1])
