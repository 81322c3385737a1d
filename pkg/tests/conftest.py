import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in range(1, 11):
        if n in results:
            status, title, detail = results[n]
        else:
            status, title, detail = "NOT RUN", mod.TITLES.get(n, ""), ""
        tr.write_line(f"criterion {n:2d} {status:4s} {title}" + (f" | {detail}" if detail else ""))
