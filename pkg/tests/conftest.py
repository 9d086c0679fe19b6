import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_tsv(path, header, rows):
    lines = ["\t".join(header)] + ["\t".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for i in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[i]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {i}: {detail}")
