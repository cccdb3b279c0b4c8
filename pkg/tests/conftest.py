import time

import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


class Criterion:
    """Collects named checks for one acceptance criterion and reports a single line."""

    def __init__(self, lines, number, title, budget):
        self.lines, self.number, self.title, self.budget = lines, number, title, budget
        self.checks = []
        self.start = time.perf_counter()

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return ok

    def finish(self):
        elapsed = time.perf_counter() - self.start
        self.check("runtime", elapsed < self.budget, f"{elapsed:.1f}s < {self.budget:g}s")
        failed = [c for c in self.checks if not c[1]]
        status = "PASS" if not failed else "FAIL"
        detail = "; ".join(f"{n}: {d}" if d else n for n, _, d in (failed or self.checks))
        line = f"{status} criterion {self.number} ({self.title}): {detail}"
        self.lines.append((self.number, line))
        print(line)
        return not failed


@pytest.fixture
def criterion(request):
    lines = request.config.stash[_KEY]
    made = []

    def make(number, title, budget):
        c = Criterion(lines, number, title, budget)
        made.append(c)
        return c

    yield make
    for c in made:
        if not any(n == c.number for n, _ in lines):
            # the test raised before finishing: still report it
            c.check("completed", False, "raised before all checks ran")
            c.finish()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
