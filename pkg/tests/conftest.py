import numpy as np
import pytest

from transcomp.tensor_core import mode_product


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def orthonormal(rng, n, r):
    q, _ = np.linalg.qr(crandn(rng, n, r))
    return q


def tucker_tensor(rng, shape, ranks):
    """Random tensor with exact multilinear ranks ``ranks``."""
    t = crandn(rng, *ranks)
    for i, (n, r) in enumerate(zip(shape, ranks)):
        t = mode_product(t, orthonormal(rng, n, r), i)
    return t


def rel(a, b):
    return np.linalg.norm((a - b).ravel()) / np.linalg.norm(a.ravel())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance verdicts, echoed again in the terminal summary so they survive
# output capture.
VERDICTS = []


def verdict(criterion: str, name: str, ok: bool, detail: str = "", status: str = None) -> bool:
    status = status or ("PASS" if ok else "FAIL")
    line = f"{status} [{criterion}] {name}" + (f": {detail}" if detail else "")
    VERDICTS.append((criterion, status, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in VERDICTS:
        terminalreporter.write_line(line)
    rollup = {}
    for crit, status, _ in VERDICTS:
        rollup.setdefault(crit, []).append(status)
    terminalreporter.write_line("")
    for crit in sorted(rollup, key=lambda c: int(c[1:])):
        statuses = rollup[crit]
        overall = "FAIL" if "FAIL" in statuses else "PASS"
        warns = statuses.count("WARN")
        extra = f" ({warns} soft warnings)" if warns else ""
        terminalreporter.write_line(f"{overall} criterion {crit[1:]}: "
                                    f"{statuses.count('PASS') + warns}/{len(statuses)} checks{extra}")
