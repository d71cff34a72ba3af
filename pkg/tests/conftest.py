import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, d, low=0.5, high=3.0):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return (q * rng.uniform(low, high, d)) @ q.T


# -- acceptance reporting -------------------------------------------------------------

_ACCEPTANCE = {}


class _Criterion:
    """Context manager recording PASS/FAIL and measured details for one criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.details = []

    def note(self, text):
        self.details.append(text)
        print(f"criterion {self.number}: {text}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        _ACCEPTANCE[self.number] = (status, self.title, "; ".join(self.details))
        line = f"ACCEPTANCE {self.number:>2} {status}  {self.title}"
        print(line + (f"  [{'; '.join(self.details)}]" if self.details else ""))
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, details = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}" + (f"  [{details}]" if details else ""))
