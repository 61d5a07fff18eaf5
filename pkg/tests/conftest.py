import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.load_profile("default")

from risphase.channel import ChannelRealization, ClusterConfig, RisGeometry, Scene  # noqa: E402


@pytest.fixture
def small_scene():
    geom = RisGeometry(2, 2, 0.5, (0.0, 1.0, 0.0), (-1.0, 0.0, 0.0))
    return Scene((0.0, 30.0, 2.0), (10.0, 30.0, 1.0),
                 (((5.0, 25.0, 2.0), geom), ((5.0, 35.0, 2.0),
                   RisGeometry(2, 2, 0.5, (0.0, -1.0, 0.0), (1.0, 0.0, 0.0)))))


def random_realization(rng, num_ris, k, scale=1.0, h0=True):
    def cn(n):
        return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    return ChannelRealization(h=[cn(k) for _ in range(num_ris)], g=[cn(k) for _ in range(num_ris)],
                              h0=complex(cn(1)[0]) if h0 else 0j)


# -- acceptance verdicts -------------------------------------------------------

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(number, ok: bool, detail: str):
        line = f"criterion {number:>3}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line
    return record


def _criterion_order(line: str):
    label = line.split(":")[0].split()[1]
    digits = label.rstrip("abcdefghijklmnopqrstuvwxyz")
    return int(digits), label[len(digits):]


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=_criterion_order):
            terminalreporter.write_line(line)
