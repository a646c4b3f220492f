import numpy as np
import pytest

from recurreg.data import from_arrays

ACCEPTANCE: dict[str, tuple[str, str]] = {}


def record(criterion: str, status: str, detail: str) -> None:
    ACCEPTANCE[criterion] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{status}] criterion {key}: {detail}")


@pytest.fixture
def toy3():
    """A: events {1, 3}, Y=4, terminal; B: event {2}, Y=5; C: no events, Y=2.5."""
    return from_arrays(["A", "B", "C"], [[1.0, 3.0], [2.0], []], [4.0, 5.0, 2.5], [True, False, False])


@pytest.fixture
def toy3x():
    return from_arrays(
        ["A", "B", "C"], [[1.0, 3.0], [2.0], []], [4.0, 5.0, 2.5], [True, False, False], X=[[0.0], [1.0], [0.0]]
    )


@pytest.fixture
def toy2():
    return from_arrays(["A", "B"], [[1.0, 3.0], [2.0]], [4.0, 5.0], [True, False])


def small_corpus():
    """Hand-made datasets with at most 5 subjects, used by brute-force checks."""
    return {
        "toy2": from_arrays(["A", "B"], [[1.0, 3.0], [2.0]], [4.0, 5.0], [1, 0]),
        "toy3": from_arrays(["A", "B", "C"], [[1.0, 3.0], [2.0], []], [4.0, 5.0, 2.5], [1, 0, 0]),
        "ties": from_arrays(["a", "b", "c"], [[1.0, 2.0], [1.0], [2.0, 2.5]], [3.0, 1.5, 4.0], [0, 1, 1]),
        "single": from_arrays(["s"], [[1.0]], [2.0], [0]),
        "event_at_end": from_arrays(["a", "b"], [[1.0, 2.0], [0.5]], [2.0, 3.0], [0, 0]),
        "five": from_arrays(
            list("abcde"),
            [[0.3, 1.2], [0.8], [2.0, 2.2, 3.1], [], [0.5, 4.0]],
            [1.5, 2.0, 3.5, 1.0, 4.5],
            [1, 0, 0, 1, 0],
            X=[[0, 0.2], [1, -0.5], [0, 1.1], [1, 0.0], [1, -1.3]],
        ),
    }


@pytest.fixture
def corpus():
    return small_corpus()


@pytest.fixture(scope="session")
def sim200():
    from recurreg.simulate import default_config, simulate_gsc

    return simulate_gsc(default_config(200, seed=3))[0]


def random_dataset(rng: np.random.Generator, n: int, p: int = 1, max_events: int = 4):
    ids, evs, ys, term = [], [], [], []
    for i in range(n):
        y = float(rng.uniform(0.5, 5.0))
        m = int(rng.integers(0, max_events + 1))
        t = np.unique(np.round(rng.uniform(0.0, y, size=m), 3))
        t = t[t > 0]
        evs.append(list(t))
        ys.append(max(y, float(t.max(initial=0.0)) + 1e-3))
        term.append(bool(rng.random() < 0.4))
        ids.append(str(i))
    X = rng.normal(size=(n, p)) if p else None
    return from_arrays(ids, evs, ys, term, X)
