import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest  # noqa: E402

import toy  # noqa: E402
from bayeslottery.tickets import (imp, lrr, shuffle_mask, train_ticket,  # noqa: E402
                                  transplant_pipeline)


@pytest.fixture(scope="session")
def toy_data():
    return toy.blobs()


@pytest.fixture(scope="session")
def toy_runs(toy_data):
    """Per-seed IMP, LRR, shuffled baselines and transplantation on the blob task."""
    runs = []
    for seed in toy.SEEDS:
        run = {"imp": imp(toy.MLP, *toy_data, toy.TRAIN, toy.LEVELS, toy.RATE, "snr", seed)}
        deepest = run["imp"].tickets[-1]
        for mode in ("global", "even", "layerwise"):
            ticket = shuffle_mask(deepest, mode, seed=1000 + seed)
            run[mode] = train_ticket(ticket, *toy_data, toy.TRAIN)
        run["lrr"] = lrr(toy.MLP, *toy_data, toy.TRAIN, toy.LEVELS, toy.RATE, "snr", seed)
        run["det"], run["transplant"] = transplant_pipeline(
            toy.MLP, *toy_data, toy.TRAIN, toy.LEVELS, toy.RATE, seed)
        runs.append(run)
    return runs


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion; printed after the run."""

    def record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[number] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
