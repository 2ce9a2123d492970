from __future__ import annotations

from pathlib import Path

import pytest

from repdsr.config import ScenarioConfig, apply_overrides, from_dict, template, to_dict
from repdsr.network import Network
from repdsr.world import write_trace


def static_config(tmp_path: Path, positions, flows=(), attackers=(), ids=True, horizon=60.0,
                  **overrides) -> ScenarioConfig:
    """Scenario with nodes pinned at ``positions`` and explicit CBR flows.

    ``flows`` holds ``(source, sink, start[, stop])`` tuples.
    """
    trace = tmp_path / f"static-{len(list(tmp_path.iterdir()))}.trace"
    write_trace(trace, [(i, 0.0, x, y, 0.0) for i, (x, y) in enumerate(positions)])
    data = to_dict(template("baseline-20"))
    data.update(scenario_id="static", nodes=len(positions), horizon=horizon)
    data["mobility"]["trace"] = str(trace)
    data["traffic"]["flows"] = [{"source": f[0], "sink": f[1], "start": f[2],
                                 "stop": f[3] if len(f) > 3 else horizon} for f in flows]
    data["adversary"]["nodes"] = list(attackers)
    data["ids"]["enabled"] = ids
    cfg = from_dict(data)
    return apply_overrides(cfg, overrides) if overrides else cfg


def chain(n: int, spacing: float = 200.0, y: float = 500.0) -> list[tuple[float, float]]:
    return [(50.0 + i * spacing, y) for i in range(n)]


@pytest.fixture
def static_net(tmp_path):
    def make(positions, flows=(), attackers=(), ids=True, horizon=60.0, **overrides) -> Network:
        return Network(static_config(tmp_path, positions, flows, attackers, ids, horizon, **overrides))
    return make


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
