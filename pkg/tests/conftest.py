import time
from importlib import resources
from pathlib import Path

import pytest

from vsgrlc.engine import simulate
from vsgrlc.model import load_model_file, parse_config

SCENARIO_DIR = Path(str(resources.files("vsgrlc") / "scenarios"))
BUNDLED = sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))

SIM_UNITS = [
    dict(id="u1", j0=300, d0=300, pm_W=1000, feeder_mH=11),
    dict(id="u2", j0=600, d0=600, pm_W=2000, feeder_mH=7.7),
    dict(id="u3", j0=900, d0=900, pm_W=3000, feeder_mH=6.6),
]


def make_config(units=None, mode="SA", lg=0.0, load=(0.0, 0.0), controllers=(), events=(), t_end=5.0,
                dt=0.001, stride=10, comm=None, **top):
    doc = dict(
        mode=mode,
        grid=dict(lg_mH=lg),
        units=[dict(u) for u in (units or SIM_UNITS)],
        load=dict(p_W=load[0], q_var=load[1]),
        controllers=list(controllers),
        scenario=dict(t_end_s=t_end, dt_s=dt, output_stride=stride, events=list(events)),
        **top,
    )
    if comm is not None:
        doc["comm"] = comm
    return doc


def build(**kw):
    return parse_config(make_config(**kw))


class RunCache:
    """Bundled scenario runs shared across the session, with their wall times."""

    def __init__(self):
        self._runs = {}

    def get(self, name):
        if name not in self._runs:
            model, graph, scenario = load_model_file(SCENARIO_DIR / f"{name}.json")
            t0 = time.perf_counter()
            series = simulate(model, graph, scenario)
            self._runs[name] = (model, graph, scenario, series, time.perf_counter() - t0)
        return self._runs[name]


_CACHE = RunCache()


@pytest.fixture(scope="session")
def runs():
    return _CACHE


# ---------------------------------------------------------------- acceptance summary

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        props = dict(report.user_properties)
        if "criterion" in props:
            _ACCEPTANCE.append((props["criterion"], report.outcome, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, outcome, detail in sorted(_ACCEPTANCE):
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {crit:>2}: {status}  {detail}")
