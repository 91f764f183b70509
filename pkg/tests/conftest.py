import functools

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("chemclock", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("chemclock")

_CRITERIA: dict[int, tuple[str, str, str]] = {}


@functools.lru_cache(maxsize=None)
def simulate(preset: str, t_end: float | None = None, **overrides):
    """Cached ``run_scenario`` of a preset; overrides are ``key=value`` params."""
    from chemclock.scenarios import PRESETS, assertions, build_system, integrator_config, resolve_config
    from chemclock.sequencer import run_scenario

    cfg = resolve_config({"preset": preset}, [f"{k}={v}" for k, v in overrides.items()])
    system = build_system(cfg)
    t_span = (cfg["t_span"][0], t_end if t_end is not None else cfg["t_span"][1])
    return system, run_scenario(system, t_span, integrator_config(cfg), assertions(cfg))


@pytest.fixture(scope="session")
def sim():
    return simulate


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    if call.excinfo is not None and not detail:
        detail = str(call.excinfo.value).splitlines()[0][:200]
    _CRITERIA[number] = ("PASS" if call.excinfo is None else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} [{status}] {title}: {detail}")
