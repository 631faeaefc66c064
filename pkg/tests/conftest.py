import os
from pathlib import Path

import pytest

from cte.config import builtin_config_path, load_config
from cte.pipeline import STAGES, Run, run_all


def _complete(out):
    return all((Path(out) / s / "manifest.json").is_file() for s in STAGES)


def pipeline_run(config_name, out, **overrides):
    cfg = load_config(builtin_config_path(config_name), out=out, environ={}, overrides=overrides or None)
    run = Run(cfg)
    run_all(run)
    return run


@pytest.fixture(scope="session")
def smoke_run(tmp_path_factory):
    """Full pipeline on the tiny fixture config; about half a minute."""
    return pipeline_run("smoke", tmp_path_factory.mktemp("smoke"))


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Full desk-scale pipeline (several minutes on one CPU).

    Set CTE_DESK_DIR to a finished ``cte all`` output of the bundled desk
    config to reuse it instead of retraining.
    """
    reuse = os.environ.get("CTE_DESK_DIR")
    if reuse and _complete(reuse):
        return Run(load_config(builtin_config_path("desk"), out=reuse, environ={}))
    return pipeline_run("desk", reuse or tmp_path_factory.mktemp("desk"))


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail)``; skips are recorded too."""

    def record(n, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        ACCEPTANCE[n] = f"criterion {n}: {status} {detail}".rstrip()
        print(ACCEPTANCE[n])
        return ok

    def skip(n, reason):
        ACCEPTANCE[n] = f"criterion {n}: SKIP {reason}"
        print(ACCEPTANCE[n])
        pytest.skip(reason)

    record.skip = skip
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark and rep.when == "call" and rep.failed:
        n = mark.args[0]
        if n not in ACCEPTANCE or " PASS" in ACCEPTANCE[n]:
            ACCEPTANCE[n] = f"criterion {n}: FAIL {call.excinfo.typename}: {str(call.excinfo.value).splitlines()[0][:120]}"
