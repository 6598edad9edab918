import numpy as np
import pytest

from xrel.solver import Grid, SolveOptions, make_manifold_field
from xrel.transforms import dykhne


@pytest.fixture(scope="session")
def dyk():
    return dykhne(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid32(dyk):
    return Grid(dyk.tspec, (32, 32))


@pytest.fixture(scope="session")
def field32(dyk, grid32):
    return make_manifold_field(dyk, grid32, 8.0, 3.0, seed=7)


@pytest.fixture(scope="session")
def fast_opts():
    return SolveOptions(tol=1e-10, max_iters=400)


# CLI preset runs, shared by the CLI and acceptance tests -------------------

@pytest.fixture(scope="session")
def run_preset(tmp_path_factory):
    """``run_preset(name, threads=1, seed=None)`` -> (exit code, output dir); cached per argument set."""
    import json

    from xrel.cli import main
    from xrel.cli.config import load_yaml, read_config_text

    cache = {}

    def run(name, threads=1, seed=None):
        key = (name, threads, seed)
        if key not in cache:
            kind = load_yaml(read_config_text(name)[0])[0]["experiment"]["kind"]
            out = tmp_path_factory.mktemp(f"{name}-t{threads}")
            argv = [kind, "--config", name, "--out", str(out), "--threads", str(threads)]
            if seed is not None:
                argv += ["--seed", str(seed)]
            code = main(argv)
            report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
            cache[key] = (code, out, report)
        return cache[key]

    return run


ACCEPTANCE_LINES = {}


@pytest.fixture
def record_criterion():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number, passed, detail):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
