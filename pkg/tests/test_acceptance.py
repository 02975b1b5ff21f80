"""Acceptance battery under pytest.

The fast suite runs once per session; each criterion is its own test and
prints its PASS/FAIL line.  Set KODAIRALAB_FULL=1 to run the full suite too.
"""

import io
import math
import os

import pytest

from kodairalab import acceptance as A

# the pointwise pullback bound is not met on the grids we can afford; see
# README, "Known failing criterion"
KNOWN_FAILING = {7: "pointwise pullback bound exponents exceed the threshold on the tested grid"}


def show(request, text):
    cap = request.config.pluginmanager.getplugin("capturemanager")
    with cap.global_and_fixture_disabled():
        print("\n" + text, flush=True)


@pytest.fixture(scope="module")
def fast_results():
    return {r.number: r for r in A.run_suite("fast", seed=0, workers=1, stream=None)}


def criterion_params():
    out = []
    for number in sorted(A.CRITERIA):
        marks = []
        if number in KNOWN_FAILING:
            marks.append(pytest.mark.xfail(reason=KNOWN_FAILING[number], strict=False))
        out.append(pytest.param(number, marks=marks, id=f"criterion-{number}"))
    return out


@pytest.mark.parametrize("number", criterion_params())
def test_fast_criterion(number, fast_results, request):
    res = fast_results[number]
    show(request, "\n".join([res.line()] + [c.line() for c in res.checks]))
    assert res.checks, "criterion produced no checks"
    assert res.passed, res.line()


@pytest.mark.skipif(os.environ.get("KODAIRALAB_FULL") != "1", reason="set KODAIRALAB_FULL=1 for the full suite")
def test_full_suite(request):
    buf = io.StringIO()
    results = A.run_suite("full", seed=0, workers=os.cpu_count() or 1, stream=buf)
    show(request, buf.getvalue())
    failed = {r.number for r in results if not r.passed}
    assert failed <= set(KNOWN_FAILING), buf.getvalue()


def test_corrupted_tolerance_fails_by_name():
    buf = io.StringIO()
    res = A.run_suite("fast", only={2}, tolerances={"gram_diag": -1.0}, stream=buf)
    assert len(res) == 1 and not res[0].passed
    text = buf.getvalue()
    assert "[FAIL] criterion  2 Gram closed form" in text
    assert "BAD max relative diagonal error" in text
    assert "failed: 2" in text


def test_corrupted_degree_tolerance_fails():
    res = A.run_suite("fast", only={13}, tolerances={"degrees": -1.0}, stream=None)
    assert not res[0].passed


def test_check_semantics():
    assert A.Check("x", 0.5, 1.0).passed
    assert not A.Check("x", 1.5, 1.0).passed
    assert A.Check("x", 1.5, 1.0, upper=False).passed
    assert not A.Check("x", math.nan, 1.0).passed
    assert not A.Check("x", math.nan, 1.0, upper=False).passed
    assert A.Check("x", 0.25, 1.0).margin == pytest.approx(0.75)


def test_crashing_criterion_is_reported_as_failure(monkeypatch):
    def boom(ctx):
        raise RuntimeError("kaboom")
    monkeypatch.setitem(A.CRITERIA, 99, ("exploding", boom))
    res = A.run_criterion(99, A.Context("fast", 0, 1, None, dict(A.TOLERANCES)))
    assert not res.passed
    assert "kaboom" in res.line() + "".join(c.label for c in res.checks)


def test_unknown_suite():
    with pytest.raises(ValueError):
        A.run_suite("medium", stream=None)
