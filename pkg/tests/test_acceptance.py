"""End-to-end acceptance criteria; each test prints its pass/fail line.

Run directly (``python tests/test_acceptance.py``) for the plain report.
"""
import pytest

from normnls import validation as v

ACCEPTANCE_LINES: list[str] = []

CRITERIA = [
    ("discretization_order", v.check_discretization),
    ("energy_derivatives", v.check_derivatives),
    ("scalar_ground_state", v.check_scalar),
    ("fiber_map", v.check_fiber),
    ("infimum_not_attained", v.check_infimum),
    ("symmetric_solutions", v.check_diagonal),
    ("excited_solutions", v.check_excited),
    ("phase_separation", v.check_phase_separation),
    ("test_set_bounds", v.check_test_sets),
    ("morse_indices", v.check_morse),
    ("reproducibility", v.check_reproducibility),
]


def _run(fn):
    try:
        return fn()
    except Exception as exc:  # noqa: BLE001 - a crash is a failed criterion
        return v.Check(fn.__name__.removeprefix("check_"), False, f"raised {type(exc).__name__}: {exc}")


@pytest.mark.slow
@pytest.mark.parametrize("fn", [fn for _, fn in CRITERIA], ids=[name for name, _ in CRITERIA])
def test_criterion(fn):
    chk = _run(fn)
    ACCEPTANCE_LINES.append(chk.line())
    print(chk.line())
    assert chk.passed, chk.detail


if __name__ == "__main__":
    import sys

    results = [_run(fn) for _, fn in CRITERIA]
    for chk in results:
        print(chk.line())
    sys.exit(0 if all(c.passed for c in results) else 1)
