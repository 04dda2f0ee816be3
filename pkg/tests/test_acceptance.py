"""Acceptance gate: the twelve primary criteria, one pass/fail line each.

Each criterion runs the matching verification suite at its stated
tolerances and runtime limits; the line lists every measured quantity.
"""
import pytest

from conftest import ACCEPTANCE_LINES
from femforge.verification import SUITES

CRITERIA = [
    (1, "element exactness", "element"),
    (2, "patch test, both plane modes", "patch"),
    (3, "heat slab oracle and spatial convergence", "heat1d"),
    (4, "transport reduction and conservation", "transport"),
    (5, "segregation equilibrium", "segregation"),
    (6, "damage sink fixed point", "sink"),
    (7, "return-mapping correctness", "returnmap"),
    (8, "continuum tangent check", "tangent"),
    (9, "single-element elastoplastic curve", "uniaxial"),
    (10, "phase-field homogeneous and profile checks", "pff"),
    (11, "irreversibility and decoupled limit", "irreversibility"),
    (12, "determinism of shipped configurations", "determinism"),
]


@pytest.mark.parametrize("number, title, suite", CRITERIA,
                         ids=[f"{n:02d}-{s}" for n, _, s in CRITERIA])
def test_criterion(number, title, suite):
    checks = SUITES[suite]()
    passed = all(c.passed for c in checks)
    detail = "; ".join(f"{c.name} = {c.measured:.3e} ({c.target})" for c in checks
                       if isinstance(c.measured, float))
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    failing = [c.line(suite) for c in checks if not c.passed]
    assert passed, "\n".join(failing)
