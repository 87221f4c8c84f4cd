"""Shared fixtures: cached convergence studies and residual bookkeeping."""

import math
from dataclasses import dataclass, field

import numpy as np
import pytest

from msmfe import (
    COLUMNS,
    error_norms,
    example_one,
    example_three,
    example_two,
    solve_case,
)


@dataclass
class StudyData:
    case: object
    levels: tuple
    errors: dict = field(default_factory=dict)  # n -> {column: rel error}
    rates: dict = field(default_factory=dict)  # n -> {column: rate} (skips first)
    iterations: dict = field(default_factory=dict)
    wall_time: float = 0.0
    conservation: float = 0.0
    weak_symmetry: float = 0.0


def relative_conservation(res) -> float:
    """Residual of the per-cell balance between div sigma_h and the f average."""
    r = res.asm.asu @ res.fields.sigma - res.asm.rhs_u
    scale = max(float(np.abs(res.asm.rhs_u).max()), 1e-300)
    return float(np.abs(r).max()) / scale


def relative_weak_symmetry(res) -> float:
    r = res.asm.asg @ res.fields.sigma
    scale = max(float(np.abs(res.fields.sigma).max()), 1.0) * res.asm.mesh.h.max() ** 3
    return float(np.abs(r).max()) / scale


def run_study(case, levels, tol=1.0e-13) -> StudyData:
    data = StudyData(case=case, levels=tuple(levels))
    prev = None
    for n in levels:
        res = solve_case(case, n, tol=tol)
        errs = error_norms(res.asm, res.fields, case)
        data.errors[n] = errs
        if prev is not None:
            data.rates[n] = {k: math.log2(prev[k] / errs[k]) for k in COLUMNS}
        data.iterations[n] = res.report.iterations
        data.wall_time += res.wall_time
        data.conservation = max(data.conservation, relative_conservation(res))
        data.weak_symmetry = max(data.weak_symmetry, relative_weak_symmetry(res))
        prev = errs
    return data


@pytest.fixture(scope="session")
def study_t1():
    return run_study(example_one("msmfe0"), (2, 4, 8, 16))


@pytest.fixture(scope="session")
def study_t2():
    return run_study(example_one("msmfe1"), (2, 4, 8, 16))


@pytest.fixture(scope="session")
def study_t3():
    return run_study(example_two("msmfe0"), (2, 4, 8, 16))


@pytest.fixture(scope="session")
def study_t4():
    return run_study(example_two("msmfe1-scaled"), (2, 4, 8, 16, 32))


@pytest.fixture(scope="session")
def study_t5():
    return run_study(example_three(nu_exponent=1), (2, 4, 8, 16))


@pytest.fixture(scope="session")
def study_t7():
    return run_study(example_three(nu_exponent=5), (2, 4, 8, 16))


@pytest.fixture(scope="session")
def study_t8():
    return run_study(example_three(nu_exponent=9), (2, 4, 8, 16))


@pytest.fixture(scope="session")
def all_studies(study_t1, study_t2, study_t3, study_t4, study_t5, study_t7, study_t8):
    return {
        "table1": study_t1,
        "table2": study_t2,
        "table3": study_t3,
        "table4": study_t4,
        "table5": study_t5,
        "table7": study_t7,
        "table8": study_t8,
    }
