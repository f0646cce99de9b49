"""Sample-based certification and counterexample search for quasi strongly
E-preinvex functions, strongly E-invex sets and related classes."""

from .classifiers import (
    PROPERTIES,
    ProblemTriple,
    check_condition_a,
    check_e_preinvex,
    check_e_prequasi_invex,
    check_psei,
    check_qsei,
    check_qsep,
    check_sei,
    check_sep,
    check_strict_qsep,
    find_counterexample,
    gradient,
    qsep_sides,
    run_property,
)
from .expr import EvalError, Expr, ExprError, ExprSyntaxError, MapE, MapPsi, ScalarFn, parse
from .nlpp import NlppProblem, NlppResult, certify_assumptions, feasible_set, local_search, solve
from .problem import ProblemFile, ProblemFileError, load_builtin, load_problem
from .sampling import Anchor, CertReport, SamplingPlan, Status, Witness
from .sets import (
    Box,
    SetSpec,
    check_e_image_subset,
    check_e_invex,
    check_levelsets_imply_qsep,
    check_strongly_e_invex,
    intersect,
    is_member,
    qsep_sublevel_sei,
    sublevel_set,
)
from .theorems import (
    BivariateFn,
    FamilySpec,
    verify_composition,
    verify_inf_marginal,
    verify_linear_combination,
    verify_sei_conda_implies_sep,
    verify_sei_implies_qsei,
    verify_sei_nonneg_dot_implies_psei,
    verify_sep_implies_qsep,
    verify_shift_property,
    verify_sup_family,
)

__version__ = "0.1.0"
