"""Functional causality over Boolean causal networks.

Causes are primitive inputs; a network's potential function (its multilinear
arithmetization) decides them, and graded responsibility ranks them.  The
same engine explains query answers, missing answers and aggregate
predicates over relational data.
"""

from .errors import CausalityError
from .network import (
    And,
    BoolExpr,
    CausalNetwork,
    Const,
    Not,
    Or,
    Var,
    Variable,
    VarKind,
    build_network,
    evaluate,
    expand_node,
    format_expr,
    format_network,
    parse_expr,
    parse_network,
    restrict,
    truth_table,
)
from .potential import (
    Potential,
    arithmetize,
    check_read_once,
    eval_potential,
    format_potential,
    network_potential,
    partial_derivative,
)
from .causes import (
    CauseCertificate,
    Contingency,
    Definition,
    check_cause,
    chk_cause,
    compare_definitions,
    functional_cause,
    functional_cause_tree,
    hp_actual_cause,
    is_counterfactual_cause,
    rank_by_responsibility,
    responsibility,
)
from .relational import RelationalInstance, evaluate_query, load_instance, parse_query
from .dbcompile import (
    ExplanationReport,
    WhyNotSpace,
    aggregate_causes,
    explain_why,
    explain_why_not,
    why_network,
    why_not_network,
)

__version__ = "0.1.0"
