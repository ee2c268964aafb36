"""Checkers and detectors over histories and execution traces."""

from .opacity import (
    SearchTooLarge,
    brute_force_opacity,
    check_opacity,
    check_strict_serializability,
    search_serialization,
    validate_serialization,
)
from .patterns import Counts, PatternReport, check_pattern_budget, count_patterns, detect_patterns
from .progress import check_progressiveness, check_strong_progressiveness, conflict_components
from .structure import (
    check_bakery_order,
    check_dap_conclusion,
    check_invisible_reads,
    check_label_bound,
    check_mutual_exclusion,
    check_strict_partitioning,
    disjoint_access,
    hold_intervals,
)
from .valence import ProbeSetup, ProtectionReport, Valence, classify_valence, find_protecting_prefix

__all__ = [
    "SearchTooLarge",
    "brute_force_opacity",
    "check_opacity",
    "check_strict_serializability",
    "search_serialization",
    "validate_serialization",
    "Counts",
    "PatternReport",
    "check_pattern_budget",
    "count_patterns",
    "detect_patterns",
    "check_progressiveness",
    "check_strong_progressiveness",
    "conflict_components",
    "check_bakery_order",
    "check_dap_conclusion",
    "check_invisible_reads",
    "check_label_bound",
    "check_mutual_exclusion",
    "check_strict_partitioning",
    "disjoint_access",
    "hold_intervals",
    "ProbeSetup",
    "ProtectionReport",
    "Valence",
    "classify_valence",
    "find_protecting_prefix",
]
