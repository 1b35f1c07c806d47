"""Entangled histories and multiple-time states: a numerical toolkit."""

from .errors import (
    CapacityError, DegeneracyError, FactorizationError, HistoryError, ImpossiblePostselectionError,
    IncompatibilityError, RepresentabilityError, ShapeError,
)
from .histories import (
    BridgingSet, ConsistentFamily, FamilyReport, HistoryBranch, HistoryState, TimeGrid,
    chain_operator, check_family, injected_distribution, injected_history, k_inner,
    normalize_history, product_family, s_inner, weight,
)
from .tsvf import (
    BWD, FWD, MtsBranch, MultiTimeState, SlotDirection, abl_probability, mts_inner,
    two_time_distribution, two_time_measurement_prob, two_time_state, validate_mts,
)
from .isomorphism import history_to_mts, mts_to_history, random_mts_sample, verify_isomorphism
from .reduction import (
    CompositeGrid, MixedHistory, SubsystemFamily, build_subsystem_family, factorize_bridging,
    naive_spatial_trace, partial_trace_time, reduced_measurement_distribution,
)
from .protocols import (
    Circuit, Gate, Marker, PostSelection, post_select, run_generation_scheme, run_tau_ghz, simulate,
)
from .dsl import Diagnostic, ExperimentSpec, ParseResult, parse
from .serialize import deserialize, serialize

__version__ = "0.1.0"
