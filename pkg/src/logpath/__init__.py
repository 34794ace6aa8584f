"""Reconstruct app execution paths from audit logs that carry a bounded call-stack window."""

from .errors import (
    CombineError, ContractError, GenerationError, LogParseError, LogPathError, LogValidationError,
    ModelParseError, ModelValidationError, NoMatchError, UnknownTargetError,
)
from .graph import ApiSignature, AppModel, Edge, EdgeKind, Node, Supergraph, dump_app_model, load_app_model, validate
from .logs import (
    CallStackInfo, Des, IccLink, LogRecord, LogSegment, LogSequence, ReflectiveTarget, dump_log,
    filter_library_records, infer_k, parse_log, partition_by_thread, segment,
)
from .overlay import GraphOverlay
from .matcher import (
    MatchConfig, MatchReport, Path, PathSegment, SegmentFailure, Strategy, combine, is_matched,
    match_all, match_segment, match_segment_backtracking, node_checking,
)
from .simulator import GenParams, GroundTruth, generate_app, simulate
from .analysis import compare_strategies, depth_cdf, enumeration_bound, select_k

__version__ = "0.1.0"
