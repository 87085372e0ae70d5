"""Private set intersection, union and aggregation over secret-shared domain tables."""
from .errors import (IngestionError, ParameterError, PrismError, ProtocolError, TamperAlarm,
                     VisibilityError)
from .oracle import PlainInstance, oracle_eval
from .orchestrator import QueryOutcome, Transcript, run_bucketized_psi, run_query
from .params import PublicParams, RoleView, generate_params, view_for
from .query import Domain, OwnerRelation, QueryResult, QuerySpec

__all__ = [
    "Domain", "IngestionError", "OwnerRelation", "ParameterError", "PlainInstance", "PrismError",
    "ProtocolError", "PublicParams", "QueryOutcome", "QueryResult", "QuerySpec", "RoleView",
    "TamperAlarm", "Transcript", "VisibilityError", "generate_params", "oracle_eval",
    "run_bucketized_psi", "run_query", "view_for",
]
