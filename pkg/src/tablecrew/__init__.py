"""tablecrew: a bi-level multi-agent runtime for web-to-table search.

An orchestrator decomposes a query into parallel subtasks; workers execute
them against a web environment while coordinating through a lock-protected
shared workboard; a run-verify-reflect loop evolves persistent skill banks;
and a table-scoring harness provides the training objective.
"""

__version__ = "0.1.0"

from .tables import Cell, Query, Table, TableSchema, parse_table, render_table
from .trajectory import SubtaskSpec, Trajectory
from .workboard import Workboard, edit_slot, init_workboard, is_converged, merge_step, read_workboard, set_status

__all__ = [
    "__version__",
    "Cell",
    "Query",
    "Table",
    "TableSchema",
    "parse_table",
    "render_table",
    "SubtaskSpec",
    "Trajectory",
    "Workboard",
    "edit_slot",
    "init_workboard",
    "is_converged",
    "merge_step",
    "read_workboard",
    "set_status",
]
