"""Temporal classification-history analytics.

Reconstructs a model's per-instance predictions across training epochs and
answers flow, difficulty, and table queries over them: Sankey-style
transition counts between class bins, per-instance difficulty measures, and a
rankable/filterable/groupable instance table, exposed as a library, a CLI,
and an HTTP query service.
"""

from .core import (
    OTHER_BIN,
    BinId,
    ClassSelection,
    EpochRange,
    InstanceRecord,
    TrainingRun,
    bin_of,
    build_run,
)
from .errors import (
    EngineError,
    InvalidRegexError,
    InvalidTransitionError,
    InvalidWeightsError,
    NotFoundError,
    ParseError,
    SchemaError,
    StorageError,
    UnknownAttributeError,
    UnknownInstanceError,
    ValidationError,
)
from .flow import FlowFrame, GlyphCategory, GlyphInfo, Slot, TraceSegment, band_members, compute_flow, glyph_layout, trace
from .ingest import RunDocument, RunStore, document_from_run, parse_run_document
from .metrics import (
    DifficultyScores,
    InstanceDifficulty,
    combined_score,
    frequency,
    misclassification_score,
    score_all,
    variability,
)
from .table import (
    ClassEquals,
    CombinedSort,
    EverPredicted,
    Filter,
    HasIncorrect,
    NumericRange,
    SequenceRegex,
    SortKey,
    TableMode,
    TablePage,
    TableRow,
    TableSpec,
    confusion_summary,
    filter_sequence_regex,
    query_table,
)

__version__ = "0.1.0"
