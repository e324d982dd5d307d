"""Memory-aware neural architecture search.

A numpy library implementing grow/trim candidate generation over a blocked
cell template, lifetime-based peak-memory estimation for intermediate values,
a lambda-weighted accuracy/memory efficiency metric, a recurrent set-ranking
controller with hand-written backprop, ranking-quality metrics, pluggable
accuracy evaluators, and a round-based search engine tying them together.
"""

from .arch import (
    Block,
    Cell,
    CombineMode,
    CombineSpec,
    NetworkArch,
    OpKind,
    TensorShape,
    canonical_hash,
    decode_tuple,
    default_arch,
    encode_tuple,
    infer_shapes,
    validate,
)
from .engine import CandidateRecord, RoundRecord, SearchConfig, SearchEngine
from .evaluate import (
    EvalRequest,
    EvalResult,
    ExternalEvaluator,
    SyntheticConfig,
    SyntheticEvaluator,
    external_evaluate,
    synthetic_accuracy,
)
from .generate import (
    generate_candidates,
    grow_candidates,
    search_space_sizes,
    trim_candidates,
)
from .memory import (
    LifetimeTable,
    MemoryEstimate,
    estimate_memory,
    levelized_schedule,
    param_memory,
    peak_intermediate_memory,
    weight_count,
)
from .metric import MetricInputs, efficiency
from .ranking import RankingPair, ap_at_k, compare_controllers, ndcg_at_k

__version__ = "0.1.0"

__all__ = [
    "Block",
    "CandidateRecord",
    "Cell",
    "CombineMode",
    "CombineSpec",
    "EvalRequest",
    "EvalResult",
    "ExternalEvaluator",
    "LifetimeTable",
    "MemoryEstimate",
    "MetricInputs",
    "NetworkArch",
    "OpKind",
    "RankingPair",
    "RoundRecord",
    "SearchConfig",
    "SearchEngine",
    "SyntheticConfig",
    "SyntheticEvaluator",
    "TensorShape",
    "ap_at_k",
    "canonical_hash",
    "compare_controllers",
    "decode_tuple",
    "default_arch",
    "efficiency",
    "encode_tuple",
    "estimate_memory",
    "external_evaluate",
    "generate_candidates",
    "grow_candidates",
    "infer_shapes",
    "levelized_schedule",
    "ndcg_at_k",
    "param_memory",
    "peak_intermediate_memory",
    "search_space_sizes",
    "synthetic_accuracy",
    "trim_candidates",
    "validate",
    "weight_count",
]
