"""subspot: subtitle-OCR frame streams -> pseudo-labeled speech datasets.

Pipeline pieces: character-level metrics (edit distance, relative edit
distance, CER, error breakdown), frame ingestion and span arithmetic,
heuristic and oracle-refined frame merging, manifest curation with the
iterative drop-ratio noise filter, and a synthetic corpus generator for
end-to-end evaluation.
"""

from .curation import (
    ConfigError,
    FilterReport,
    Manifest,
    ManifestError,
    ManifestMetadata,
    filter_iteration,
    load_manifest,
    manifest_digest,
    run_curation_loop,
    score_noise,
    serialize_manifest,
    write_manifest,
)
from .frames import (
    AudioSpan,
    FrameRecord,
    GapError,
    OrderError,
    ParseError,
    concat_spans,
    dump_frames,
    load_frames,
    span_of,
)
from .merging import (
    MergeConfig,
    Provenance,
    Utterance,
    merge_corpus,
    merge_video,
    should_merge_heuristic,
    should_merge_model,
)
from .oracle import (
    NoisyChannelConfig,
    OracleBackendExit,
    OracleError,
    OracleHypothesis,
    OracleProtocolViolation,
    OracleTimeout,
    ScriptedOracle,
    SimulatedOracle,
    SubprocessOracle,
    simulate_channel,
)
from .simulate import (
    GroundTruth,
    MergeEvaluation,
    SyntheticCorpusConfig,
    evaluate_merge,
    generate_corpus,
    load_ground_truth,
)
from .textmetrics import (
    DegenerateInputError,
    EditBreakdown,
    NormalizationConfig,
    NormalizedText,
    cer,
    edit_distance,
    error_breakdown,
    normalize,
    red,
)

__version__ = "0.1.0"
