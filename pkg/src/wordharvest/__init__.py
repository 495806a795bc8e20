"""Lifelong-learning word spotting and label harvesting for scanned
handwritten document collections.

The pipeline: binarize page scans, carve text lines and word zones,
describe zones as visual-word histograms, train per-class models whose
form follows the label count, rank unlabeled zones into hit lists, and
feed confirmed labels back through an append-only event log that drives
retraining. Uncertainty curves over each class's score distribution
steer the labeler toward the classes where labels buy the most.
"""

from .errors import (
    ConflictError,
    DomainError,
    ExpiredTokenError,
    MigrationError,
    NotTrainedError,
    ParameterError,
    UnknownTokenError,
    WordharvestError,
)
from .imaging import (
    InkProfile,
    MorphParams,
    binarize,
    elastic_morph,
    ink_profile,
    load_page,
    load_pgm,
    otsu_threshold,
    render_word,
    save_pgm,
    synth_word,
)
from .segmentation import (
    FillResult,
    LineBand,
    WordZone,
    carve_seam,
    fill_background,
    make_zone_id,
    oversegment_words,
    refine_with_seams,
    segment_lines,
    zone_iou,
)
from .features import (
    Codebook,
    FeatureVector,
    PatchConfig,
    build_codebook,
    extract_descriptors,
    kmeans,
    quantize,
)
from .ballpark import (
    CapacityQuery,
    ClassModel,
    Regime,
    Sample,
    TrainConfig,
    capacity_estimate,
    classify,
    select_ballpark,
    split_class_experiment,
    train_class,
    train_linear_svm,
)
from .ranking import (
    HitEntry,
    HitList,
    LabelingEffect,
    Prospect,
    UncertaintyCurves,
    hit_score,
    labeling_effect,
    near_boundary_count,
    prospect_score,
    rank_hitlist,
    uncertainty_curves,
)
from .harvest import (
    Engine,
    EngineConfig,
    EventLog,
    LabelDraft,
    LabelEvent,
    SessionReport,
    harvest_curve,
    peak_rate,
    replay_session,
    simulate_user,
)
from .corpus import (
    CorpusSpec,
    SyntheticCorpus,
    corpus_digest,
    generate_corpus,
    load_corpus,
    prepare_engine,
    write_corpus,
)
from .store import (
    DownloadToken,
    ExportStore,
    build_index,
    export_pagexml,
    export_transcription,
    export_wordlist,
    load_collection,
    persist_collection,
)

__version__ = "0.1.0"
