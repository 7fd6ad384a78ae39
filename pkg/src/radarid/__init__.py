"""Object recognition from millimeter-wave radar point clouds.

The pipeline: sparse point-cloud frames are reduced to per-frame statistic
rows, standardized, and slid into 40-row windows; a fully connected or 1-D
convolutional recognizer classifies them, optionally hardened against domain
shift with adversarial (gradient-reversal) adaptation. A seeded synthetic
generator and a cross-domain experiment grid make the whole evaluation
structure reproducible without the physical radar.
"""

from .datamodel import (
    AMBIENCES,
    CHANNELS,
    FEATURE_DIM,
    FRAME_RATE_HZ,
    RADAR_STATES,
    WINDOW_LENGTH,
    WINDOW_ROWS,
    ClassLabel,
    DomainTag,
    Finding,
    LabeledExample,
    LabelSet,
    PointDetection,
    RadarFrame,
    validate_recording,
)
from .estimators import CnnClassifier, DomainAdversarialCnnClassifier, FclClassifier
from .evaluation import confusion, micro_f1, predict
from .features import (
    FeatureScaler,
    FrameStatistics,
    ScalerParams,
    SlidingWindows,
    apply_scaler,
    fit_scaler,
    frame_features,
    make_windows,
    recording_features,
    scale_windows,
)
from .grid import (
    METHOD_ORDER,
    CellResult,
    ExperimentGrid,
    GridRow,
    ReportTable,
    cross_distance_rows,
    cross_height_rows,
    emit_report,
    run_grid,
)
from .ingest import (
    DatasetManifest,
    LabeledFrameCollection,
    ManifestEntry,
    Recording,
    SplitResult,
    assemble_dataset,
    load_manifest,
    parse_points_csv,
    points_csv_bytes,
    save_manifest,
    stratified_indices,
    stratified_split,
    write_points_csv,
)
from .models import ModelGraph, build_cnn, build_fcl, gradient_check
from .synthgen import (
    SynthClassSpec,
    SynthDomainSpec,
    SynthSuite,
    centroid_classify,
    default_suite,
    dynamic_suite,
    generate_recording,
)
from .training import (
    DomainPair,
    EpochStats,
    TrainConfig,
    TrainRun,
    load_checkpoint,
    save_checkpoint,
    train_ssda,
    train_supervised,
    train_uda,
    write_history_csv,
)

__version__ = "0.1.0"
