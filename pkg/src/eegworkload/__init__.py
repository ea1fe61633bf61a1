"""EEG workload classification toolkit.

Spectral band log-power and fronto-parietal phase-locking features,
mixed-effects residual workload labels, SVM-driven recursive feature
elimination, and a stacked ensemble evaluated under a stratified
80-20 + k-fold protocol, with a synthetic generator for desk-scale
validation of the whole chain.
"""

__version__ = "0.1.0"

from .recordings import (
    Channel,
    Condition,
    Phase,
    Recording,
    RecordingSet,
    Region,
    TaskKind,
    canonical_montage,
    load_recording,
    lowpass_filter,
    select_montage,
    write_recording,
)
from .spectral import (
    BandDef,
    Psd,
    SpectralFeatureVector,
    band_log_power,
    baseline_normalize_spectral,
    compute_psd,
    default_bands,
    extract_spectral,
)
from .connectivity import (
    PhaseSeries,
    PlvFeatureVector,
    PlvMatrix,
    band_plv,
    baseline_normalize_plv,
    fronto_parietal_plv,
    morlet_phase,
    plv_pair,
)
from .labeling import (
    FOUR_SCALE_SET,
    LabelValue,
    MixedModelFit,
    Subscale,
    TlxRecord,
    aggregate_subscales,
    build_labels,
    fit_random_intercept_lmm,
    median_split,
    residual_labels,
    subscale_subset_search,
)
from .selection import (
    FeatureMatrix,
    FeatureRanking,
    LinearSvmModel,
    RfeConfig,
    Standardizer,
    fit_linear_svm,
    rfe,
)
from .models import (
    GridSpec,
    LogRegConfig,
    RandomForestConfig,
    StackedConfig,
    SvmConfig,
    TrainedModel,
    grid_search,
    train_logreg,
    train_random_forest,
    train_stacked,
    train_svm,
)
from .evaluation import (
    EvalConfig,
    EvalReport,
    TestResult,
    carryover_analysis,
    cross_validated_scores,
    evaluate_pipeline,
    ks_normality,
    paired_t_test,
    split_80_20,
    stratified_kfold,
)
from .extraction import ExtractionConfig, FeatureSet, extract_features
from .synth import (
    CouplingEffect,
    EffectSpec,
    PowerEffect,
    SynthDataset,
    TlxParams,
    effects_for,
    gen_dataset,
    gen_recording,
    write_dataset,
)
