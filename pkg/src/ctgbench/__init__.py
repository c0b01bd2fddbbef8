"""Synthetic cardiotocography outcome-classification benchmark.

Everything runs on constructed cohorts with known, controllable structure:
signal generation, preprocessing, three small model families trained with a
self-contained reverse-mode engine, an ablation suite, an offline-testable
remote-classifier arm, and a manifest-driven harness with verifiable runs.
"""

from .ablation import run_limited_data, run_temporal, run_toco_removal, subsample_limited
from .autodiff import GradTape, Tensor, backward, grad_check
from .errors import (
    ConfigurationError,
    ContractError,
    CtgBenchError,
    DivergenceError,
    LengthError,
    ManifestError,
    NumericError,
    ParameterError,
    RemoteFailureError,
    RemoteTimeoutError,
    ShapeError,
    StateError,
    StratificationError,
    SupplyError,
    UndefinedMetricError,
    VerdictParseError,
    VocabularyError,
)
from .generate import REGIMES, GeneratorParams, generate_cohort
from .manifest import (
    AblationSpec,
    ExperimentManifest,
    ModelSpec,
    default_manifest,
    load_manifest,
    parse_manifest,
    save_manifest,
)
from .metrics import MetricsReport, auroc, auroc_rank, auroc_sweep, confusion_at
from .models import ConvAttnClassifier, PatchTransformerClassifier, TinyLmClassifier, attach_lora, build
from .records import APO, NPO, CtgRecord, admit, load_cohort, quality, save_cohort
from .remote import (
    HttpTransport,
    MockTransport,
    PromptTemplate,
    RemoteVerdict,
    RetryPolicy,
    build_prompt,
    classify_cohort,
    classify_remote,
    evaluate_remote,
    load_template,
    parse_verdict,
)
from .report import render_report
from .runner import RunRecord, check_run, execute, rerun_ablations
from .text import Vocabulary, default_vocabulary, parse_serialized, serialize_text
from .training import EarlyStopper, FitResult, TrainConfig, finetune_lora, fit, make_balanced_test, split
from .transforms import (
    Preprocessor,
    downsample,
    mask_segments,
    pad_to,
    shuffle_chunks,
    stride_sample,
    zero_toco,
)

__version__ = "0.1.0"
