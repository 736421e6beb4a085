"""Few-shot, validation-free adaptation of vision-language embedding
classifiers under realistic class imbalance: training-free text-regularized
solvers, gradient-trained baselines, scenario samplers, and a benchmark
harness."""

from .adapters import (
    AdapterSpec,
    FitResult,
    TrainConfig,
    cosine_lr,
    fit_adapter,
    fit_clip_adapter,
    fit_probe,
    loss_value_and_grad,
    sgd_train,
    tip_free_logits,
)
from .config import BenchConfig, TaskConfig, load_config, parse_config
from .core import (
    ClassifierHead,
    EmbeddingTable,
    TextPrototypeSet,
    build_zeroshot_head,
    cosine_logits,
    l2_normalize,
    predict,
    softmax,
)
from .evaluation import EvalReport, RunRecord, aggregate, balanced_accuracy, scenario_drop
from .harness import (
    lambda_ablation_adapters,
    load_task,
    render_report,
    run_benchmark,
    run_val_study,
)
from .interchange import load_embeddings, load_text_prototypes, write_embeddings, write_table
from .sampling import (
    LabelMarginal,
    SupportSet,
    derive_seed,
    estimate_marginal,
    sample_realistic,
    sample_relaxed,
    sample_standard,
    sample_support,
)
from .solver import (
    RegularizerConfig,
    objective_full,
    objective_g1,
    objective_g2,
    repel_prototypes,
    sstext_plus_solve,
    sstext_solve,
)
from .synth import SynthConfig, generate_task, geometric_marginal, oracle_aca

__version__ = "0.1.0"
