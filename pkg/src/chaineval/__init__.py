"""Reference-free evaluation of multi-step reasoning chains.

Scores chains on two axes: correctness (does each step's conclusion
follow from its premises and from prior information) and informativeness
(does each step add usable information toward the predicted answer).
Includes perturbation-based corpus generation and rank-correlation
meta-evaluation of the metrics themselves.
"""

from .backends import (
    BackendError,
    NliJudgment,
    PviTrainingExample,
    RemoteScorerClient,
    StubScorerTable,
    conditional_pvi,
    emit_pvi_training_data,
    pvi,
)
from .chains import (
    ChainFormatError,
    ChainScore,
    Diagnostics,
    Rcu,
    ReasoningChain,
    Step,
    StepScore,
    load_chains,
    load_scores,
    save_chains,
    save_scores,
)
from .evaluator import (
    ApiReport,
    Backends,
    EvaluationError,
    EvaluatorConfig,
    RerankResult,
    api_analysis,
    evaluate_chain,
    evaluate_chains,
    rerank,
)
from .meta import MetaEvalReport, format_table, meta_evaluate, somers_d
from .metrics import (
    MetricConfig,
    info_gain,
    inter_correct,
    intra_correct_entail,
    intra_correct_no_contr,
    intra_correct_pvi,
)
from .perturb import (
    EntailmentTree,
    LexiconParaphraser,
    PerturbationError,
    PerturbationRecord,
    TreeNode,
    linearize,
    perturb,
)
from .segmenter import (
    ClauseFramePredictor,
    Frame,
    Modifier,
    RecordedFramePredictor,
    RemoteFramePredictor,
    classify_rcus,
    segment_chain,
    segment_step,
    select_units,
)

__version__ = "0.1.0"
