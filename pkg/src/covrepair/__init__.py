"""covrepair: minimal synthetic augmentation to repair dataset coverage.

Pipeline pieces, importable a la carte:

- schema / patterns: catalogs, coverage counting, maximal uncovered patterns
- selection: combination-selection solvers (greedy, baselines, exact)
- distribution: one-class SVM gate over embeddings
- quality: human-label hypothesis-test gate
- guides / masks: guide tuple strategies (incl. LinUCB) and mask delineation
- generator: mock and live generation backends plus the cost ledger
- orchestrator: end-to-end repair runs with persistence and resume
- service: HTTP facade and the evaluation task queue
"""

from .distribution import (
    KernelSpec,
    OcsvmModel,
    distribution_test,
    kernel_eval,
    train_ocsvm,
)
from .errors import CovRepairError
from .generator import CostLedger, MockGenerator, MockScenario, build_prompt
from .guides import BanditState, Guide, build_similar_pool, select_guide, similar
from .masks import MaskLevel, delineate_mask, read_pgm_mask, write_pgm_mask
from .orchestrator import RepairRun, RunConfig, disparity, repair_run, resume_run
from .patterns import (
    InvertedIndex,
    MupSet,
    Pattern,
    coverage_count,
    find_mups,
    matches,
    min_level_mups,
    parse_pattern,
    pattern_to_string,
)
from .quality import (
    CalibrationSample,
    EvaluationBatch,
    calibrate_p,
    p_value_lower_tail,
    quality_test,
    t_statistic,
)
from .schema import AttributeSchema, Attribute, Dataset, TupleRecord, load_dataset
from .selection import (
    AugmentationPlan,
    GapTable,
    compute_gaps,
    greedy_plan,
    max_matching_combination,
    min_gap_plan,
    optimal_plan_bruteforce,
    random_plan,
    vc_decision,
    vc_reduce,
)

__version__ = "0.1.0"
