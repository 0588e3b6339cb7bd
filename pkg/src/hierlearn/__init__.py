"""Active learning of probability distributions over concept hierarchies."""

from .tree_dist import (
    Arborescence,
    ConceptDomain,
    EdgeMarginals,
    EmpiricalTreeDistribution,
    NumericalDegeneracyError,
    WeightMatrix,
    contains_path,
    edge_marginals,
    enumerate_trees,
    log_partition,
    map_tree,
    sample_trees,
    tree_log_prob,
)
from .inference import (
    AnswerRecord,
    InferenceConfig,
    Question,
    QuestionKind,
    apply_answer,
    auto_beta,
    delta_step,
    empirical_edge_marginals,
    fit_weights,
    history_corrected_samples,
    path_likelihood,
    regularized_loss,
    reweight_posterior,
    update_edge_question,
)
from .querying import (
    QuestionPool,
    SelectionMode,
    SelectionPolicy,
    hypothetical_entropy,
    select_question,
)
from .growth import InsertionRequest, insert_concept
from .evaluation import (
    ExperimentSpec,
    SimulatedWorker,
    answer_query,
    auc_edges,
    run_recovery_experiment,
    run_weight_estimation_experiment,
)
from .session import (
    SessionState,
    SessionStore,
    VoteBatch,
    create_session,
    import_answers,
    next_question,
    posterior_report,
    restore,
    snapshot,
    submit_votes,
)

__version__ = "0.1.0"
