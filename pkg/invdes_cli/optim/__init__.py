from .adam import GDConfig, AdamState, adam_step, clip_by_global_norm, global_norm
from .records import CSV_COLUMNS, IterationRow, OptRunRecord, read_record_csv
from .cem import CEMConfig, cem_step, cem_optimize, select_elites, sample_population, candidate_rng, ELITE_MEAN, \
    PREVIOUS_MEAN
from .gd import gd_optimize
from .objectives import objective_model, objective_model_single, objective_oracle, value_model, model_terms, \
    oracle_terms, evaluate_design, ModelObjective, OracleObjective, DesignEvaluation
