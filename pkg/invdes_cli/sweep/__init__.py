from .bootstrap import DEFAULT_RESAMPLES, bootstrap_ci
from .harness import ABLATIONS, AGGREGATE_COLUMNS, SweepSettings, SweepRun, RunResult, plan_runs, task_for_run, \
    run_one, run_sweep, aggregate_results, write_aggregate_csv
