"""Gradient ascent on a design objective with Adam (GD-M)."""
import time
from typing import Callable, Optional

import numpy as np

from invdes_cli.errors import InvDesError, NonFiniteError, OptimizationAborted
from invdes_cli.optim.adam import AdamState, GDConfig, adam_step, global_norm
from invdes_cli.optim.records import IterationRow, OptRunRecord

ValueAndGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]


def gd_optimize(
        initial_phi: np.ndarray,
        value_and_grad: ValueAndGrad,
        cfg: GDConfig,
        oracle_eval: Optional[Callable[[np.ndarray], float]] = None,
) -> OptRunRecord:
    """
    Maximize J by running Adam on -J for `cfg.steps` iterations.

    Each iteration evaluates J and its gradient once at the current phi, logs them and
    takes one step. Every `cfg.eval_every` iterations J_S is logged too. A numeric
    failure raises OptimizationAborted carrying the rows logged so far.
    """
    phi = np.asarray(initial_phi, dtype=np.float64).copy()
    adam = AdamState.zeros_like(phi)
    record = OptRunRecord(optimizer="gd", simulator="model", final_phi=phi.copy())
    best = -np.inf
    for it in range(cfg.steps):
        start = time.perf_counter()
        try:
            value, grad = value_and_grad(phi)
            if not (np.isfinite(value) and np.all(np.isfinite(grad))):
                raise NonFiniteError("objective", "non-finite objective or gradient", step=it)
        except InvDesError as e:
            raise OptimizationAborted(f"GD iteration {it}: {e}", record) from e
        j_oracle = None
        if oracle_eval is not None and cfg.eval_every and it % cfg.eval_every == 0:
            j_oracle = oracle_eval(phi)
        best = max(best, float(value))
        snapshot = phi.copy()
        phi, adam = adam_step(phi, -np.asarray(grad), adam, cfg)
        record.append(IterationRow(
            iteration=it,
            phi=snapshot,
            j_model=float(value),
            j_oracle=j_oracle,
            grad_norm_or_sigma=global_norm(grad),
            evals=1,
            wallclock_ms=(time.perf_counter() - start) * 1e3,
            best_j=best,
        ))
        record.final_phi = phi.copy()
    return record
