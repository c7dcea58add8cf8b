"""Optimized dynamic mode decomposition for gridded spatio-temporal data.

Exact DMD, variable-projection optimized DMD with eigenvalue constraints,
bagged ensembles (BOP-DMD), plus the preprocessing and forecast-error
diagnostics used around them.
"""
from .errors import (CorruptFileError, DivergentBasisError, InitializationError,
                     RankDeficiencyError, ValidationError)
from .gridstore import (GridMeta, SnapshotMatrix, SnapshotSet, TimeGrid, load_snapshots,
                        save_snapshots)
from .model import DmdModel, evaluate, relative_error
from .exactdmd import fit_exact
from .varpro import (EigConstraint, SolveInfo, VarProOptions, eval_basis, project_eigs,
                     solve_varpro)
from .optdmd import ErrorCurve, fit_optdmd, rank_scan, select_rank
from .bopdmd import (BagSpec, Ensemble, EnsembleStats, align_to_reference, draw_bag,
                     ensemble_stats, fit_ensemble)
from .metrics import (ForecastReport, GaussianFit, daily_error_report,
                      gaussian_fit_histogram, trimmed_sample)
from .preprocess import DayMask, ShiftPlan, isolate_daytime, shift_local_time, unshift_local_time

__version__ = "0.1.0"
