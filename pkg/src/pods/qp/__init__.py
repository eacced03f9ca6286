from .factor import BenchReport, LDLFactor, SymbolicFactor, analyze, bench_factorization, factorize
from .ipm import (
    Duals,
    Portfolio,
    QpProblem,
    RiskModel,
    SolveStats,
    solve_markowitz,
    solve_min_risk,
    solve_qp,
)
