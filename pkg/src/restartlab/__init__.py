"""Runtime-distribution laboratory for a probSAT-style local search solver.

Submodules:
    cnf         CNF formulas, DIMACS IO, random 3-SAT, DPLL filtering
    probsat     the stochastic local search solver and probing runs
    restart     restart policies (none / fixed cutoff / Luby) and run loop
    dist        parametric distribution kernel and restart-time calculus
    rtd         empirical runtime-distribution sampling and fitting
    features    instance feature extraction and normalization
    ml          distribution-type forest and parameter networks
    evaluation  speedups, subset tables, significance tests, head-to-head
    cli         experiment pipeline subcommands
"""

__version__ = "0.1.0"
