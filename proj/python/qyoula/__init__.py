from ._qyoula import (
    Error,
    StateSpace,
    check_physical_realizability,
    coprime_factorization,
    h2_norm_sq,
    hinf_norm,
    hinf_report,
    run,
    slh_to_statespace,
    verification_grid,
)

__version__ = "0.1.0"
