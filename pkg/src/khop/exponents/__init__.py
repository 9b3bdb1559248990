"""Single-letter exponent quantities: eta curves, the K-hop region and Wyner-Ziv rates."""
from .eta import (
    EtaCurve,
    EtaCurveEstimator,
    EtaSolution,
    eta,
    eta_curve,
    eta_oracle,
    lagrangian_sweep,
    upper_concave_envelope,
)
from .region import (
    ExponentRegion,
    curves_csv,
    exponent_region,
    hop_pairs,
    lossless_bound,
    region_csv,
    region_from_pmf,
)
from .wynerziv import (
    DistortionSpec,
    WynerZivEstimator,
    WynerZivSolution,
    dsbs_hamming_rate,
    wyner_ziv_grid_oracle,
    wyner_ziv_rmin,
)

__all__ = [
    "DistortionSpec", "EtaCurve", "EtaCurveEstimator", "EtaSolution", "ExponentRegion",
    "WynerZivEstimator", "WynerZivSolution", "curves_csv", "dsbs_hamming_rate", "eta", "eta_curve",
    "eta_oracle", "exponent_region", "hop_pairs", "lagrangian_sweep", "lossless_bound", "region_csv",
    "region_from_pmf", "upper_concave_envelope", "wyner_ziv_grid_oracle", "wyner_ziv_rmin",
]
