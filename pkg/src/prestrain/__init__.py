"""Numerical toolkit for thin elastic plates with a thickness-independent prestrain metric."""

__version__ = "0.1.0"

from .metric import (Grid2, MetricError, MetricField, catalog_metric, metric_from_config,
                     metric_sqrt)
from .diffgeo import (ClassificationVerdict, CurvatureReport, Regime, classify,
                      codazzi_gauss_residual, gaussian_curvature_2d, riemann,
                      target_second_form)
from .density import (EffectiveDensityContext, IsotropicModuli, QuadraticForm3,
                      q2_isotropic_closed, q2_oracle)
from .bending import (BendingResult, Immersion, bending_energy, cosserat,
                      minimize_bending)
from .scaling import (DensityKind, DensityW, Deformation3, ScalingReport, energy_3d,
                      fit_scaling, recovery_ciag, recovery_kirchhoff, recovery_koko)
from .nematic import (DirectorField, PatternSpec, director_from_params, nematic_classify,
                      nematic_metric, nematic_q2)

__all__ = [name for name in dir() if not name.startswith("_")]
