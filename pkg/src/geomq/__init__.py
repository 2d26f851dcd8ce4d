"""Geometric quantum potentials on embedded surfaces and thin-layer spectra."""
from .charts import make_chart
from .geometry import Chart, curvature_forms, metric, normal_frame
from .potentials import compare_potentials, vq_general_invariant

__version__ = "0.1.0"

__all__ = ["Chart", "compare_potentials", "curvature_forms", "make_chart", "metric",
           "normal_frame", "vq_general_invariant", "__version__"]
