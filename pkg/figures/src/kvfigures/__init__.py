"""Plot scripts for reconstruction outputs: exact-vs-recovered overlays,
error-history curves, and 2D heatmap pairs.

Pure file-to-file transformations over the CSV formats written by the
kvrecon command line (potential.csv, history.csv); no numerical work beyond
axis scaling.
"""

from .heatmap import plot_heatmap_2d
from .history import plot_error_history
from .potential import plot_potential

__version__ = "0.1.0"
