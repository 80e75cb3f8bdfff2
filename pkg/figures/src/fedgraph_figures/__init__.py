"""Figure rendering for fedgraph result CSVs."""

from .plots import (
    plot_error_vs_corruption,
    plot_error_vs_num_devices,
    plot_learning_curves,
    read_rows,
)

__version__ = "0.1.0"
