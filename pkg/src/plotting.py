"""
Static SVG rendering of a band: shaded band, centre line and an optional
reference curve. Requires the optional matplotlib dependency
(pip install .[plot]).
"""

import io
from typing import Callable, Optional

import numpy as np

try:
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    MATPLOTLIB_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on the environment
    MATPLOTLIB_AVAILABLE = False

from src.bands import BandResult

# Fixed salt keeps SVG element ids stable between runs.
_SVG_RC = {"svg.hashsalt": "mar-bands", "svg.fonttype": "none"}


class PlottingError(Exception):
    """Raised when a plot cannot be rendered."""
    pass


def render_band_svg(
    band: BandResult,
    reference: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    title: Optional[str] = None,
) -> str:
    """
    SVG text for the band on its usable grid points.

    Raises:
        PlottingError: If matplotlib is not installed
    """
    if not MATPLOTLIB_AVAILABLE:
        raise PlottingError("plotting requires matplotlib; install with: pip install .[plot]")

    usable = band.usable
    x = band.grid[usable]
    with matplotlib.rc_context(_SVG_RC):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.add_subplot(1, 1, 1)
        ax.fill_between(x, band.lower[usable], band.upper[usable], color="tab:blue", alpha=0.2,
                        label=f"{(1 - band.alpha) * 100:g}% band")
        ax.plot(x, band.mhat[usable], color="tab:blue", linewidth=1.5, label="estimate")
        if reference is not None:
            ax.plot(x, reference(x), color="black", linestyle="--", linewidth=1.0, label="reference")
        ax.set_xlabel("x")
        ax.set_ylabel("m(x)")
        ax.set_title(title or f"{band.method} band, n={band.n}, {band.kernel} kernel")
        ax.legend(loc="best")
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
    return buffer.getvalue()
