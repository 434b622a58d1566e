import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from otalign.utilities import default_lambda

ACTIVE_CELL = "#"
FAINT_CELL = "+"
EMPTY_CELL = "."


def text_heatmap(plan, lam=None):
    """
    One character per pair: '#' for active entries, '+' for entries above
    a tenth of the threshold and '.' elsewhere.
    """
    if lam is None:
        lam = default_lambda(plan.n, plan.m)

    lines = []
    for row in plan.values:
        lines.append(
            "".join(
                ACTIVE_CELL if v > lam else FAINT_CELL if v > lam / 10 else EMPTY_CELL
                for v in row
            )
        )
    return "\n".join(lines)


def svg_heatmap(plan, path, lam=None, title=None):
    """Writes the plan as a shaded grid with active cells outlined"""
    if lam is None:
        lam = default_lambda(plan.n, plan.m)

    n, m = plan.shape
    fig, ax = plt.subplots(figsize=(max(3.0, 0.3 * m + 1), max(3.0, 0.3 * n + 1)))
    try:
        ax.imshow(plan.values, cmap="Greys", vmin=0.0, interpolation="nearest")
        for i, j in zip(*np.nonzero(plan.values > lam)):
            ax.add_patch(
                Rectangle(
                    (j - 0.5, i - 0.5), 1, 1, fill=False, edgecolor="tab:red", linewidth=1.5
                )
            )
        ax.set_xlabel("Second document")
        ax.set_ylabel("First document")
        if title:
            ax.set_title(title)
        fig.savefig(path, format="svg", bbox_inches="tight")
    finally:
        plt.close(fig)
    return path
