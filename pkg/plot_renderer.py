"""
LeakBound - Plot Renderer
Line plots of MI curves, success-rate bounds, attack results, q_min and convergence, saved as SVG.
"""

from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from attack import AttackResult
from bounds import BoundReport
from mi_estimation import I_UYT, I_XYT, ConvergencePoint, MiCurve


class PlotRenderer:
    """Renders experiment results to SVG line plots."""

    def __init__(self, width: float = 7.0, height: float = 4.5):
        """
        Args:
            width: figure width in inches
            height: figure height in inches
        """
        self.figsize = (width, height)
        self.bound_color = "black"
        self.grid_alpha = 0.3
        # SVG output carries a timestamp unless the date is pinned
        self.metadata = {"Date": None}

    def _new_axes(self, title: str, xlabel: str, ylabel: str):
        fig, ax = plt.subplots(figsize=self.figsize)
        ax.set_title(title)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=self.grid_alpha)
        return fig, ax

    def _save(self, fig, output_path: Path) -> str:
        try:
            output_path.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(output_path, format="svg", bbox_inches="tight", metadata=self.metadata)
            return str(output_path)
        finally:
            plt.close(fig)

    def plot_mi_curves(self, curves: Dict[float, Sequence[MiCurve]], output_path: Path,
                       capacity: Optional[Dict[float, np.ndarray]] = None) -> str:
        """
        MI versus q, one series per (kind, sigma^2).

        Args:
            curves: sigma^2 -> (I_XYT, I_UYT)
            output_path: SVG destination
            capacity: optional sigma^2 -> capacity line, drawn dotted
        """
        fig, ax = self._new_axes("Mutual information vs number of traces", "q", "bits")
        for sigma2, pair in curves.items():
            for curve in pair:
                style = "-" if curve.kind == I_XYT else "--"
                ax.plot(curve.grid.points, curve.clamped(), style,
                        label=f"{curve.kind} σ²={sigma2:g}")
            if capacity is not None and sigma2 in capacity:
                ax.plot(pair[0].grid.points, capacity[sigma2], ":", color=self.bound_color,
                        label=f"capacity σ²={sigma2:g}")
        ax.legend(fontsize="small")
        return self._save(fig, output_path)

    def plot_bounds(self, reports: Sequence[BoundReport], output_path: Path,
                    attacks: Optional[Dict[float, AttackResult]] = None) -> str:
        """Success-rate ceilings per noise level, with measured ML success rates when given."""
        fig, ax = self._new_axes("Success-rate bounds", "q", "success rate")
        for report in reports:
            sigma2 = report.config.sigma2
            line, = ax.plot(report.grid.points, report.ps_upper_uyt, "-",
                            label=f"bound {I_UYT} σ²={sigma2:g}")
            ax.plot(report.grid.points, report.ps_upper_xyt, ":", color=line.get_color(),
                    label=f"bound {I_XYT} σ²={sigma2:g}")
            if attacks and sigma2 in attacks:
                self._draw_attack(ax, attacks[sigma2], sigma2, line.get_color())
        ax.set_ylim(0.0, 1.02)
        ax.legend(fontsize="small")
        return self._save(fig, output_path)

    def _draw_attack(self, ax, result: AttackResult, sigma2: float, color=None):
        ax.errorbar(result.grid.points, result.success_rate,
                    yerr=[result.success_rate - result.ci_low, result.ci_high - result.success_rate],
                    fmt="o", markersize=3, capsize=2, color=color, label=f"ML σ²={sigma2:g}")

    def plot_attack(self, results: Dict[float, AttackResult], output_path: Path,
                    ceilings: Optional[Dict[float, pd.DataFrame]] = None) -> str:
        """Measured success rate with Wilson intervals; overlays Fano ceilings from bounds.csv."""
        fig, ax = self._new_axes("ML attack success rate", "q", "success rate")
        for sigma2, result in results.items():
            self._draw_attack(ax, result, sigma2)
            if ceilings and ceilings.get(sigma2) is not None:
                series = ceilings[sigma2]
                ax.plot(series["q"], series["ps_ceiling_uyt"], "-", color=self.bound_color,
                        linewidth=1, label=f"bound σ²={sigma2:g}")
        ax.set_ylim(0.0, 1.02)
        ax.legend(fontsize="small")
        return self._save(fig, output_path)

    def plot_q_min(self, reports: Sequence[BoundReport], output_path: Path,
                   empirical: Optional[Dict[float, Optional[int]]] = None) -> str:
        """Predicted (and measured) minimum number of traces versus sigma^2."""
        fig, ax = self._new_axes("Minimum number of traces", "σ²", "q_min")
        sigma2s = [r.config.sigma2 for r in reports]
        series = {
            f"Fano {I_UYT}": [r.q_min_uyt for r in reports],
            f"Fano {I_XYT}": [r.q_min_xyt for r in reports],
            "linear": [r.q_min_linear for r in reports],
        }
        if empirical:
            series["ML attack"] = [empirical.get(s) for s in sigma2s]
        for label, values in series.items():
            ys = [np.nan if v is None else v for v in values]
            ax.plot(sigma2s, ys, "o-", label=label)
        ax.set_yscale("log")
        ax.legend(fontsize="small")
        return self._save(fig, output_path)

    def plot_convergence(self, sweeps: Dict[float, Sequence[ConvergencePoint]],
                         output_path: Path) -> str:
        """MI estimate with one-standard-error bars against the number of draws."""
        fig, ax = self._new_axes("Monte-Carlo convergence", "N_C", "bits")
        for sigma2, sweep in sweeps.items():
            n = [p.n_draws for p in sweep]
            for kind, attr in ((I_XYT, "i_xyt"), (I_UYT, "i_uyt")):
                estimates = [getattr(p, attr) for p in sweep]
                ax.errorbar(n, [e.value for e in estimates], yerr=[e.std_error for e in estimates],
                            fmt="o-", capsize=3, label=f"{kind} σ²={sigma2:g}")
        ax.set_xscale("log")
        ax.legend(fontsize="small")
        return self._save(fig, output_path)
