"""
LeakBound - Main Orchestrator
Runs the MI, bound, attack, convergence and oracle experiments from a configuration
file and writes CSV tables and SVG plots.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from attack import AttackConfig, AttackResult, empirical_ki_khat, q_min_empirical, success_rate_curve
from bounds import build_bound_report, capacity_bound, snr_of
from experiment_config import COMMANDS, PROFILE_DRAWS, ConfigError, ExperimentConfig, load_config
from leakage_core import LeakageConfig, SeededRng
from mi_estimation import I_UYT, I_XYT, QGrid, convergence_sweep, estimate_mi_curves
from oracle import mi_exact_small
from plot_renderer import PlotRenderer
from result_tables import (
    Provenance,
    attack_rows,
    bound_rows,
    channel_mismatch,
    convergence_rows,
    load_bound_ceilings,
    load_mi_curves,
    mi_curve_rows,
    q_min_row,
    read_provenance,
    write_table,
)


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


class LeakBound:
    """Orchestrates one experiment configuration across its noise levels."""

    def __init__(self, config: ExperimentConfig, threads: int = 1,
                 verbose: bool = True, progress: Optional[bool] = None):
        """
        Args:
            config: validated experiment configuration
            threads: joblib worker count; results do not depend on it
            verbose: print status lines
            progress: show tqdm bars (defaults to verbose)
        """
        if threads < 1:
            raise ConfigError(f"threads must be >= 1, got {threads}")
        self.config = config
        self.threads = threads
        self.verbose = verbose
        self.progress = verbose if progress is None else progress
        self.rng = SeededRng(config.seed)
        self.renderer = PlotRenderer()

        self.output_dir = Path(config.output_dir)
        self.provenance = Provenance.for_channel(config.seed, config.n_draws, config.config_hash,
                                                 config.leakage_configs()[0], config.sbox_seed)

    def _log(self, message: str):
        if self.verbose:
            print(message)

    def _mi_curves(self, leakage: LeakageConfig, grid: QGrid):
        self._log(f"🎲 Estimating MI curves for σ²={leakage.sigma2:g} "
                  f"({self.config.n_draws} draws, q up to {grid.q_max})...")
        xyt, uyt = estimate_mi_curves(leakage, grid, self.config.n_draws, self.rng,
                                      threads=self.threads, progress=self.progress)
        for curve in (xyt, uyt):
            if curve.negative_count:
                self._log(f"⚠️  {curve.kind} σ²={leakage.sigma2:g}: {curve.negative_count} "
                          f"negative raw estimates (kept in CSV, clamped in plots)")
        return xyt, uyt

    def compute_mi(self) -> Dict[float, tuple]:
        """sigma^2 -> (I_XYT, I_UYT) for every configured noise level."""
        return {leakage.sigma2: self._mi_curves(leakage, self.config.q_grid)
                for leakage in self.config.leakage_configs()}

    def cmd_mi(self) -> Dict[str, str]:
        """Write mi_curves.csv and the MI plot, with capacity lines for masked runs."""
        self.config.validate_for("mi")
        self._log("🚀 Starting MI experiment...")
        curves = self.compute_mi()

        rows = mi_curve_rows([c for pair in curves.values() for c in pair])
        csv_path = write_table(self.output_dir / "mi_curves.csv", "mi_curves", rows, self.provenance)
        self._log(f"✅ MI curves saved to: {csv_path}")

        capacity = None
        if self.config.masked:
            capacity = {
                sigma2: np.array([capacity_bound(q, snr_of(pair[0].config))
                                  for q in self.config.q_grid.points])
                for sigma2, pair in curves.items()
            }
        plot_path = self.renderer.plot_mi_curves(curves, self.output_dir / "mi_curves.svg", capacity)
        self._log(f"✅ Plot saved to: {plot_path}")
        return {"csv": str(csv_path), "plot": plot_path}

    def _attack(self, leakage: LeakageConfig) -> AttackResult:
        self._log(f"⚔️  Running {self.config.n_attacks} ML attacks for σ²={leakage.sigma2:g}...")
        attack_config = AttackConfig(leakage, self.config.q_grid, self.config.n_attacks,
                                     self.config.seed, self.config.confusion_q)
        return success_rate_curve(attack_config, threads=self.threads, progress=self.progress)

    def cmd_bound(self) -> Dict[str, str]:
        """Write bounds.csv, qmin.csv and the bound and q_min plots."""
        self.config.validate_for("bound")
        self._log("🚀 Starting bound experiment...")
        leakages = self.config.leakage_configs()
        grid = self.config.q_grid

        curves = load_mi_curves(self.output_dir / "mi_curves.csv", self.config.config_hash,
                                leakages, grid)
        if curves is None:
            curves = self.compute_mi()
        else:
            self._log("📂 Reusing MI curves from mi_curves.csv")

        reports = []
        attacks: Dict[float, AttackResult] = {}
        empirical: Dict[float, Optional[int]] = {}
        bound_table: List[Dict] = []
        q_min_table: List[Dict] = []
        for leakage in leakages:
            xyt, uyt = curves[leakage.sigma2]
            self._log(f"📐 Bounds for σ²={leakage.sigma2:g}")
            report = build_bound_report(xyt, uyt, self.config.target_ps)
            reports.append(report)
            bound_table.extend(bound_rows(report))

            if self.config.compare_attack:
                attacks[leakage.sigma2] = self._attack(leakage)
                empirical[leakage.sigma2] = q_min_empirical(attacks[leakage.sigma2],
                                                            self.config.target_ps)
            q_min_table.append(q_min_row(report, empirical.get(leakage.sigma2),
                                         attacked=self.config.compare_attack))

        bounds_path = write_table(self.output_dir / "bounds.csv", "bounds", bound_table,
                                  self.provenance)
        q_min_path = write_table(self.output_dir / "qmin.csv", "qmin", q_min_table, self.provenance)
        self._log(f"✅ Bounds saved to: {bounds_path}")
        self._log(f"✅ q_min table saved to: {q_min_path}")

        bound_plot = self.renderer.plot_bounds(reports, self.output_dir / "bounds.svg", attacks)
        q_min_plot = self.renderer.plot_q_min(reports, self.output_dir / "qmin.svg", empirical)
        return {"bounds": str(bounds_path), "qmin": str(q_min_path),
                "bounds_plot": bound_plot, "qmin_plot": q_min_plot}

    def _bound_ceiling_source(self) -> Optional[Path]:
        """bounds.csv from an earlier bound run on the same channel, if there is one."""
        path = self.output_dir / "bounds.csv"
        if not path.exists():
            return None
        mismatch = channel_mismatch(read_provenance(path), self.config.leakage_configs()[0],
                                    self.config.sbox_seed)
        if mismatch is not None:
            self._log(f"⚠️  Not overlaying {path}: it was written for another channel ({mismatch})")
            return None
        return path

    def cmd_attack(self) -> Dict[str, str]:
        """Write attack_sr.csv and the attack plot, overlaying ceilings from bounds.csv."""
        self.config.validate_for("attack")
        self._log("🚀 Starting attack experiment...")
        results = {}
        ceilings = {}
        rows = []
        ceiling_source = self._bound_ceiling_source()
        for leakage in self.config.leakage_configs():
            result = self._attack(leakage)
            results[leakage.sigma2] = result
            rows.extend(attack_rows(leakage.sigma2, result))
            if result.total_ties:
                self._log(f"⚠️  {result.total_ties} argmax ties broken to the smallest key")
            for q, matrix in result.confusion.items():
                self._log(f"📊 I(K;K̂) at q={q}: {empirical_ki_khat(matrix):.4f} bits")
            if ceiling_source is not None:
                ceilings[leakage.sigma2] = load_bound_ceilings(ceiling_source, leakage.sigma2)

        csv_path = write_table(self.output_dir / "attack_sr.csv", "attack_sr", rows, self.provenance)
        self._log(f"✅ Success rates saved to: {csv_path}")
        plot_path = self.renderer.plot_attack(results, self.output_dir / "attack_sr.svg", ceilings)
        return {"csv": str(csv_path), "plot": plot_path}

    def cmd_converge(self) -> Dict[str, str]:
        """Write convergence.csv: MI at q_fixed for each Monte-Carlo size."""
        self.config.validate_for("converge")
        self._log("🚀 Starting convergence experiment...")
        sweeps = {}
        rows = []
        for leakage in self.config.leakage_configs():
            self._log(f"🎲 Convergence sweep for σ²={leakage.sigma2:g} at q={self.config.q_fixed}")
            sweep = convergence_sweep(leakage, self.config.q_fixed, self.config.n_draws_list,
                                      self.rng, threads=self.threads, progress=self.progress)
            sweeps[leakage.sigma2] = sweep
            rows.extend(convergence_rows(leakage.sigma2, sweep))

        draws = ",".join(str(n) for n in self.config.n_draws_list)
        csv_path = write_table(self.output_dir / "convergence.csv", "convergence", rows,
                               replace(self.provenance, n_draws=draws))
        self._log(f"✅ Convergence table saved to: {csv_path}")
        plot_path = self.renderer.plot_convergence(sweeps, self.output_dir / "convergence.svg")
        return {"csv": str(csv_path), "plot": plot_path}

    def cmd_oracle(self) -> Dict[str, str]:
        """Write oracle.csv comparing exact and Monte-Carlo MI at tiny parameters."""
        self.config.validate_for("oracle")
        self._log("🚀 Starting oracle comparison...")
        rows = []
        for leakage in self.config.leakage_configs():
            xyt, uyt = self._mi_curves(leakage, self.config.q_grid)
            for q in self.config.q_grid.points:
                exact = dict(zip((I_XYT, I_UYT), mi_exact_small(leakage, q)))
                for curve in (xyt, uyt):
                    g = curve.grid.points.index(q)
                    mc = float(curve.values[g])
                    err = float(curve.std_errors[g])
                    rows.append({
                        "kind": curve.kind, "ell": leakage.ell, "q": q, "sigma2": leakage.sigma2,
                        "mi_exact": exact[curve.kind], "mi_mc": mc, "std_err": err,
                        "z_score": (mc - exact[curve.kind]) / err if err > 0 else 0.0,
                    })

        within = sum(abs(r["z_score"]) <= 3 for r in rows)
        self._log(f"📊 {within}/{len(rows)} estimates within 3 standard errors of exact values")
        csv_path = write_table(self.output_dir / "oracle.csv", "oracle", rows, self.provenance)
        self._log(f"✅ Oracle table saved to: {csv_path}")
        return {"csv": str(csv_path)}

    def run(self, command: str) -> Dict[str, str]:
        handlers = {
            "mi": self.cmd_mi,
            "bound": self.cmd_bound,
            "attack": self.cmd_attack,
            "converge": self.cmd_converge,
            "oracle": self.cmd_oracle,
        }
        if command not in handlers:
            raise ConfigError(f"Unknown command: {command}. Supported: {', '.join(COMMANDS)}")
        return handlers[command]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leakbound",
        description="Information-theoretic success-rate bounds for masked side-channel leakage",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="experiment configuration file")
    parser.add_argument("--threads", type=int, default=1, help="parallel workers")
    parser.add_argument("--profile", choices=tuple(PROFILE_DRAWS), default="desk",
                        help="default Monte-Carlo size when the config omits n_draws")
    parser.add_argument("--quiet", action="store_true", help="suppress status output")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.profile)
        LeakBound(config, threads=args.threads, verbose=not args.quiet).run(args.command)
    except ConfigError as e:
        print(f"❌ Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"❌ I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
