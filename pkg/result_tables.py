"""
LeakBound - Result Tables
CSV outputs with provenance comment lines above a fixed header.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from attack import AttackResult
from bounds import BoundReport
from leakage_core import LeakageConfig
from mi_estimation import I_UYT, I_XYT, ConvergencePoint, MiCurve, QGrid


NOT_REACHED = "not reached"
FLOAT_FORMAT = "%.12g"

SCHEMAS: Dict[str, Tuple[str, ...]] = {
    "mi_curves": ("kind", "sigma2", "q", "mi_bits", "std_err"),
    "bounds": ("sigma2", "q", "ps_ceiling_uyt", "ps_ceiling_xyt", "capacity_bits"),
    "qmin": ("sigma2", "q_min_uyt", "q_min_xyt", "q_min_linear", "q_min_empirical"),
    "attack_sr": ("sigma2", "q", "success_rate", "ci_low", "ci_high", "ties"),
    "convergence": ("kind", "sigma2", "n_draws", "q", "mi_bits", "std_err"),
    "oracle": ("kind", "ell", "q", "sigma2", "mi_exact", "mi_mc", "std_err", "z_score"),
}


@dataclass(frozen=True)
class Provenance:
    """
    Comment block above every table.

    n_draws is the Monte-Carlo size, or the comma-joined list for convergence tables.
    The channel fields let a later command tell whether a table belongs to its channel.
    """

    seed: int
    n_draws: Union[int, str]
    config_hash: str
    ell: Optional[int] = None
    masked: Optional[bool] = None
    sbox: Optional[str] = None
    sbox_seed: Optional[int] = None

    def comment_lines(self) -> List[str]:
        lines = [f"# seed={self.seed}", f"# n_draws={self.n_draws}",
                 f"# config_hash={self.config_hash}"]
        for key, value in self._channel().items():
            lines.append(f"# {key}={value}")
        return lines

    def _channel(self) -> Dict[str, str]:
        if self.ell is None:
            return {}
        channel = {
            "ell": str(self.ell),
            "masked": "true" if self.masked else "false",
            "sbox": self.sbox,
        }
        if self.sbox == "seeded-random-bijection":
            channel["sbox_seed"] = "0" if self.sbox_seed is None else str(self.sbox_seed)
        return channel

    @classmethod
    def for_channel(cls, seed: int, n_draws: Union[int, str], config_hash: str,
                    leakage: LeakageConfig, sbox_seed: Optional[int] = None) -> "Provenance":
        return cls(seed, n_draws, config_hash, leakage.ell, leakage.masked,
                   leakage.sbox.kind, sbox_seed)


def channel_mismatch(meta: Dict[str, str], leakage: LeakageConfig,
                     sbox_seed: Optional[int] = None) -> Optional[str]:
    """Name the first channel field of a table's provenance that differs from `leakage`, else None."""
    expected = Provenance.for_channel(0, 0, "", leakage, sbox_seed)._channel()
    for key, value in expected.items():
        if key not in meta:
            return f"{key} missing"
        if meta[key] != value:
            return f"{key}={meta[key]} (expected {value})"
    return None


def _q_min_cell(value: Optional[int]):
    return NOT_REACHED if value is None else int(value)


def write_table(path: Path, schema: str, rows: Sequence[Dict], provenance: Provenance) -> Path:
    """
    Write rows under the named schema.

    Args:
        path: destination CSV
        schema: key of SCHEMAS
        rows: one dict per row with exactly the schema's columns
        provenance: seed, draw count and config hash for the comment block

    Returns:
        The written path
    """
    columns = SCHEMAS[schema]
    for row in rows:
        if tuple(sorted(row)) != tuple(sorted(columns)):
            raise ValueError(f"{schema} row has columns {sorted(row)}, expected {list(columns)}")

    frame = pd.DataFrame(list(rows), columns=list(columns))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("\n".join(provenance.comment_lines()) + "\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_provenance(path: Path) -> Dict[str, str]:
    """Key/value pairs from the leading comment block."""
    meta = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
    return meta


def read_table(path: Path, schema: str) -> pd.DataFrame:
    """Load a table and check its header against the schema."""
    frame = pd.read_csv(path, comment="#")
    if tuple(frame.columns) != SCHEMAS[schema]:
        raise ValueError(f"{path}: header {list(frame.columns)} does not match {schema} schema")
    return frame


def mi_curve_rows(curves: Sequence[MiCurve]) -> List[Dict]:
    rows = []
    for curve in curves:
        for q, value, err in zip(curve.grid.points, curve.values, curve.std_errors):
            rows.append({"kind": curve.kind, "sigma2": curve.config.sigma2, "q": q,
                         "mi_bits": float(value), "std_err": float(err)})
    return rows


def load_mi_curves(path: Path, expected_hash: str, configs: Sequence[LeakageConfig],
                   grid: QGrid) -> Optional[Dict[float, Tuple[MiCurve, MiCurve]]]:
    """
    Rebuild (I_XYT, I_UYT) curves per noise level from an earlier mi run.

    Returns None when the file is missing, was produced by another configuration,
    or lacks any requested series.
    """
    if not path.exists() or read_provenance(path).get("config_hash") != expected_hash:
        return None

    frame = read_table(path, "mi_curves")
    n_draws = int(read_provenance(path)["n_draws"])
    curves = {}
    for config in configs:
        pair = []
        for kind in (I_XYT, I_UYT):
            series = frame[(frame["kind"] == kind) & np.isclose(frame["sigma2"], config.sigma2)]
            series = series.sort_values("q")
            if tuple(series["q"]) != grid.points:
                return None
            pair.append(MiCurve(kind, grid, series["mi_bits"].to_numpy(dtype=float),
                                series["std_err"].to_numpy(dtype=float), config, n_draws))
        curves[config.sigma2] = tuple(pair)
    return curves


def bound_rows(report: BoundReport) -> List[Dict]:
    sigma2 = report.config.sigma2
    return [
        {"sigma2": sigma2, "q": q, "ps_ceiling_uyt": float(u), "ps_ceiling_xyt": float(x),
         "capacity_bits": float(c)}
        for q, u, x, c in zip(report.grid.points, report.ps_upper_uyt,
                              report.ps_upper_xyt, report.capacity_line)
    ]


def q_min_row(report: BoundReport, q_min_empirical: Optional[int] = None,
              attacked: bool = False) -> Dict:
    """Row of the q_min table; the empirical column is blank unless an attack was run."""
    return {
        "sigma2": report.config.sigma2,
        "q_min_uyt": _q_min_cell(report.q_min_uyt),
        "q_min_xyt": _q_min_cell(report.q_min_xyt),
        "q_min_linear": _q_min_cell(report.q_min_linear),
        "q_min_empirical": _q_min_cell(q_min_empirical) if attacked else "",
    }


def attack_rows(sigma2: float, result: AttackResult) -> List[Dict]:
    return [
        {"sigma2": sigma2, "q": q, "success_rate": float(sr), "ci_low": float(lo),
         "ci_high": float(hi), "ties": int(t)}
        for q, sr, lo, hi, t in zip(result.grid.points, result.success_rate,
                                    result.ci_low, result.ci_high, result.ties)
    ]


def convergence_rows(sigma2: float, sweep: Sequence[ConvergencePoint]) -> List[Dict]:
    rows = []
    for point in sweep:
        for kind, estimate in ((I_XYT, point.i_xyt), (I_UYT, point.i_uyt)):
            rows.append({"kind": kind, "sigma2": sigma2, "n_draws": point.n_draws,
                         "q": point.q, "mi_bits": estimate.value, "std_err": estimate.std_error})
    return rows


def load_bound_ceilings(path: Path, sigma2: float) -> Optional[pd.DataFrame]:
    """Ceiling series of one noise level from an earlier bound run, if present."""
    if not path.exists():
        return None
    frame = read_table(path, "bounds")
    series = frame[np.isclose(frame["sigma2"], sigma2)].sort_values("q")
    return series if len(series) else None
