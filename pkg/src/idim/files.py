"""
Reading inputs and writing result files.

Floats are written with 12 significant digits so that repeated runs produce
byte-identical files. Every output set gets a `manifest.json` written
atomically next to it.
"""

import hashlib
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from idim.errors import DataError
from idim.geometry import PointCloud
from idim.hidalgo import HidalgoChains, HidalgoConfig

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"


def read_point_cloud(path, header: bool = True) -> PointCloud:
    """
    Read a dense numeric CSV.

    Non-numeric columns (such as a class label) are dropped with a warning.
    """
    df = _read_csv(path, header)
    numeric = df.select_dtypes(include="number")
    dropped = [str(c) for c in df.columns if c not in numeric.columns]
    if dropped:
        logger.warning("Ignoring non-numeric columns: %s", ", ".join(dropped))
    if numeric.shape[1] == 0:
        raise DataError(f"{path} has no numeric columns")
    return PointCloud(numeric.to_numpy(dtype=float), [str(c) for c in numeric.columns])


def read_distance_matrix(path, header: bool = False) -> np.ndarray:
    return _read_csv(path, header).to_numpy(dtype=float)


def read_column(path, column: str, header: bool = True) -> np.ndarray:
    df = _read_csv(path, header)
    if column not in df.columns:
        raise DataError(f"{path} has no column named {column}")
    return df[column].to_numpy()


def _read_csv(path, header: bool) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, header=0 if header else None)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot parse {path}: {e}") from e
    if not header:
        df.columns = [f"V{j + 1}" for j in range(df.shape[1])]
    return df


def to_csv_text(df: pd.DataFrame) -> str:
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def write_csv(df: pd.DataFrame, path) -> Path:
    path = Path(path)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_matrix(matrix, path, prefix: Optional[str] = None) -> Path:
    """Write a matrix as CSV; columns are named prefix_1.. when `prefix` is given."""
    matrix = np.asarray(matrix)
    if prefix is None:
        pd.DataFrame(matrix).to_csv(
            path, index=False, header=False, float_format=FLOAT_FORMAT, lineterminator="\n"
        )
        return Path(path)
    columns = [f"{prefix}_{j + 1}" for j in range(matrix.shape[1])]
    return write_csv(pd.DataFrame(matrix, columns=columns), path)


def _round(value):
    if isinstance(value, dict):
        return {k: _round(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_round(v) for v in value]
    if isinstance(value, np.ndarray):
        return _round(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if not math.isfinite(value) else float(f"{value:.12g}")
    return value


def to_json(obj: Dict[str, Any]) -> str:
    return json.dumps(_round(obj), indent=2, sort_keys=True)


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_json(obj: Dict[str, Any], path) -> Path:
    path = Path(path)
    _atomic_write(path, to_json(obj) + "\n")
    return path


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    flags: Dict[str, Any]
    inputs: List[str] = field(default_factory=list)
    seed: Optional[int] = None
    rng: Optional[str] = None
    elapsed: float = 0.0
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        from idim import __version__

        return {
            "subcommand": self.subcommand,
            "flags": {k: v.value if hasattr(v, "value") else v for k, v in self.flags.items()},
            "input_hashes": {str(p): file_hash(p) for p in self.inputs},
            "seed": self.seed,
            "rng": self.rng,
            "version": __version__,
            "elapsed": self.elapsed,
            "outputs": sorted(Path(p).name for p in self.outputs),
        }

    def write(self, out_dir) -> Path:
        return write_json(self.to_dict(), Path(out_dir) / "manifest.json")


# ---------------------------------------------------------------------------
# Hidalgo chains


def save_chains(chains: HidalgoChains, out_dir, input_info: Optional[Dict] = None) -> List[Path]:
    """
    Write raw chains to `out_dir`.

    Files: cluster_prob.csv, membership_labels.csv, id_raw.csv, mus.csv,
    config.json.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = {
        "hidalgo": chains.config.to_dict(),
        "n": chains.n,
        "removed_duplicates": chains.removed_duplicates,
        "rng": chains.extras.get("rng"),
        "input": input_info or {},
    }
    mus = pd.DataFrame({"index": chains.kept_index, "mu": chains.mus})
    return [
        write_matrix(chains.cluster_prob, out_dir / "cluster_prob.csv", prefix="pi"),
        write_matrix(chains.membership_labels, out_dir / "membership_labels.csv", prefix="z"),
        write_matrix(chains.id_raw, out_dir / "id_raw.csv", prefix="d"),
        write_csv(mus, out_dir / "mus.csv"),
        write_json(config, out_dir / "config.json"),
    ]


def load_chains(out_dir) -> HidalgoChains:
    out_dir = Path(out_dir)
    try:
        with open(out_dir / "config.json") as f:
            config = json.load(f)
        mus = pd.read_csv(out_dir / "mus.csv")
        chains = HidalgoChains(
            cluster_prob=pd.read_csv(out_dir / "cluster_prob.csv").to_numpy(dtype=float),
            membership_labels=pd.read_csv(out_dir / "membership_labels.csv").to_numpy(
                dtype=np.int64
            ),
            id_raw=pd.read_csv(out_dir / "id_raw.csv").to_numpy(dtype=float),
            config=HidalgoConfig(**config["hidalgo"]),
            mus=mus["mu"].to_numpy(dtype=float),
            kept_index=mus["index"].to_numpy(dtype=np.int64),
            removed_duplicates=config.get("removed_duplicates", 0),
            extras={"rng": config.get("rng"), "input": config.get("input", {})},
        )
    except FileNotFoundError as e:
        raise DataError(f"{out_dir} is not a hidalgo output directory: {e}") from e
    # weights were rounded to 12 digits on the way out
    chains.cluster_prob /= chains.cluster_prob.sum(axis=1, keepdims=True)
    chains.check()
    return chains
