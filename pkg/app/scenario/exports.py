"""Artifact bundle: tables, snapshots, trajectory archive, JSON reports and the manifest"""

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from app.control.gluing import GlobalSolution
from app.errors import MissingArtifactError
from app.fields.base import ScalarField, VectorField
from app.geometry.grid import AnnulusGeometry

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
MANIFEST = "manifest.json"
TRAJECTORY = "trajectory.npz"
REPORT = "report.json"
VERDICT = "verdict.json"
TRAJECTORY_KEYS = ("times", "u_x", "u_y", "B_x", "B_y", "p", "xi_x", "xi_y", "eta_x", "eta_y")


def to_plain(value):
    """numpy scalars and arrays to JSON-friendly values; non-finite floats as strings"""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, pd.DataFrame):
        return to_plain(value.to_dict(orient="records"))
    return value


def to_json(payload: Dict) -> str:
    return json.dumps(to_plain(payload), indent=2, sort_keys=True)


def sha256_file(path: Path) -> str:
    hasher = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


def snapshot_table(grid: AnnulusGeometry, fields: Dict[str, Union[ScalarField, VectorField]]) -> pd.DataFrame:
    """Flat node table (index, r, theta, values) of single-time fields"""
    table = {
        "node": np.arange(grid.n_radial * grid.n_angular),
        "r": grid.R.ravel(),
        "theta": grid.TH.ravel(),
    }
    for name, F in fields.items():
        if isinstance(F, VectorField):
            table[f"{name}_x"] = F.x.ravel()
            table[f"{name}_y"] = F.y.ravel()
        else:
            table[name] = F.values.ravel()
    return pd.DataFrame(table)


def write_vtk_snapshot(path: Path, grid: AnnulusGeometry, fields: Dict[str, Union[ScalarField, VectorField]]) -> None:
    """Legacy ASCII VTK structured grid with point data"""
    import vtk

    points = vtk.vtkPoints()
    # VTK orders points with the first index fastest: theta inside, r outside
    for x, y in zip(grid.X.ravel(), grid.Y.ravel()):
        points.InsertNextPoint(float(x), float(y), 0.0)
    structured = vtk.vtkStructuredGrid()
    structured.SetDimensions(grid.n_angular, grid.n_radial, 1)
    structured.SetPoints(points)
    for name, F in fields.items():
        array = vtk.vtkDoubleArray()
        array.SetName(name)
        if isinstance(F, VectorField):
            array.SetNumberOfComponents(3)
            for fx, fy in zip(F.x.ravel(), F.y.ravel()):
                array.InsertNextTuple3(float(fx), float(fy), 0.0)
        else:
            array.SetNumberOfComponents(1)
            for value in F.values.ravel():
                array.InsertNextValue(float(value))
        structured.GetPointData().AddArray(array)
    writer = vtk.vtkStructuredGridWriter()
    writer.SetFileName(str(path))
    writer.SetInputData(structured)
    writer.SetFileTypeToASCII()
    writer.Write()


class BundleWriter:
    """Writes one scenario's artifacts under a timestamped directory"""

    def __init__(self, root: Union[str, Path], name: str, threads: int = 1, timestamp: Optional[str] = None):
        stamp = timestamp or datetime.now().strftime("%Y%m%d-%H%M%S")
        self.path = Path(root) / f"{name}-{stamp}"
        self.path.mkdir(parents=True, exist_ok=True)
        self.threads = max(int(threads), 1)
        self.files: List[str] = []

    def _register(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.path / name

    def write_json(self, name: str, payload: Dict) -> Path:
        path = self._register(name)
        path.write_text(to_json(payload) + "\n", encoding="utf-8")
        return path

    def write_table(self, name: str, table: pd.DataFrame) -> Path:
        path = self._register(name)
        table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
        return path

    def write_trajectory(self, solution: GlobalSolution) -> Path:
        path = self._register(TRAJECTORY)
        grid = solution.grid
        np.savez(
            path,
            times=solution.times,
            u_x=solution.u.x,
            u_y=solution.u.y,
            B_x=solution.B.x,
            B_y=solution.B.y,
            p=solution.p.values,
            xi_x=solution.xi.x,
            xi_y=solution.xi.y,
            eta_x=solution.eta.x,
            eta_y=solution.eta.y,
            grid=np.array([grid.r_inner, grid.r_outer, grid.n_radial, grid.n_angular], dtype=float),
        )
        if len(solution.phases):
            self.write_table("phases.csv", solution.phases)
        if len(solution.jumps):
            self.write_table("jumps.csv", solution.jumps)
        return path

    def write_snapshots(self, solution: GlobalSolution, indices: Sequence[int], vtk_output: bool = True) -> List[Path]:
        """CSV (and VTK) snapshots of (u, B, p) at the given sample indices"""
        grid = solution.grid

        def one(index: int) -> List[Path]:
            fields = {"u": solution.u.at(index), "B": solution.B.at(index), "p": solution.p.at(index)}
            written = [self.path / f"snapshot_{index:05d}.csv"]
            snapshot_table(grid, fields).to_csv(written[0], index=False, float_format=FLOAT_FORMAT)
            if vtk_output:
                written.append(self.path / f"snapshot_{index:05d}.vtk")
                write_vtk_snapshot(written[1], grid, fields)
            return written

        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            results = list(pool.map(one, indices))
        paths = [p for group in results for p in group]
        for p in paths:
            self._register(p.name)
        return paths

    def finalize(self, extra: Optional[Dict] = None) -> Path:
        """Manifest with the SHA-256 of every registered file"""
        entries = [{"file": name, "sha256": sha256_file(self.path / name)} for name in sorted(self.files)]
        payload = {"files": entries, **(extra or {})}
        path = self.path / MANIFEST
        path.write_text(to_json(payload) + "\n", encoding="utf-8")
        logger.info("Bundle written to %s (%d files)", self.path, len(entries))
        return path


def load_bundle(path: Union[str, Path], check_hashes: bool = True) -> Dict:
    """Manifest, report and (if present) trajectory arrays of a bundle"""
    path = Path(path)
    manifest_path = path / MANIFEST
    if not manifest_path.is_file():
        raise MissingArtifactError(f"no manifest in {path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    mismatched = []
    for entry in manifest["files"]:
        target = path / entry["file"]
        if not target.is_file():
            raise MissingArtifactError(f"{entry['file']} listed in the manifest is missing")
        if check_hashes and sha256_file(target) != entry["sha256"]:
            mismatched.append(entry["file"])
    if mismatched:
        logger.warning("Files changed since the manifest was written: %s", ", ".join(mismatched))
    report_path = path / REPORT
    if not report_path.is_file():
        raise MissingArtifactError(f"no {REPORT} in {path}")
    bundle = {
        "path": path,
        "manifest": manifest,
        "report": json.loads(report_path.read_text(encoding="utf-8")),
        "modified": mismatched,
        "trajectory": None,
    }
    trajectory_path = path / TRAJECTORY
    if trajectory_path.is_file():
        with np.load(trajectory_path) as archive:
            bundle["trajectory"] = {key: archive[key] for key in archive.files}
    return bundle


def trajectory_fields(trajectory: Dict[str, np.ndarray]) -> Dict[str, Union[ScalarField, VectorField]]:
    """Rebuild the grid and the field series stored in a trajectory archive"""
    missing = [key for key in (*TRAJECTORY_KEYS, "grid") if key not in trajectory]
    if missing:
        raise MissingArtifactError(f"trajectory archive lacks {', '.join(missing)}")
    r1, r2, nr, nt = trajectory["grid"]
    grid = AnnulusGeometry(float(r1), float(r2), int(nr), int(nt))
    times = trajectory["times"]
    return {
        "grid": grid,
        "u": VectorField(grid, trajectory["u_x"], trajectory["u_y"], times),
        "B": VectorField(grid, trajectory["B_x"], trajectory["B_y"], times),
        "p": ScalarField(grid, trajectory["p"], times),
        "xi": VectorField(grid, trajectory["xi_x"], trajectory["xi_y"], times),
        "eta": VectorField(grid, trajectory["eta_x"], trajectory["eta_y"], times),
    }
