"""Model files and the built-in example registry."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fiber import J_from_pairs, LieAlgebraModel, standard_J
from .grid import TorusGrid
from . import torus


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TorusModel:
    n: int
    N: int
    metric: object
    name: str = ""
    base_dir: Path | None = None

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n, self.N)

    def with_resolution(self, N: int) -> "TorusModel":
        return TorusModel(self.n, int(N), self.metric, self.name, self.base_dir)

    def initial_metric(self) -> np.ndarray:
        grid = self.grid
        spec = self.metric
        if spec == "flat":
            return torus.flat_metric(grid)
        if not isinstance(spec, dict) or "type" not in spec:
            raise ModelFileError(f"unrecognized torus metric spec {spec!r}")
        kind = spec["type"]
        if kind == "flat":
            return torus.flat_metric(grid, float(spec.get("scale", 1.0)))
        if kind == "conformal":
            g = torus.conformal_metric(
                grid, float(spec["amplitude"]), int(spec.get("frequency", 1)), tuple(spec.get("axes", (0, 1)))
            )
            return float(spec.get("scale", 1.0)) * g
        if kind == "diagonal":
            return torus.diagonal_metric(grid, spec["entries"])
        if kind == "file":
            path = Path(spec["path"])
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            g = np.load(path)
            if g.shape != grid.shape + (self.n, self.n):
                raise ModelFileError(f"metric file has shape {g.shape}, expected {grid.shape + (self.n, self.n)}")
            return g.astype(complex)
        raise ModelFileError(f"unknown torus metric type {kind!r}")


def _require(doc, key):
    if key not in doc:
        raise ModelFileError(f"model file is missing field {key!r}")
    return doc[key]


def model_from_dict(doc: dict, allow_non_lie: bool = False, base_dir=None):
    """Parse a model document into a LieAlgebraModel or TorusModel."""
    kind = _require(doc, "kind")
    name = doc.get("name", "")
    if kind == "lie_algebra":
        dim = int(_require(doc, "dim"))
        brackets = _require(doc, "brackets")
        for entry in brackets:
            if len(entry) != 4:
                raise ModelFileError(f"bracket entries are [c, a, b, value], got {entry!r}")
            if not all(1 <= int(i) <= dim for i in entry[:3]):
                raise ModelFileError(f"bracket index out of range in {entry!r}")
        J = doc.get("J", "standard")
        J = standard_J(dim) if J == "standard" else np.array(J, dtype=float)
        omega0 = doc.get("omega0", "standard")
        if not isinstance(omega0, str):
            omega0 = np.array(omega0, dtype=float)
        try:
            return LieAlgebraModel.from_brackets(
                dim, brackets, J, omega0, name=name, allow_non_lie=allow_non_lie or bool(doc.get("allow_non_lie"))
            )
        except ValueError as err:
            raise ModelFileError(str(err)) from err
    if kind == "torus":
        m = TorusModel(int(_require(doc, "n")), int(_require(doc, "N")), doc.get("metric", "flat"), name, base_dir)
        try:
            m.grid
        except ValueError as err:
            raise ModelFileError(str(err)) from err
        return m
    raise ModelFileError(f"unknown model kind {kind!r}")


def load_model(path, allow_non_lie: bool = False):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ModelFileError(f"cannot read model file {path}: {err}") from err
    if not isinstance(doc, dict):
        raise ModelFileError("model file must hold a JSON object")
    doc.setdefault("name", path.stem)
    return model_from_dict(doc, allow_non_lie=allow_non_lie, base_dir=path.parent), doc


def model_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# -- registry ---------------------------------------------------------------------------

_R2 = math.sqrt(2.0)


def _pairs(dim, pairs):
    return J_from_pairs(dim, pairs).tolist()


@dataclass(frozen=True)
class Example:
    name: str
    description: str
    doc: dict
    valid: bool = True
    flat: bool = False


EXAMPLES = [
    Example(
        "abelian",
        "abelian R^4 with the standard J; flat, T infinite",
        {"kind": "lie_algebra", "dim": 4, "brackets": [], "J": "standard", "omega0": "standard"},
        flat=True,
    ),
    Example(
        "heisenberg_kt_integrable",
        "Heisenberg + R, [v1,v2]=v3, Jv1=v2, Jv3=v4 (integrable); p = 0",
        {"kind": "lie_algebra", "dim": 4, "brackets": [[3, 1, 2, 1.0]], "J": _pairs(4, [(1, 2), (3, 4)]), "omega0": "standard"},
        flat=True,
    ),
    Example(
        "heisenberg_kt_nonintegrable",
        "Heisenberg + R, [v1,v2]=v3, Jv1=v3, Jv2=v4 (non-integrable); p = 0",
        {"kind": "lie_algebra", "dim": 4, "brackets": [[3, 1, 2, 1.0]], "J": _pairs(4, [(1, 3), (2, 4)]), "omega0": "standard"},
        flat=True,
    ),
    Example(
        "affine_solvable",
        "aff(R) + R^2, [v1,v2]=v2, standard J; P0 eigenvalues {-1,-1,0,0}, T infinite",
        {"kind": "lie_algebra", "dim": 4, "brackets": [[2, 1, 2, 1.0]], "J": "standard", "omega0": "standard"},
    ),
    Example(
        "expanding",
        "e(2) + R, [v1,v2]=sqrt2 v3, [v1,v3]=-sqrt2 v2, standard J; P0 eigenvalues {1,1,0,0}, T = 1/2",
        {
            "kind": "lie_algebra",
            "dim": 4,
            "brackets": [[3, 1, 2, _R2], [2, 1, 3, -_R2]],
            "J": "standard",
            "omega0": "standard",
        },
    ),
    Example(
        "solvable_nonintegrable",
        "R x R^3 with ad v1 = diag(1) + rotation, Jv1=v3, Jv2=v4 (non-integrable); finite T",
        {
            "kind": "lie_algebra",
            "dim": 4,
            "brackets": [[2, 1, 2, 1.0], [4, 1, 3, 1.0], [3, 1, 4, -1.0]],
            "J": _pairs(4, [(1, 3), (2, 4)]),
            "omega0": "standard",
        },
    ),
    Example(
        "solvable_6",
        "R x R^5 with ad v1 = diag(1,2,0,0,-1), standard J; T infinite",
        {
            "kind": "lie_algebra",
            "dim": 6,
            "brackets": [[2, 1, 2, 1.0], [3, 1, 3, 2.0], [6, 1, 6, -1.0]],
            "J": "standard",
            "omega0": "standard",
        },
    ),
    Example(
        "bad_jacobi",
        "[v1,v2]=v3, [v2,v3]=v4, [v1,v3]=v1: violates the Jacobi identity (must be rejected)",
        {
            "kind": "lie_algebra",
            "dim": 4,
            "brackets": [[3, 1, 2, 1.0], [4, 2, 3, 1.0], [1, 1, 3, 1.0]],
            "J": "standard",
            "omega0": "standard",
        },
        valid=False,
    ),
    Example(
        "torus_flat",
        "flat torus, n=1, N=16",
        {"kind": "torus", "n": 1, "N": 16, "metric": "flat"},
        flat=True,
    ),
    Example(
        "torus_bump",
        "torus n=1, N=32, omega0 = (1 + sin(2 pi x) sin(2 pi y)/2) flat",
        {"kind": "torus", "n": 1, "N": 32, "metric": {"type": "conformal", "amplitude": 0.5, "frequency": 1, "axes": [0, 1]}},
    ),
    Example(
        "torus_anisotropic",
        "torus n=2, N=16, diagonal metric with independent bumps in each complex direction",
        {
            "kind": "torus",
            "n": 2,
            "N": 16,
            "metric": {
                "type": "diagonal",
                "entries": [
                    {"amplitude": 0.3, "frequency": 1, "axes": [0, 3]},
                    {"amplitude": 0.2, "frequency": 1, "axes": [1, 2]},
                ],
            },
        },
    ),
]

REGISTRY = {ex.name: ex for ex in EXAMPLES}


def get_example(name: str) -> Example:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; known: {', '.join(REGISTRY)}") from None


def example_model(name: str, allow_non_lie: bool = False):
    ex = get_example(name)
    return model_from_dict(dict(ex.doc, name=name), allow_non_lie=allow_non_lie or not ex.valid)


def lie_examples(valid_only: bool = True):
    return [ex for ex in EXAMPLES if ex.doc["kind"] == "lie_algebra" and (ex.valid or not valid_only)]


def dump_examples(directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for ex in EXAMPLES:
        path = directory / f"{ex.name}.json"
        path.write_text(json.dumps(dict(ex.doc, name=ex.name), indent=2) + "\n")
        out.append(path)
    return out
