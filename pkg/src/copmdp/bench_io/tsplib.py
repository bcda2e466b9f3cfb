"""TSPLib / CVRPLib reader and writer (EUC_2D node coordinates only)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..problems import PathCvrp, PathTsp


class TsplibError(ValueError):
    pass


class UnsupportedEdgeWeightType(TsplibError):
    pass


class MalformedSection(TsplibError):
    pass


SUPPORTED_TYPES = ("TSP", "CVRP")


@dataclass
class TsplibProblem:
    name: str
    type: str
    coords: np.ndarray
    comment: str = ""
    edge_weight_type: str = "EUC_2D"
    capacity: int | None = None
    demands: np.ndarray | None = None
    #: 0-based index of the depot (CVRP)
    depot: int | None = None
    extra: dict[str, str] = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return len(self.coords)

    def scaled_coords(self) -> np.ndarray:
        """Coordinates mapped into the unit square (common scale for both axes)."""
        lo = self.coords.min(axis=0)
        span = float((self.coords.max(axis=0) - lo).max()) or 1.0
        return (self.coords - lo) / span

    def instance(self, scaled: bool = True) -> PathTsp | PathCvrp:
        """Problem instance with the same node numbering (0-based).

        For CVRP the depot becomes node 0 if it is not already.
        """
        xy = self.scaled_coords() if scaled else self.coords.astype(np.float64)
        if self.type == "TSP":
            return PathTsp.tour(xy)
        assert self.demands is not None and self.capacity is not None and self.depot is not None
        order = [self.depot] + [i for i in range(self.dimension) if i != self.depot]
        return PathCvrp.fresh(xy[self.depot], xy[order[1:]], self.demands[order[1:]], self.capacity)

    def nint_matrix(self) -> np.ndarray:
        """Full EUC_2D distance matrix (integers stored as floats)."""
        d = np.sqrt(((self.coords[:, None, :] - self.coords[None, :, :]) ** 2).sum(-1))
        return np.floor(d + 0.5)

    def node_order(self) -> list[int]:
        """File node index (0-based) of each instance node."""
        if self.type == "TSP":
            return list(range(self.dimension)) + [0]
        assert self.depot is not None
        return [self.depot] + [i for i in range(self.dimension) if i != self.depot]


def nint(x: float) -> int:
    return int(math.floor(x + 0.5))


def euc_2d(a: np.ndarray, b: np.ndarray) -> int:
    """TSPLib EUC_2D distance: Euclidean distance rounded to the nearest integer."""
    return nint(math.hypot(float(a[0] - b[0]), float(a[1] - b[1])))


def route_length(coords: np.ndarray, route: list[int]) -> int:
    """Integer EUC_2D length of a node route given in file numbering (0-based)."""
    return sum(euc_2d(coords[a], coords[b]) for a, b in zip(route, route[1:]))


def _number(tok: str) -> float:
    try:
        return float(tok)
    except ValueError as exc:
        raise MalformedSection(f"not a number: {tok!r}") from exc


def parse(path: str | Path) -> TsplibProblem:
    lines = Path(path).read_text().splitlines()
    header: dict[str, str] = {}
    sections: dict[str, list[list[str]]] = {}
    current: str | None = None
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        key = line.split(":", 1)[0].strip() if ":" in line else line.split()[0]
        if key.endswith("_SECTION"):
            current = key
            sections[current] = []
            continue
        if ":" in line and not line[0].isdigit() and not line[0] == "-":
            k, v = line.split(":", 1)
            header[k.strip()] = v.strip()
            current = None
            continue
        if current is None:
            raise MalformedSection(f"data outside a section: {line!r}")
        sections[current].append(line.split())

    ptype = header.get("TYPE", "").split()[0] if header.get("TYPE") else ""
    if ptype not in SUPPORTED_TYPES:
        raise TsplibError(f"unsupported problem type {ptype!r}")
    ewt = header.get("EDGE_WEIGHT_TYPE", "")
    if ewt != "EUC_2D":
        raise UnsupportedEdgeWeightType(f"edge weight type {ewt!r} is not supported")
    try:
        dim = int(header["DIMENSION"])
    except (KeyError, ValueError) as exc:
        raise MalformedSection("missing or bad DIMENSION") from exc

    rows = sections.get("NODE_COORD_SECTION")
    if rows is None:
        raise MalformedSection("missing NODE_COORD_SECTION")
    coords = _indexed(rows, dim, 2, "NODE_COORD_SECTION")

    prob = TsplibProblem(
        name=header.get("NAME", ""),
        type=ptype,
        coords=coords,
        comment=header.get("COMMENT", ""),
        edge_weight_type=ewt,
        extra={k: v for k, v in header.items() if k not in ("NAME", "TYPE", "COMMENT", "DIMENSION", "EDGE_WEIGHT_TYPE", "CAPACITY")},
    )
    if ptype == "CVRP":
        if "CAPACITY" not in header:
            raise MalformedSection("missing CAPACITY")
        prob.capacity = int(_number(header["CAPACITY"]))
        dem_rows = sections.get("DEMAND_SECTION")
        if dem_rows is None:
            raise MalformedSection("missing DEMAND_SECTION")
        dem = _indexed(dem_rows, dim, 1, "DEMAND_SECTION")[:, 0]
        if (dem != np.round(dem)).any() or (dem < 0).any():
            raise MalformedSection("demands must be non-negative integers")
        prob.demands = dem.astype(np.int64)
        depots = [int(_number(r[0])) for r in sections.get("DEPOT_SECTION", [])]
        if not depots or depots[-1] != -1:
            raise MalformedSection("DEPOT_SECTION must end with -1")
        if len(depots) != 2 or not 1 <= depots[0] <= dim:
            raise MalformedSection("exactly one depot in 1..DIMENSION is supported")
        prob.depot = depots[0] - 1
    return prob


def _indexed(rows: list[list[str]], dim: int, width: int, name: str) -> np.ndarray:
    if len(rows) != dim:
        raise MalformedSection(f"{name}: expected {dim} rows, got {len(rows)}")
    out = np.zeros((dim, width))
    seen = set()
    for r in rows:
        if len(r) != width + 1:
            raise MalformedSection(f"{name}: bad row {' '.join(r)!r}")
        i = int(_number(r[0]))
        if not 1 <= i <= dim or i in seen:
            raise MalformedSection(f"{name}: bad node id {i}")
        seen.add(i)
        out[i - 1] = [_number(t) for t in r[1:]]
    return out


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def write(prob: TsplibProblem, path: str | Path) -> None:
    out = [f"NAME : {prob.name}", f"COMMENT : {prob.comment}", f"TYPE : {prob.type}", f"DIMENSION : {prob.dimension}"]
    out.append(f"EDGE_WEIGHT_TYPE : {prob.edge_weight_type}")
    if prob.capacity is not None:
        out.append(f"CAPACITY : {prob.capacity}")
    out += [f"{k} : {v}" for k, v in prob.extra.items()]
    out.append("NODE_COORD_SECTION")
    out += [f"{i + 1} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(prob.coords)]
    if prob.demands is not None:
        out.append("DEMAND_SECTION")
        out += [f"{i + 1} {int(d)}" for i, d in enumerate(prob.demands)]
        out += ["DEPOT_SECTION", f"{prob.depot + 1}", "-1"]  # type: ignore[operator]
    out.append("EOF")
    Path(path).write_text("\n".join(out) + "\n")


def parse_tsplib(path: str | Path) -> TsplibProblem:
    prob = parse(path)
    if prob.type != "TSP":
        raise TsplibError(f"{path} is a {prob.type} file, not TSP")
    return prob


def parse_cvrplib(path: str | Path) -> TsplibProblem:
    prob = parse(path)
    if prob.type != "CVRP":
        raise TsplibError(f"{path} is a {prob.type} file, not CVRP")
    return prob
