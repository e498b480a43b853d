"""Seeded generators for labeled mixed-type datasets with planted anomalies.

Four kinds, each a dense structured bulk with a few planted anomalies:

* ``mountain``   x, y, z: a smooth ridge surface z = f(x, y). Types I, III.
* ``helix``      x, y, z, color: three helix turns whose color alternates every
  half turn. Types I, III, IV.
* ``timeseries`` t, value: a smooth trajectory over equally spaced times.
  Types I, III.
* ``noisymix``   x, y, z, color, size: four uniform balls, each with its own
  color/size pattern. Types II, IV (the first IV is second-order: its color
  and its size both occur around it, their combination does not).

The bulk uses bounded noise so that it has no sparse tails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data_model import Dataset, Kind, LabeledDataset, Schema

TABLE_SIZES = {"mountain": 943, "helix": 1410, "timeseries": 398, "noisymix": 3867}
SUPPORTED_TYPES = {
    "mountain": ("I", "III"),
    "helix": ("I", "III", "IV"),
    "timeseries": ("I", "III"),
    "noisymix": ("II", "IV"),
}
DEFAULT_PLANT = {
    "mountain": {"I": 2, "III": 1},
    "helix": {"I": 1, "III": 1, "IV": 2},
    "timeseries": {"I": 1, "III": 1},
    "noisymix": {"II": 1, "IV": 4},
}

# Neighborhood size used by the Type IV check.
LOCAL_K = 10
# A categorical combination is "common" when at least this share of cases has it.
COMMON_SHARE = 0.05


class GeneratorKind(str, Enum):
    MOUNTAIN = "mountain"
    HELIX = "helix"
    TIMESERIES = "timeseries"
    NOISYMIX = "noisymix"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: GeneratorKind
    n: int | None = None
    seed: int = 0
    plant: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        kind = GeneratorKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.n is None:
            object.__setattr__(self, "n", TABLE_SIZES[kind.value])
        plant = dict(self.plant) or dict(DEFAULT_PLANT[kind.value])
        object.__setattr__(self, "plant", plant)
        if self.n < 100:
            raise ValueError("n must be >= 100")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        supported = SUPPORTED_TYPES[kind.value]
        for t, c in plant.items():
            if t not in supported:
                raise ValueError(f"{kind.value} does not support Type {t} anomalies")
            if c < 1:
                raise ValueError(f"plant count for Type {t} must be >= 1")
        for t in supported:
            if plant.get(t, 0) < 1:
                raise ValueError(f"{kind.value} needs at least one Type {t} anomaly")
        total = sum(plant.values())
        if total > self.n / 10:
            raise ValueError(f"{total} planted anomalies exceed n/10")


def generate(spec: GeneratorSpec) -> LabeledDataset:
    rng = np.random.default_rng(spec.seed)
    builder = _BUILDERS[spec.kind.value]
    n_bulk = spec.n - sum(spec.plant.values())
    cols, labels = builder(rng, n_bulk, spec.plant)
    # Shuffle so planted cases do not sit at the end of the table.
    perm = rng.permutation(spec.n)
    schema = _SCHEMAS[spec.kind.value]
    cells = {a.name: cols[a.name][perm] for a in schema.attributes}
    data = Dataset.from_arrays(schema, cells)
    return LabeledDataset(data, tuple(np.asarray(labels)[perm].tolist()))


_SCHEMAS = {
    "mountain": Schema.of(x="numerical", y="numerical", z="numerical"),
    "helix": Schema.of(x="numerical", y="numerical", z="numerical", color="categorical"),
    "timeseries": Schema.of(t="numerical", value="numerical"),
    "noisymix": Schema.of(
        x="numerical", y="numerical", z="numerical", color="categorical", size="categorical"
    ),
}


def _spread(rng, k, lo, hi):
    """k points spread over [lo, hi] with jitter, in random order."""
    centers = lo + (np.arange(k) + 0.5) * (hi - lo) / k
    return rng.permutation(centers + rng.uniform(-0.25, 0.25, k) * (hi - lo) / k)


# ---------------------------------------------------------------- mountain


def _ridge(x, y):
    return 4.0 * np.exp(-((x - 5.0) ** 2) / 6.0) * (1.0 + 0.25 * np.sin(y / 1.6))


def _mountain(rng, n_bulk, plant):
    x = rng.uniform(0, 10, n_bulk)
    y = rng.uniform(0, 10, n_bulk)
    z = _ridge(x, y) + rng.uniform(-0.1, 0.1, n_bulk)
    xs, ys, zs, labels = [x], [y], [z], ["normal"] * n_bulk
    zmax = float(z.max())

    k = plant["I"]
    ax, ay = _spread(rng, k, 1.0, 9.0), _spread(rng, k, 1.0, 9.0)
    # Far enough that the first bin edge clears the ridge crest.
    az = zmax + rng.uniform(8.0, 10.0, k)
    xs.append(ax), ys.append(ay), zs.append(az)
    labels += ["I"] * k

    # Type III: underneath the ridge crest, far below the surface.
    k = plant["III"]
    ax = 5.0 + rng.uniform(-0.6, 0.6, k)
    ay = _spread(rng, k, 1.0, 9.0)
    az = _ridge(ax, ay) * rng.uniform(0.25, 0.4, k)
    xs.append(ax), ys.append(ay), zs.append(az)
    labels += ["III"] * k
    return {"x": np.concatenate(xs), "y": np.concatenate(ys), "z": np.concatenate(zs)}, labels


# ------------------------------------------------------------------- helix

_HELIX_TURNS = 3
_HELIX_HEIGHT = 10.0


def _helix_point(t):
    return np.cos(t), np.sin(t), t / (2 * np.pi * _HELIX_TURNS) * _HELIX_HEIGHT


# Color changes off the coordinate axes, away from the coarsest bin edges.
_HELIX_PHASE = np.pi / 4


def _helix_color(t):
    return np.where(np.floor((t - _HELIX_PHASE) / np.pi).astype(int) % 2 == 0, "red", "blue")


def _helix(rng, n_bulk, plant):
    t = rng.uniform(0, 2 * np.pi * _HELIX_TURNS, n_bulk)
    x, y, z = _helix_point(t)
    x = x + rng.uniform(-0.05, 0.05, n_bulk)
    y = y + rng.uniform(-0.05, 0.05, n_bulk)
    z = z + rng.uniform(-0.05, 0.05, n_bulk)
    color = _helix_color(t)
    xs, ys, zs, cs, labels = [x], [y], [z], [color], ["normal"] * n_bulk

    # Type I: beyond the top of the helix.
    k = plant["I"]
    ti = _spread(rng, k, 0, 2 * np.pi)
    xs.append(np.cos(ti)), ys.append(np.sin(ti))
    zs.append(_HELIX_HEIGHT + rng.uniform(6.0, 9.0, k))
    cs.append(_helix_color(ti))
    labels += ["I"] * k

    # Type III: on the helix axis.
    k = plant["III"]
    xs.append(rng.uniform(-0.1, 0.1, k)), ys.append(rng.uniform(-0.1, 0.1, k))
    zs.append(_spread(rng, k, 0.3 * _HELIX_HEIGHT, 0.7 * _HELIX_HEIGHT))
    cs.append(rng.choice(["red", "blue"], k))
    labels += ["III"] * k

    # Type IV: on the helix, mid-way through a half turn, wearing the other color.
    k = plant["IV"]
    segments = rng.choice(2 * _HELIX_TURNS, size=k, replace=k > 2 * _HELIX_TURNS)
    tv = (segments + 0.5 + rng.uniform(-0.15, 0.15, k)) * np.pi + _HELIX_PHASE
    vx, vy, vz = _helix_point(tv)
    xs.append(vx), ys.append(vy), zs.append(vz)
    cs.append(np.where(_helix_color(tv) == "red", "blue", "red"))
    labels += ["IV"] * k
    cols = {
        "x": np.concatenate(xs),
        "y": np.concatenate(ys),
        "z": np.concatenate(zs),
        "color": np.concatenate(cs).astype(object),
    }
    return cols, labels


# -------------------------------------------------------------- timeseries


def _trajectory(t, n):
    u = t / n
    return 5.0 + 2.0 * np.sin(2 * np.pi * 1.5 * u) + 1.5 * u


def _timeseries(rng, n_bulk, plant):
    k1, k3 = plant["I"], plant["III"]
    n = n_bulk + k1 + k3
    t = np.arange(n, dtype=np.float64)
    v = _trajectory(t, n) + rng.uniform(-0.08, 0.08, n)
    labels = np.array(["normal"] * n, dtype=object)
    # Anomalies replace the reading at well-separated time steps.
    slots = rng.permutation(np.arange(n // 10, n - n // 10, max(1, n // 20)))[: k1 + k3]
    lo, hi = float(v.min()), float(v.max())
    for j, g in enumerate(slots):
        if j < k1:
            v[g] = hi + rng.uniform(3.0, 5.0)
            labels[g] = "I"
        else:
            # Stay inside the value range, on the far side of the trajectory.
            base = _trajectory(t[g], n)
            mid = (lo + hi) / 2
            target = lo + 0.15 * (hi - lo) if base > mid else hi - 0.15 * (hi - lo)
            v[g] = target + rng.uniform(-0.1, 0.1)
            labels[g] = "III"
    return {"t": t, "value": v}, labels.tolist()


# ---------------------------------------------------------------- noisymix

_BALL_CENTERS = np.array(
    [[2.5, 2.5, 2.5], [7.5, 7.5, 2.5], [2.5, 7.5, 7.5], [7.5, 2.5, 7.5]]
)
_BALL_RADIUS = 2.0


def _ball(rng, k, center):
    d = rng.normal(size=(k, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = _BALL_RADIUS * rng.uniform(0, 1, k) ** (1 / 3)
    return center + d * r[:, None]


def _noisymix(rng, n_bulk, plant):
    # Ball patterns: 0 red/small, 1 blue/big, 2 mixed red-small and blue-big,
    # 3 red/big.
    which = rng.integers(0, 4, n_bulk)
    pts = np.empty((n_bulk, 3))
    for c in range(4):
        idx = np.flatnonzero(which == c)
        pts[idx] = _ball(rng, len(idx), _BALL_CENTERS[c])
    color = np.empty(n_bulk, dtype=object)
    size = np.empty(n_bulk, dtype=object)
    color[which == 0], size[which == 0] = "red", "small"
    color[which == 1], size[which == 1] = "blue", "big"
    color[which == 3], size[which == 3] = "red", "big"
    mixed = np.flatnonzero(which == 2)
    flip = rng.random(len(mixed)) < 0.5
    color[mixed] = np.where(flip, "red", "blue")
    size[mixed] = np.where(flip, "small", "big")
    P, C, S, labels = [pts], [color], [size], ["normal"] * n_bulk

    def inner(center, k):
        return center + _ball(rng, k, np.zeros(3)) * 0.5

    # Type II: a color that exists nowhere else, inside ball 0.
    k = plant["II"]
    P.append(inner(_BALL_CENTERS[0], k))
    C.append(np.array(["green"] * k, dtype=object))
    S.append(np.array(["small"] * k, dtype=object))
    labels += ["II"] * k

    # Type IV: the first is second-order (red/big inside the mixed ball); the
    # rest take a globally common combination foreign to their host ball.
    k = plant["IV"]
    foreign = {2: ("red", "big"), 0: ("blue", "big"), 3: ("blue", "big"), 1: ("red", "big")}
    hosts = [2] + [(0, 3, 1)[j % 3] for j in range(k - 1)]
    for h in hosts:
        P.append(inner(_BALL_CENTERS[h], 1))
        C.append(np.array([foreign[h][0]], dtype=object))
        S.append(np.array([foreign[h][1]], dtype=object))
    labels += ["IV"] * k
    pts = np.concatenate(P)
    return (
        {
            "x": pts[:, 0],
            "y": pts[:, 1],
            "z": pts[:, 2],
            "color": np.concatenate(C),
            "size": np.concatenate(S),
        },
        labels,
    )


_BUILDERS = {
    "mountain": _mountain,
    "helix": _helix,
    "timeseries": _timeseries,
    "noisymix": _noisymix,
}


# ------------------------------------------------------------ verification


@dataclass(frozen=True)
class PlantCheck:
    case_id: int
    label: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class PlantReport:
    checks: tuple[PlantCheck, ...]

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def failures(self) -> list[PlantCheck]:
        return [c for c in self.checks if not c.passed]


def _numeric_matrix(data: Dataset) -> np.ndarray:
    cols = [
        data.column(a.name).values for a in data.schema.attributes if a.kind is Kind.NUMERICAL
    ]
    return np.column_stack(cols) if cols else np.empty((data.n, 0))


def _combos(data: Dataset) -> list[tuple]:
    names = [a.name for a in data.schema.attributes if a.kind is Kind.CATEGORICAL]
    return [tuple(data.cell(g, nm) for nm in names) for g in range(data.n)]


def _nearest_distances(queries: np.ndarray, pool: np.ndarray, exclude_self: bool) -> np.ndarray:
    """Brute-force nearest-neighbor distance from each query row to ``pool``."""
    out = np.empty(len(queries))
    for start in range(0, len(queries), 512):
        q = queries[start : start + 512]
        d2 = ((q[:, None, :] - pool[None, :, :]) ** 2).sum(axis=2)
        if exclude_self:
            rows = np.arange(len(q))
            d2[rows, start + rows] = np.inf
        out[start : start + 512] = np.sqrt(d2.min(axis=1))
    return out


def verify_plant(labeled: LabeledDataset) -> PlantReport:
    """Check every labeled anomaly against its type's criterion, by brute force.

    Distances use numerical attributes scaled by the bulk range.

    * I: outside median +/- 3 MAD of the bulk on at least one numerical attribute.
    * II: its categorical combination occurs at most twice in the whole dataset.
    * III: inside every bulk marginal range, and farther from the nearest bulk
      case than the 99.9th percentile of bulk nearest-neighbor distances.
    * IV: its categorical combination is common globally yet absent among its
      ``LOCAL_K`` nearest neighbors.
    """
    data = labeled.data
    labels = np.array(labeled.labels)
    bulk = labels == "normal"
    X = _numeric_matrix(data)
    checks = []
    if X.shape[1]:
        Xb = X[bulk]
        lo, hi = Xb.min(axis=0), Xb.max(axis=0)
        scale = np.where(hi > lo, hi - lo, 1.0)
        Z = (X - lo) / scale
        Zb = Z[bulk]
        med = np.median(Xb, axis=0)
        mad = np.median(np.abs(Xb - med), axis=0)
    combos = _combos(data)
    combo_counts: dict[tuple, int] = {}
    for c in combos:
        combo_counts[c] = combo_counts.get(c, 0) + 1
    bulk_nn_q = None

    for g in np.flatnonzero(~bulk):
        lab = labels[g]
        if lab == "I":
            dev = np.abs(X[g] - med)
            outside = dev > 3 * mad
            ok = bool(outside.any())
            detail = f"|x - median| / MAD = {np.round(dev / np.where(mad > 0, mad, np.inf), 2).tolist()}"
        elif lab == "II":
            cnt = combo_counts[combos[g]]
            ok = len(combos[g]) > 0 and cnt <= 2
            detail = f"combination {combos[g]} occurs {cnt} times"
        elif lab == "III":
            inside = bool(np.all((X[g] >= lo) & (X[g] <= hi)))
            if bulk_nn_q is None:
                bulk_nn_q = float(np.quantile(_nearest_distances(Zb, Zb, True), 0.999))
            d = float(_nearest_distances(Z[g : g + 1], Zb, False)[0])
            ok = inside and d > bulk_nn_q
            detail = f"inside ranges={inside}, nn={d:.4g}, bulk q999={bulk_nn_q:.4g}"
        elif lab == "IV":
            cnt = combo_counts[combos[g]]
            common = cnt >= COMMON_SHARE * data.n
            d2 = ((Z - Z[g]) ** 2).sum(axis=1)
            d2[g] = np.inf
            nbrs = np.argsort(d2, kind="stable")[:LOCAL_K]
            shared = sum(combos[j] == combos[g] for j in nbrs)
            ok = common and shared == 0 and X.shape[1] > 0 and len(combos[g]) > 0
            detail = f"global count {cnt}, same combination among {LOCAL_K} neighbors: {shared}"
        else:
            ok, detail = False, f"unknown label {lab}"
        checks.append(PlantCheck(int(g), str(lab), ok, detail))
    return PlantReport(tuple(checks))


def is_higher_order(labeled: LabeledDataset, g: int) -> bool:
    """Type IV whose individual categorical values all occur among its neighbors."""
    data = labeled.data
    Z = _numeric_matrix(data)
    bulk = np.array(labeled.labels) == "normal"
    lo, hi = Z[bulk].min(axis=0), Z[bulk].max(axis=0)
    Z = (Z - lo) / np.where(hi > lo, hi - lo, 1.0)
    d2 = ((Z - Z[g]) ** 2).sum(axis=1)
    d2[g] = np.inf
    nbrs = np.argsort(d2, kind="stable")[:LOCAL_K]
    combos = _combos(data)
    return all(
        any(combos[j][h] == combos[g][h] for j in nbrs) for h in range(len(combos[g]))
    ) and not any(combos[j] == combos[g] for j in nbrs)
