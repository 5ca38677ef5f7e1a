"""Signals, labels and ground-truth geometry: IDX digits, scrambling, grids, spheres, synthetic data."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.spatial.transform import Rotation

from .multires import Graph

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
MNIST_SIDE = 28
PADDED_SIDE = 32

_IDX_TYPES = {0x08: np.dtype(">u1"), 0x09: np.dtype(">i1"), 0x0B: np.dtype(">i2"),
              0x0C: np.dtype(">i4"), 0x0D: np.dtype(">f4"), 0x0E: np.dtype(">f8")}


@dataclass(frozen=True)
class Dataset:
    """Signals as rows of a ``(count, d)`` array.

    ``geometry`` is the ground-truth graph, used only to score learned
    multiresolutions. ``permutation`` is the scramble already applied:
    signal entry ``i`` holds original vertex ``permutation[i]``.
    """

    signals: np.ndarray
    labels: np.ndarray | None = None
    geometry: Graph | None = None
    permutation: np.ndarray | None = None
    active_vertices: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.signals, dtype=np.float64)
        if s.ndim != 2:
            raise ValueError("signals must be a (count, d) array")
        object.__setattr__(self, "signals", s)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if len(labels) != len(s):
                raise ValueError(f"{len(labels)} labels for {len(s)} signals")
            object.__setattr__(self, "labels", labels)
        if self.permutation is not None:
            p = np.asarray(self.permutation, dtype=np.int64)
            if sorted(p.tolist()) != list(range(s.shape[1])):
                raise ValueError("permutation must be a bijection on 0..d-1")
            object.__setattr__(self, "permutation", p)
        if self.geometry is not None and self.geometry.vertex_count != s.shape[1]:
            raise ValueError("geometry size does not match the signal length")
        if self.active_vertices is None:
            object.__setattr__(self, "active_vertices", np.flatnonzero(np.any(s != 0, axis=0)))

    @property
    def d(self) -> int:
        return self.signals.shape[1]

    def __len__(self) -> int:
        return len(self.signals)

    def subset(self, index) -> "Dataset":
        """Rows ``index``; the active set is recomputed from the kept rows."""
        index = np.asarray(index)
        return Dataset(self.signals[index], None if self.labels is None else self.labels[index],
                       self.geometry, self.permutation)


# ---------------------------------------------------------------------------
# IDX files
# ---------------------------------------------------------------------------

def _open(path: str | Path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def read_idx(path: str | Path) -> tuple[int, np.ndarray]:
    """Return ``(magic, array)`` of an IDX file (optionally gzip-compressed)."""
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise ValueError(f"{path}: too short for an IDX header")
    zero, code, ndim = struct.unpack_from(">HBB", data)
    if zero != 0 or code not in _IDX_TYPES or ndim == 0:
        raise ValueError(f"{path}: bad IDX magic 0x{int.from_bytes(data[:4], 'big'):08x}")
    if len(data) < 4 + 4 * ndim:
        raise ValueError(f"{path}: truncated IDX header")
    shape = struct.unpack_from(">" + "I" * ndim, data, 4)
    dtype = _IDX_TYPES[code]
    count = int(np.prod(shape))
    start = 4 + 4 * ndim
    if len(data) - start < count * dtype.itemsize:
        raise ValueError(f"{path}: truncated payload, expected {count} items of shape {shape}")
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=start).reshape(shape)
    return int.from_bytes(data[:4], "big"), arr


def write_idx(path: str | Path, array: np.ndarray) -> None:
    """Write an unsigned-byte IDX file (magic ``0x0801`` for 1-D, ``0x0803`` for 3-D)."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        raise ValueError("only uint8 payloads are written")
    header = struct.pack(">HBB", 0, 0x08, array.ndim) + struct.pack(">" + "I" * array.ndim, *array.shape)
    opener = gzip.open if Path(path).suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(header + array.tobytes())


def pad_images(images: np.ndarray, side: int = PADDED_SIDE) -> np.ndarray:
    """Place each ``h x w`` image in the top-left corner of a ``side x side`` zero frame, flattened row-major."""
    n, h, w = images.shape
    if h > side or w > side:
        raise ValueError(f"images of size {h}x{w} do not fit in {side}x{side}")
    out = np.zeros((n, side, side), dtype=np.float64)
    out[:, :h, :w] = images
    return out.reshape(n, side * side)


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    """Digit images scaled to ``[0, 1]`` and padded to ``32 x 32 = 1024`` samples, with the 8-neighbor grid."""
    magic, images = read_idx(images_path)
    if magic != IDX_IMAGES:
        raise ValueError(f"{images_path}: expected image magic 0x{IDX_IMAGES:08x}, got 0x{magic:08x}")
    magic, labels = read_idx(labels_path)
    if magic != IDX_LABELS:
        raise ValueError(f"{labels_path}: expected label magic 0x{IDX_LABELS:08x}, got 0x{magic:08x}")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    signals = pad_images(images.astype(np.float64) / 255.0)
    return Dataset(signals, labels.astype(np.int64), grid_graph(PADDED_SIDE, PADDED_SIDE))


def find_mnist(directory: str | Path, split: str = "train") -> tuple[Path, Path]:
    """Locate the standard MNIST file pair for ``split`` ('train' or 't10k'), gzipped or not."""
    directory = Path(directory)
    found = []
    for kind in ("images-idx3-ubyte", "labels-idx1-ubyte"):
        for name in (f"{split}-{kind}", f"{split}-{kind}.gz", f"{split}-{kind.replace('-idx', '.idx')}"):
            if (directory / name).exists():
                found.append(directory / name)
                break
        else:
            raise FileNotFoundError(f"no {split}-{kind} file in {directory}")
    return found[0], found[1]


def stratified_split(labels, per_class_train: int, per_class_test: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint train/test indices with fixed counts per class, drawn with ``seed``."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < per_class_train + per_class_test:
            raise ValueError(f"class {c} has {len(idx)} examples, need {per_class_train + per_class_test}")
        idx = rng.permutation(idx)
        train.append(idx[:per_class_train])
        test.append(idx[per_class_train:per_class_train + per_class_test])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


# ---------------------------------------------------------------------------
# Scrambling
# ---------------------------------------------------------------------------

def scramble(ds: Dataset, seed: int) -> Dataset:
    """Apply one seeded permutation to every signal; the geometry is relabeled to match.

    Scrambled entry ``i`` holds original vertex ``perm[i]``. Scrambling an
    already scrambled dataset composes the permutations.
    """
    perm = np.random.default_rng(seed).permutation(ds.d)
    total = perm if ds.permutation is None else ds.permutation[perm]
    return Dataset(ds.signals[:, perm], ds.labels,
                   None if ds.geometry is None else ds.geometry.relabeled(perm),
                   total, np.sort(np.argsort(perm)[ds.active_vertices]))


def unscramble(ds: Dataset) -> Dataset:
    if ds.permutation is None:
        return ds
    inv = np.argsort(ds.permutation)
    return Dataset(ds.signals[:, inv], ds.labels,
                   None if ds.geometry is None else ds.geometry.relabeled(inv),
                   None, np.sort(ds.permutation[ds.active_vertices]))


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

def grid_graph(width: int, height: int) -> Graph:
    """Pixels ``y * width + x`` joined to their 8 neighbors."""
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    edges = []
    for y in range(height):
        for x in range(width):
            v = y * width + x
            for dx, dy in ((1, 0), (-1, 1), (0, 1), (1, 1)):
                nx, ny = x + dx, y + dy
                if 0 <= nx < width and 0 <= ny < height:
                    edges.append((v, ny * width + nx))
    return Graph.from_edges(width * height, edges)


@dataclass(frozen=True)
class SpherePointCloud:
    points: np.ndarray
    threshold: float
    graph: Graph

    @property
    def d(self) -> int:
        return len(self.points)

    def mean_degree(self) -> float:
        return 2 * len(self.graph.edges) / self.d


def geodesic_graph(points: np.ndarray, threshold: float) -> Graph:
    """Edge between two unit vectors when ``arccos(<p, q>) < threshold``."""
    cos = np.clip(points @ points.T, -1.0, 1.0)
    a, b = np.nonzero(np.triu(np.arccos(cos) < threshold, k=1))
    return Graph.from_edges(len(points), zip(a.tolist(), b.tolist()))


def sphere_sample(d: int, threshold: float, seed: int) -> SpherePointCloud:
    """``d`` uniform points on the unit sphere (normalized Gaussian triples) and their geodesic graph."""
    if d < 1:
        raise ValueError("d must be positive")
    if not 0 < threshold <= np.pi:
        raise ValueError("threshold must lie in (0, pi]")
    g = np.random.default_rng(seed).standard_normal((d, 3))
    points = g / np.linalg.norm(g, axis=1, keepdims=True)
    return SpherePointCloud(points, threshold, geodesic_graph(points, threshold))


def write_points_csv(path: str | Path, cloud: SpherePointCloud) -> None:
    np.savetxt(path, cloud.points, delimiter=",", header="x,y,z", comments="", fmt="%.17g")


def read_points_csv(path: str | Path, threshold: float) -> SpherePointCloud:
    points = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if points.shape[1] != 3:
        raise ValueError(f"{path}: expected x,y,z columns")
    return SpherePointCloud(points, threshold, geodesic_graph(points, threshold))


def averaging_operator(g: Graph) -> sparse.csr_matrix:
    """Row-stochastic map replacing each value by the mean over the vertex and its neighbors."""
    if not g.edges:
        return sparse.identity(g.vertex_count, format="csr")
    e = np.array(sorted(g.edges))
    n = g.vertex_count
    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(n)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(n)])
    A = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return sparse.diags(1.0 / np.asarray(A.sum(axis=1)).ravel()) @ A


def synthetic_smooth(g: Graph, count: int, seed: int, smoothing_steps: int) -> Dataset:
    """White noise diffused ``smoothing_steps`` times by neighborhood averaging."""
    x = np.random.default_rng(seed).standard_normal((count, g.vertex_count))
    P = averaging_operator(g)
    for _ in range(smoothing_steps):
        x = (P @ x.T).T
    return Dataset(x, geometry=g)


def total_variation(x: np.ndarray, g: Graph) -> np.ndarray:
    """``sum over edges |x(u) - x(v)|`` per signal."""
    e = np.array(sorted(g.edges)) if g.edges else np.zeros((0, 2), dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    return np.abs(x[..., e[:, 0]] - x[..., e[:, 1]]).sum(axis=-1)


# ---------------------------------------------------------------------------
# Images on the sphere
# ---------------------------------------------------------------------------

def random_rotation(seed: int, angle_std: float | None = None) -> np.ndarray:
    """Uniform rotation, or with ``angle_std`` a rotation vector with i.i.d. normal components of that scale."""
    rng = np.random.default_rng(seed)
    if angle_std is None:
        return Rotation.random(random_state=rng).as_matrix()
    return Rotation.from_rotvec(rng.normal(0.0, angle_std, 3)).as_matrix()


def project_to_sphere(image: np.ndarray, cloud: SpherePointCloud, rotation: np.ndarray | None = None,
                      seed: int = 0, *, half_width: float = 1.0, angle_std: float | None = None,
                      normalize: bool = True) -> np.ndarray:
    """Sample ``image`` at the cloud points.

    The image covers ``[-half_width, half_width]**2`` of the plane tangent
    to the sphere at the north pole; a point ``p`` reads the bilinear
    interpolation at the gnomonic projection of ``R.T @ p``. Points facing
    away or outside the patch read 0. With ``normalize`` each sample is
    weighted by ``sqrt`` of its share of the sphere over the pixel area
    (including the gnomonic area factor), so the squared norm of the result
    estimates that of the image. Without ``rotation`` one is drawn from
    ``seed`` (uniform, or small with ``angle_std``).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2-D")
    R = random_rotation(seed, angle_std) if rotation is None else np.asarray(rotation, dtype=np.float64)
    if R.shape != (3, 3) or np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-8:
        raise ValueError("rotation must be a 3x3 orthogonal matrix")
    p = cloud.points @ R  # rows are R.T @ point
    h, w = image.shape
    out = np.zeros(cloud.d)
    front = p[:, 2] > 0
    u = np.where(front, p[:, 0] / np.where(front, p[:, 2], 1.0), np.inf)
    v = np.where(front, p[:, 1] / np.where(front, p[:, 2], 1.0), np.inf)
    # pixel centres sit at -hw + (k + 0.5) * step
    step_x, step_y = 2 * half_width / w, 2 * half_width / h
    fx = (u + half_width) / step_x - 0.5
    fy = (half_width - v) / step_y - 0.5
    inside = front & (fx >= 0) & (fx <= w - 1) & (fy >= 0) & (fy <= h - 1)
    x0 = np.minimum(np.floor(fx[inside]).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(fy[inside]).astype(np.int64), h - 2)
    tx, ty = fx[inside] - x0, fy[inside] - y0
    val = ((1 - tx) * (1 - ty) * image[y0, x0] + tx * (1 - ty) * image[y0, x0 + 1]
           + (1 - tx) * ty * image[y0 + 1, x0] + tx * ty * image[y0 + 1, x0 + 1])
    if normalize:
        cos3 = p[inside, 2] ** 3
        val = val * np.sqrt((4 * np.pi / cloud.d) / (cos3 * step_x * step_y))
    out[inside] = val
    return out


# ---------------------------------------------------------------------------
# Plain signal files
# ---------------------------------------------------------------------------

def write_signals_csv(path: str | Path, ds: Dataset) -> None:
    """One signal per row; with labels, the label is the first column."""
    data = ds.signals if ds.labels is None else np.column_stack([ds.labels, ds.signals])
    np.savetxt(path, data, delimiter=",", fmt="%.17g")


def read_signals_csv(path: str | Path, labeled: bool = False) -> Dataset:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if labeled:
        return Dataset(data[:, 1:], data[:, 0].astype(np.int64))
    return Dataset(data)


def with_labels(ds: Dataset, labels) -> Dataset:
    return replace(ds, labels=np.asarray(labels))
