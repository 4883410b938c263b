"""Data containers, file formats and synthetic lattice data.

Binary matrix layout::

    b"GNMATRIX" | u64 n | u64 p | n*p float64, little-endian, row-major

Coefficient volumes are plain text: a ``"nx ny nz nt"`` header followed by
one value per line in x-fastest order, with zeros at masked-out voxels.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateColumnError, FormatError, ShapeError, SpecError

MAGIC = b"GNMATRIX"
_HEADER = struct.Struct("<8sQQ")


def _frozen(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    """Dense ``n x p`` observation matrix.

    ``column_norms`` holds the l2 norms the columns had *before*
    standardization, so fitted coefficients can be mapped back to the
    original feature scale by dividing by them.
    """

    values: np.ndarray
    column_norms: np.ndarray | None = None
    standardized: bool = False

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ShapeError(f"design matrix must be 2-D and non-empty, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            r, c = np.argwhere(~np.isfinite(values))[0]
            raise DataError(f"non-finite entry at row {r + 1}, column {c + 1}")
        object.__setattr__(self, "values", values)
        norms = self.column_norms
        norms = np.linalg.norm(values, axis=0) if norms is None else _frozen(norms)
        if norms.shape != (values.shape[1],):
            raise ShapeError("column_norms length must equal p")
        object.__setattr__(self, "column_norms", _frozen(norms))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


@dataclass(frozen=True, eq=False)
class TargetVector:
    values: np.ndarray
    kind: str = "continuous"
    group_ids: np.ndarray | None = None

    def __post_init__(self):
        values = _frozen(self.values).ravel()
        if self.kind not in ("continuous", "binary"):
            raise DataError(f"unknown target kind {self.kind!r}")
        if not np.all(np.isfinite(values)):
            raise DataError("target contains non-finite values")
        if self.kind == "binary":
            check_binary_labels(values)
        object.__setattr__(self, "values", values)
        if self.group_ids is not None:
            groups = np.asarray(self.group_ids).ravel()
            if groups.shape != values.shape:
                raise ShapeError("group_ids length must equal target length")
            object.__setattr__(self, "group_ids", groups)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def check_binary_labels(values):
    labels = np.unique(values)
    if not set(labels.tolist()) <= {-1.0, 1.0}:
        raise DataError("binary labels must be -1 or +1")
    if labels.size < 2:
        raise DataError("binary labels must contain both classes")


@dataclass(frozen=True, eq=False)
class LatticeShape:
    """Voxel grid ``(nx, ny, nz, nt)`` with a boolean in-brain mask.

    Features are the true mask entries enumerated in x-fastest order, the
    same order used by the coefficient-volume file format.
    """

    dims: tuple
    mask: np.ndarray | None = None
    feature_index: np.ndarray = field(init=False, repr=False)
    _column_of: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 4 or min(dims) < 1:
            raise ShapeError(f"lattice dims must be four positive integers, got {self.dims}")
        mask = np.ones(dims, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != dims:
            raise ShapeError(f"mask shape {mask.shape} does not match dims {dims}")
        mask = mask.copy()
        mask.setflags(write=False)
        flat = mask.ravel(order="F")
        index = np.flatnonzero(flat)
        column_of = np.full(flat.size, -1, dtype=np.int64)
        column_of[index] = np.arange(index.size)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "feature_index", index)
        object.__setattr__(self, "_column_of", column_of)

    @property
    def p(self) -> int:
        return int(self.feature_index.size)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def column_grid(self) -> np.ndarray:
        """Grid of column indices, -1 where the mask is false."""
        return self._column_of.reshape(self.dims, order="F")

    def voxel_of(self, column):
        return np.unravel_index(self.feature_index[column], self.dims, order="F")

    def column_of(self, x, y, z, t) -> int:
        flat = np.ravel_multi_index((x, y, z, t), self.dims, order="F")
        return int(self._column_of[flat])

    def to_volume(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float).ravel()
        if beta.size != self.p:
            raise ShapeError(f"coefficient length {beta.size} != mask count {self.p}")
        flat = np.zeros(self.size)
        flat[self.feature_index] = beta
        return flat.reshape(self.dims, order="F")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for :func:`generate_synthetic`.

    Each blob is a ball of spatial ``blob_radius`` with a linear fall-off
    ``amplitude * (1 - d / (radius + 1))``, spanning ``blob_time_extent``
    consecutive time slices (all of them when ``None``).
    """

    blob_count: int = 2
    blob_radius: int = 1
    amplitude: float = 1.0
    noise_sigma: float = 1.0
    seed: int = 0
    kind: str = "continuous"
    centers: tuple | None = None
    blob_time_extent: int | None = None
    n_groups: int = 1


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    beta_true: np.ndarray
    support: np.ndarray
    noise_sigma: float
    seed: int

    def __post_init__(self):
        if not np.array_equal(np.flatnonzero(self.beta_true), np.asarray(self.support)):
            raise SpecError("support must equal the nonzero indices of beta_true")


# --------------------------------------------------------------------- I/O


def _parse_float(token, row, col):
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"unparseable value {token!r} at row {row}, column {col}") from None
    if not np.isfinite(value):
        raise DataError(f"non-finite value {token!r} at row {row}, column {col}")
    return value


def _read_csv_rows(path, header=False):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if header:
            next(reader, None)
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            rows.append(row)
    return rows


def read_matrix(path, format=None, header=False) -> DesignMatrix:
    """Read a design matrix from CSV or the binary ``GNMATRIX`` format.

    ``format`` defaults to ``"binary"`` when the file starts with the magic
    bytes and ``"csv"`` otherwise.
    """
    path = Path(path)
    if format is None:
        with open(path, "rb") as fh:
            format = "binary" if fh.read(len(MAGIC)) == MAGIC else "csv"
    if format == "binary":
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, n, p = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        body = raw[_HEADER.size:]
        if len(body) != 8 * n * p:
            raise FormatError(f"{path}: expected {n * p} values, found {len(body) // 8}")
        values = np.frombuffer(body, dtype="<f8").reshape(n, p)
        return DesignMatrix(values)
    if format != "csv":
        raise FormatError(f"unknown matrix format {format!r}")
    rows = _read_csv_rows(path, header)
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"{path}: ragged row {i + 1} has {len(row)} fields, expected {width}")
        for j, token in enumerate(row):
            values[i, j] = _parse_float(token, i + 1, j + 1)
    return DesignMatrix(values)


def write_matrix(X, path, format="binary"):
    values = np.asarray(X, dtype=float)
    if format == "binary":
        n, p = values.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, n, p))
            fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
    elif format == "csv":
        with open(path, "w") as fh:
            for row in values:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    else:
        raise FormatError(f"unknown matrix format {format!r}")


def read_vector(path, header=False, dtype=float) -> np.ndarray:
    """Read a single-column text/CSV file (first field of each row)."""
    rows = _read_csv_rows(path, header)
    if dtype is float:
        return np.array([_parse_float(r[0], i + 1, 1) for i, r in enumerate(rows)])
    return np.array([r[0].strip() for r in rows])


def write_vector(values, path):
    """One value per line; floats are written with full round-trip precision."""
    values = np.asarray(values).ravel()
    with open(path, "w") as fh:
        if values.dtype.kind == "f":
            fh.writelines(f"{float(v)!r}\n" for v in values)
        else:
            fh.writelines(f"{v}\n" for v in values.tolist())


def write_coefficient_volume(beta, shape: LatticeShape, path):
    volume = shape.to_volume(beta)
    with open(path, "w") as fh:
        fh.write(" ".join(str(d) for d in shape.dims) + "\n")
        for v in volume.ravel(order="F"):
            fh.write(f"{float(v)!r}\n")


def read_coefficient_volume(path, shape: LatticeShape | None = None):
    """Read a coefficient volume.

    Returns the full 4-D volume, or the masked coefficient vector when a
    ``shape`` is given.
    """
    with open(path) as fh:
        header = fh.readline().split()
        try:
            dims = tuple(int(d) for d in header)
        except ValueError:
            raise FormatError(f"{path}: bad volume header {header!r}") from None
        if len(dims) != 4:
            raise FormatError(f"{path}: volume header needs four dims")
        flat = np.array([float(line) for line in fh if line.strip()])
    if flat.size != int(np.prod(dims)):
        raise FormatError(f"{path}: expected {int(np.prod(dims))} values, found {flat.size}")
    volume = flat.reshape(dims, order="F")
    if shape is None:
        return volume
    if shape.dims != dims:
        raise ShapeError(f"volume dims {dims} do not match lattice {shape.dims}")
    return flat[shape.feature_index]


# ---------------------------------------------------------- preprocessing


def standardize(X) -> DesignMatrix:
    """Scale every column to unit l2 norm, remembering the original norms."""
    if isinstance(X, DesignMatrix) and X.standardized:
        return X
    values = np.asarray(X, dtype=float)
    norms = np.linalg.norm(values, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateColumnError(f"column {int(zero[0])} has zero norm")
    return DesignMatrix(values / norms, column_norms=norms, standardized=True)


# ---------------------------------------------------------- synthetic data


def _smooth_spatial(volumes):
    # one pass of 1/7 averaging over each voxel and its 6 spatial neighbours
    out = volumes.copy()
    for axis in (1, 2, 3):
        if volumes.shape[axis] < 2:
            continue
        lo = [slice(None)] * volumes.ndim
        hi = [slice(None)] * volumes.ndim
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo)] += volumes[tuple(hi)]
        out[tuple(hi)] += volumes[tuple(lo)]
    return out / 7.0


def _blob_offsets(radius):
    r = int(radius)
    rng = np.arange(-r, r + 1)
    dx, dy, dz = np.meshgrid(rng, rng, rng, indexing="ij")
    d = np.sqrt(dx**2 + dy**2 + dz**2)
    keep = d <= r
    return np.stack([dx[keep], dy[keep], dz[keep]], axis=1), d[keep]


def _blob_voxels(center, offsets, t_extent):
    x, y, z, t0 = center
    spatial = offsets + np.array([x, y, z])
    times = np.arange(t0, t0 + t_extent)
    return spatial, times


def _blob_fits(shape, center, offsets, t_extent):
    spatial, times = _blob_voxels(center, offsets, t_extent)
    nx, ny, nz, nt = shape.dims
    if times.min() < 0 or times.max() >= nt:
        return False
    if (spatial < 0).any() or (spatial >= np.array([nx, ny, nz])).any():
        return False
    sx, sy, sz = spatial.T
    return bool(all(shape.mask[sx, sy, sz, t].all() for t in times))


def generate_synthetic(shape: LatticeShape, truth_spec: SyntheticSpec, n: int):
    """Draw a smoothed Gaussian design and a blob-structured response.

    Returns ``(DesignMatrix, TargetVector, SyntheticTruth)``.  The output is a
    deterministic function of ``truth_spec.seed``.
    """
    if n < 2:
        raise SpecError("need at least two observations")
    spec = truth_spec
    rng = np.random.default_rng(spec.seed)
    nx, ny, nz, nt = shape.dims
    t_extent = nt if spec.blob_time_extent is None else int(spec.blob_time_extent)
    if not 1 <= t_extent <= nt:
        raise SpecError(f"blob_time_extent must be in [1, {nt}]")
    offsets, dist = _blob_offsets(spec.blob_radius)

    if spec.centers is not None:
        centers = [tuple(int(c) for c in ctr) for ctr in spec.centers]
        if len(centers[0]) == 3:
            centers = [c + (0,) for c in centers]
        for c in centers:
            if not _blob_fits(shape, c, offsets, t_extent):
                raise SpecError(f"blob centred at {c} does not fit inside the mask")
    else:
        candidates = [
            (x, y, z, t)
            for t in range(nt - t_extent + 1)
            for z in range(nz)
            for y in range(ny)
            for x in range(nx)
            if _blob_fits(shape, (x, y, z, t), offsets, t_extent)
        ]
        if len(candidates) < spec.blob_count:
            raise SpecError("not enough room inside the mask for the requested blobs")
        picks = rng.choice(len(candidates), size=spec.blob_count, replace=False)
        centers = [candidates[i] for i in sorted(picks)]

    volume = np.zeros(shape.dims)
    profile = spec.amplitude * (1.0 - dist / (spec.blob_radius + 1.0))
    for c in centers:
        spatial, times = _blob_voxels(c, offsets, t_extent)
        sx, sy, sz = spatial.T
        for t in times:
            volume[sx, sy, sz, t] += profile
    beta_true = volume.ravel(order="F")[shape.feature_index]

    noise = rng.standard_normal((n,) + shape.dims)
    smoothed = _smooth_spatial(noise)
    values = smoothed.reshape(n, -1, order="F")[:, shape.feature_index]

    eps = rng.standard_normal(n)
    signal = values @ beta_true
    y = signal + spec.noise_sigma * eps if spec.noise_sigma else signal.copy()
    groups = np.arange(n) % max(int(spec.n_groups), 1)
    if spec.kind == "binary":
        y = np.where(y >= 0, 1.0, -1.0)
    elif spec.kind != "continuous":
        raise SpecError(f"unknown target kind {spec.kind!r}")

    truth = SyntheticTruth(
        beta_true=_frozen(beta_true),
        support=np.flatnonzero(beta_true),
        noise_sigma=float(spec.noise_sigma),
        seed=int(spec.seed),
    )
    return DesignMatrix(values), TargetVector(y, spec.kind, groups), truth
