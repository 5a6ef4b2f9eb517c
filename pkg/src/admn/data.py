"""Seeded multimodal toy data with per-sample, per-modality corruption.

Two 16x16 single-channel modalities render the same latent position z in
different forms (a Gaussian blob and a ring), so neither is redundant.
Corruption modes: additive Gaussian noise with per-modality sigma sets,
lowlight (scale, gamma, additive noise), and Gaussian-kernel blur.
Corruption happens before normalization; normalization statistics come
from the clean renders and are stored with the dataset.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, RangeError
from .rng import RngState, derive_seed
from .tensor_io import load_tensor, save_tensor

IMAGE_SIZE = 16
BLOB_WIDTH = 2.0
RING_RADIUS = 3.0
RING_WIDTH = 1.0
N_SECTORS = 8

LOWLIGHT_PARAMS = {
    "none": None,
    "medium": (0.4, 2.0, 0.02),   # scale, gamma, noise sigma
    "severe": (0.15, 3.0, 0.05),
}
BLUR_PARAMS = {
    "none": None,
    "medium": (5, 1.5),           # kernel size, sigma
    "severe": (9, 3.0),
}
SEVERITY_ORDER = ("none", "medium", "severe")


@dataclass(frozen=True)
class CorruptionSpec:
    """Per-modality corruption value sets, drawn independently per sample."""

    mode: str                      # gaussian | lowlight | blur
    value_sets: tuple              # one tuple of values per modality

    def __post_init__(self):
        if self.mode not in ("gaussian", "lowlight", "blur"):
            raise ConfigError(f"unknown corruption mode {self.mode!r}")
        if not self.value_sets or any(len(vs) == 0 for vs in self.value_sets):
            raise ConfigError("every modality needs a nonempty value set")
        for vs in self.value_sets:
            for v in vs:
                if self.mode == "gaussian":
                    if float(v) < 0:
                        raise ConfigError(f"sigma must be >= 0, got {v}")
                elif v not in SEVERITY_ORDER:
                    raise ConfigError(f"severity must be one of {SEVERITY_ORDER}, got {v!r}")

    def quantitative(self, modality: int, value) -> float:
        """Numeric corruption level used by quantitative supervision."""
        if self.mode == "gaussian":
            return float(value)
        return float(SEVERITY_ORDER.index(value))


# paper-style defaults: one harsher set, one milder set
DEFAULT_GAUSSIAN_SPEC = CorruptionSpec("gaussian", ((0.0, 1.0, 2.0, 3.0),
                                                    (0.0, 0.25, 0.5, 0.75)))


@dataclass
class MultimodalSample:
    """One sample: per-modality arrays plus label and corruption descriptor."""

    inputs: list[np.ndarray]
    label: np.ndarray
    corruption_values: np.ndarray
    corruption_category: int
    sub_seeds: tuple


def render_clean(z, modality_kind: str, size: int = IMAGE_SIZE) -> np.ndarray:
    """Deterministic clean rendering of latent position z in [0,1]^2."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (2,) or z.min() < 0.0 or z.max() > 1.0:
        raise RangeError(f"z must lie in the unit square, got {z}")
    cy, cx = z[1] * size, z[0] * size
    rows = np.arange(size, dtype=np.float64)[:, None]
    cols = np.arange(size, dtype=np.float64)[None, :]
    d2 = (rows - cy) ** 2 + (cols - cx) ** 2
    if modality_kind == "blob":
        img = np.exp(-d2 / (2.0 * BLOB_WIDTH**2))
    elif modality_kind == "ring":
        r = np.sqrt(d2)
        img = np.exp(-((r - RING_RADIUS) ** 2) / (2.0 * RING_WIDTH**2))
    else:
        raise ConfigError(f"unknown modality kind {modality_kind!r}")
    return img[None, :, :]  # (1, size, size)


def sector_label(z) -> int:
    """Angular octant of z around the square's center (classification task)."""
    dy, dx = z[1] - 0.5, z[0] - 0.5
    angle = np.arctan2(dy, dx)  # [-pi, pi]
    sector = int(np.floor((angle + np.pi) / (2.0 * np.pi / N_SECTORS)))
    return min(sector, N_SECTORS - 1)


def corrupt_gaussian(arr: np.ndarray, sigma: float, rng: RngState) -> np.ndarray:
    if sigma < 0:
        raise RangeError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return arr.copy()
    return arr + sigma * rng.normal(arr.shape)


def corrupt_lowlight(arr: np.ndarray, severity: str, rng: RngState) -> np.ndarray:
    if severity not in LOWLIGHT_PARAMS:
        raise RangeError(f"unknown lowlight severity {severity!r}")
    params = LOWLIGHT_PARAMS[severity]
    if params is None:
        return arr.copy()
    scale, gamma, noise = params
    darkened = np.clip(arr * scale, 0.0, 1.0) ** gamma
    return darkened + noise * rng.normal(arr.shape)


def _gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur2d(img: np.ndarray, size: int, sigma: float) -> np.ndarray:
    kernel = _gaussian_kernel1d(size, sigma)
    half = size // 2
    padded = np.pad(img, ((half, half), (0, 0)), mode="reflect")
    rows = sum(kernel[i] * padded[i:i + img.shape[0], :] for i in range(size))
    padded = np.pad(rows, ((0, 0), (half, half)), mode="reflect")
    return sum(kernel[i] * padded[:, i:i + img.shape[1]] for i in range(size))


def corrupt_blur(arr: np.ndarray, severity: str) -> np.ndarray:
    if severity not in BLUR_PARAMS:
        raise RangeError(f"unknown blur severity {severity!r}")
    params = BLUR_PARAMS[severity]
    if params is None:
        return arr.copy()
    size, sigma = params
    out = np.empty_like(arr)
    for c in range(arr.shape[0]):
        out[c] = _blur2d(arr[c], size, sigma)
    return out


def apply_corruption(arr: np.ndarray, spec: CorruptionSpec, value,
                     sub_seed: int) -> np.ndarray:
    """Re-appliable corruption: (clean, value, sub_seed) -> corrupted."""
    rng = RngState(sub_seed)
    if spec.mode == "gaussian":
        return corrupt_gaussian(arr, float(value), rng)
    if spec.mode == "lowlight":
        return corrupt_lowlight(arr, value, rng)
    return corrupt_blur(arr, value)


@dataclass
class Split:
    """Column-oriented view of one dataset split."""

    inputs: list[np.ndarray]            # per modality: (n, 1, S, S), normalized
    labels: np.ndarray                  # (n, 2) float or (n,) int
    corruption_values: np.ndarray       # (n, M) quantitative levels
    corruption_category: np.ndarray     # (n,) flat product index
    value_indices: np.ndarray           # (n, M) index into each value set
    sub_seeds: np.ndarray               # (n, M) uint64
    sample_ids: np.ndarray              # (n,) global sample index

    def __len__(self):
        return self.labels.shape[0]

    def sample(self, i: int) -> MultimodalSample:
        return MultimodalSample(
            inputs=[m[i] for m in self.inputs],
            label=self.labels[i],
            corruption_values=self.corruption_values[i],
            corruption_category=int(self.corruption_category[i]),
            sub_seeds=tuple(int(s) for s in self.sub_seeds[i]),
        )

    def subset(self, idx) -> "Split":
        idx = np.asarray(idx)
        return Split(
            inputs=[m[idx] for m in self.inputs],
            labels=self.labels[idx],
            corruption_values=self.corruption_values[idx],
            corruption_category=self.corruption_category[idx],
            value_indices=self.value_indices[idx],
            sub_seeds=self.sub_seeds[idx],
            sample_ids=self.sample_ids[idx],
        )


@dataclass
class Dataset:
    """Train/val/test splits plus generation metadata."""

    spec: CorruptionSpec
    task: str                     # regress | classify
    n: int
    seed: int
    modality_kinds: tuple
    norm_mean: np.ndarray         # (M,)
    norm_std: np.ndarray          # (M,)
    splits: dict = field(default_factory=dict)

    @property
    def n_modalities(self) -> int:
        return len(self.modality_kinds)


def _sample_stream(seed: int, index: int) -> RngState:
    return RngState(derive_seed(seed, 1000 + index))


def _corruption_seed(seed: int, index: int, modality: int) -> int:
    return derive_seed(seed, 7_000_000 + index * 8 + modality)


def make_dataset(spec: CorruptionSpec, n: int, seed: int,
                 split_ratios=(0.7, 0.15, 0.15), task: str = "regress",
                 modality_kinds=("blob", "ring")) -> Dataset:
    """Deterministic dataset: a pure function of (spec, n, seed, ratios)."""
    if n < 30:
        raise ConfigError(f"need n >= 30 samples, got {n}")
    if task not in ("regress", "classify"):
        raise ConfigError(f"unknown task {task!r}")
    ratios = tuple(float(r) for r in split_ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be positive and sum to 1, got {ratios}")
    n_mod = len(modality_kinds)
    if len(spec.value_sets) != n_mod:
        raise ConfigError("corruption spec modality count must match modality_kinds")

    size = IMAGE_SIZE
    clean = [np.empty((n, 1, size, size)) for _ in range(n_mod)]
    corrupted = [np.empty((n, 1, size, size)) for _ in range(n_mod)]
    labels_z = np.empty((n, 2))
    value_indices = np.empty((n, n_mod), dtype=np.int64)
    corr_values = np.empty((n, n_mod))
    sub_seeds = np.empty((n, n_mod), dtype=np.uint64)

    set_sizes = [len(vs) for vs in spec.value_sets]
    for i in range(n):
        stream = _sample_stream(seed, i)
        z = stream.uniform((2,))
        labels_z[i] = z
        for m, kind in enumerate(modality_kinds):
            clean[m][i] = render_clean(z, kind, size)
            vi = stream.integers(set_sizes[m])
            value_indices[i, m] = vi
            value = spec.value_sets[m][vi]
            corr_values[i, m] = spec.quantitative(m, value)
            sub = _corruption_seed(seed, i, m)
            sub_seeds[i, m] = np.uint64(sub)
            corrupted[m][i] = apply_corruption(clean[m][i], spec, value, sub)

    # flat category over the product of per-modality value indices
    category = np.zeros(n, dtype=np.int64)
    for m in range(n_mod):
        category = category * set_sizes[m] + value_indices[:, m]

    norm_mean = np.array([clean[m].mean() for m in range(n_mod)])
    norm_std = np.array([clean[m].std() for m in range(n_mod)])
    normalized = [
        (corrupted[m] - norm_mean[m]) / norm_std[m] for m in range(n_mod)
    ]

    if task == "regress":
        labels = labels_z
    else:
        labels = np.array([sector_label(z) for z in labels_z], dtype=np.int64)

    order = RngState(derive_seed(seed, 1)).permutation(n)
    n_train = int(np.floor(ratios[0] * n))
    n_val = int(np.floor(ratios[1] * n))
    bounds = {"train": order[:n_train],
              "val": order[n_train:n_train + n_val],
              "test": order[n_train + n_val:]}

    dataset = Dataset(spec=spec, task=task, n=n, seed=seed,
                      modality_kinds=tuple(modality_kinds),
                      norm_mean=norm_mean, norm_std=norm_std)
    for name, idx in bounds.items():
        dataset.splits[name] = Split(
            inputs=[normalized[m][idx] for m in range(n_mod)],
            labels=labels[idx],
            corruption_values=corr_values[idx],
            corruption_category=category[idx],
            value_indices=value_indices[idx],
            sub_seeds=sub_seeds[idx],
            sample_ids=idx.astype(np.int64),
        )
    return dataset


# -- on-disk layout ----------------------------------------------------------


def save_dataset(dataset: Dataset, directory) -> None:
    """Manifest + per-split tensor files + descriptor CSV."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [
        f"mode\t{dataset.spec.mode}",
        f"task\t{dataset.task}",
        f"n\t{dataset.n}",
        f"seed\t{dataset.seed}",
        f"modalities\t{','.join(dataset.modality_kinds)}",
    ]
    for m, vs in enumerate(dataset.spec.value_sets):
        lines.append(f"values_{m}\t{','.join(str(v) for v in vs)}")
    lines.append(f"norm_mean\t{','.join(repr(float(v)) for v in dataset.norm_mean)}")
    lines.append(f"norm_std\t{','.join(repr(float(v)) for v in dataset.norm_std)}")
    for name, split in dataset.splits.items():
        lines.append(f"split_{name}\t{','.join(str(int(i)) for i in split.sample_ids)}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n")

    for name, split in dataset.splits.items():
        for m in range(dataset.n_modalities):
            save_tensor(directory / f"{name}_mod{m}.admt", split.inputs[m])
        save_tensor(directory / f"{name}_labels.admt",
                    np.asarray(split.labels, dtype=np.float64))
        save_tensor(directory / f"{name}_corruption.admt", split.corruption_values)

    with open(directory / "descriptors.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "split", "modality", "mode", "value",
                         "value_index", "sub_seed"])
        for name, split in dataset.splits.items():
            for i in range(len(split)):
                for m in range(dataset.n_modalities):
                    vi = int(split.value_indices[i, m])
                    writer.writerow([
                        int(split.sample_ids[i]), name, m, dataset.spec.mode,
                        dataset.spec.value_sets[m][vi], vi,
                        int(split.sub_seeds[i, m]),
                    ])


def load_dataset(directory) -> Dataset:
    directory = Path(directory)
    manifest = {}
    for line in (directory / "manifest.txt").read_text().splitlines():
        key, _, value = line.partition("\t")
        manifest[key] = value
    mode = manifest["mode"]
    task = manifest["task"]
    modality_kinds = tuple(manifest["modalities"].split(","))
    n_mod = len(modality_kinds)
    value_sets = []
    for m in range(n_mod):
        raw = manifest[f"values_{m}"].split(",")
        value_sets.append(tuple(float(v) if mode == "gaussian" else v for v in raw))
    spec = CorruptionSpec(mode, tuple(value_sets))
    dataset = Dataset(
        spec=spec, task=task, n=int(manifest["n"]), seed=int(manifest["seed"]),
        modality_kinds=modality_kinds,
        norm_mean=np.array([float(v) for v in manifest["norm_mean"].split(",")]),
        norm_std=np.array([float(v) for v in manifest["norm_std"].split(",")]),
    )

    descriptors = {}
    with open(directory / "descriptors.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["split"], int(row["sample_id"]), int(row["modality"]))
            descriptors[key] = (int(row["value_index"]), int(row["sub_seed"]))

    for name in ("train", "val", "test"):
        ids = np.array([int(i) for i in manifest[f"split_{name}"].split(",")],
                       dtype=np.int64)
        inputs = [load_tensor(directory / f"{name}_mod{m}.admt") for m in range(n_mod)]
        labels = load_tensor(directory / f"{name}_labels.admt")
        if task == "classify":
            labels = labels.astype(np.int64)
        corr_values = load_tensor(directory / f"{name}_corruption.admt")
        n_rows = ids.shape[0]
        value_indices = np.empty((n_rows, n_mod), dtype=np.int64)
        sub_seeds = np.empty((n_rows, n_mod), dtype=np.uint64)
        for i, sid in enumerate(ids):
            for m in range(n_mod):
                vi, sub = descriptors[(name, int(sid), m)]
                value_indices[i, m] = vi
                sub_seeds[i, m] = np.uint64(sub)
        set_sizes = [len(vs) for vs in spec.value_sets]
        category = np.zeros(n_rows, dtype=np.int64)
        for m in range(n_mod):
            category = category * set_sizes[m] + value_indices[:, m]
        dataset.splits[name] = Split(
            inputs=inputs, labels=labels, corruption_values=corr_values,
            corruption_category=category, value_indices=value_indices,
            sub_seeds=sub_seeds, sample_ids=ids,
        )
    return dataset
