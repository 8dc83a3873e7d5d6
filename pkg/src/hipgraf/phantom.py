"""Synthetic hip phantom generator.

Stands in for a clinical dataset: each sample draws a near-vertical baseline
(landmarks 1-2), a bony-roof line at angle alpha to it (landmarks 3-4) and a
cartilage-roof line at angle beta (landmarks 5-6), renders bright lines and
blobs on a dark background, then multiplies in uniform speckle. The class
label follows the Graf rule exactly, by rejection sampling on the drawn
angles, so labels are re-checkable from the stored geometry. This is a
deliberately crude imaging model; realism is out of scope.

Reproducibility: sample i of a dataset uses a generator seeded from
(seed, i), so regeneration and parallel generation give identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import GeneratorConfig
from .dataset import GROUP_COLUMN, MANIFEST_NAME, ImageSample, write_image_tensor, write_manifest, write_pgm
from .errors import DataError, GenerationError
from .metrics import GrafAngles, LABEL_ABNORMAL, LABEL_NORMAL, classify_graf

BORDER_MARGIN_PX = 10
MIN_PAIR_SEPARATION_PX = 8
REJECTION_BUDGET = 1000
REFERENCE_SIZE = 128


def border_margin(size: int) -> int:
    """10 px at the default 128 px scale, shrinking proportionally below it."""
    if size >= REFERENCE_SIZE:
        return BORDER_MARGIN_PX
    return max(2, round(BORDER_MARGIN_PX * size / REFERENCE_SIZE))


def min_pair_separation(size: int) -> float:
    """8 px at the default 128 px scale, shrinking proportionally below it."""
    if size >= REFERENCE_SIZE:
        return float(MIN_PAIR_SEPARATION_PX)
    return max(3.0, MIN_PAIR_SEPARATION_PX * size / REFERENCE_SIZE)

ALPHA_RANGE_DEG = (50.0, 75.0)
BETA_RANGE_DEG = (55.0, 90.0)

BACKGROUND_LEVEL = 0.08
# one amplitude per anatomical line (baseline, bony roof, cartilage roof);
# distinct echogenicity per structure, as in real scans
LINE_AMPLITUDES = (0.62, 0.45, 0.30)
LINE_SIGMA_PX = 1.2
BLOB_AMPLITUDE = 0.9
BLOB_SIGMA_PX = 2.0


@dataclass
class GeometrySample:
    landmarks: np.ndarray
    angles: GrafAngles
    label: int


def _rotate(vec: np.ndarray, degrees: float) -> np.ndarray:
    rad = math.radians(degrees)
    c, s = math.cos(rad), math.sin(rad)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def _draw_geometry(rng: np.random.Generator, size: int) -> tuple[np.ndarray, float, float]:
    """One unvalidated layout: 6 points plus the drawn alpha and beta.

    The baseline runs near-vertically through the right half; the bony-roof
    line leaves its lower part heading down-left at angle alpha, the
    cartilage line leaves its upper part heading up-left at (the supplement
    of) beta, so the undirected line angles are exactly the drawn values.
    """
    alpha = rng.uniform(*ALPHA_RANGE_DEG)
    beta = rng.uniform(*BETA_RANGE_DEG)
    tilt = rng.uniform(-3.0, 3.0)
    u_base = _rotate(np.array([0.0, 1.0]), tilt)
    center = np.array([rng.uniform(0.63, 0.67) * size, rng.uniform(0.46, 0.52) * size])
    half = rng.uniform(0.25, 0.28) * size
    l1 = center - half * u_base
    l2 = center + half * u_base

    # near/far endpoint distances are disjoint so each landmark occupies its
    # own image region across the dataset; jitter extents are kept moderate
    # so the desk-scale training budget can actually fit the layout family
    u_alpha = _rotate(u_base, alpha)
    anchor_a = center + rng.uniform(0.10, 0.18) * half * u_base
    l3 = anchor_a + rng.uniform(0.10, 0.16) * size * u_alpha
    l4 = anchor_a + rng.uniform(0.30, 0.36) * size * u_alpha

    u_beta = _rotate(u_base, 180.0 - beta)
    anchor_b = center - rng.uniform(0.14, 0.22) * half * u_base
    l5 = anchor_b + rng.uniform(0.10, 0.16) * size * u_beta
    l6 = anchor_b + rng.uniform(0.30, 0.36) * size * u_beta

    return np.stack([l1, l2, l3, l4, l5, l6]), alpha, beta


def _layout_ok(landmarks: np.ndarray, size: int) -> bool:
    margin = border_margin(size)
    lo, hi = margin, size - 1 - margin
    if landmarks.min() < lo or landmarks.max() > hi:
        return False
    separation = min_pair_separation(size)
    for a, b in ((0, 1), (2, 3), (4, 5)):
        if np.linalg.norm(landmarks[a] - landmarks[b]) < separation:
            return False
    return True


def sample_geometry(class_request: str = "any", rng: np.random.Generator | None = None, size: int = 128) -> GeometrySample:
    """Rejection-sample a layout whose Graf class matches the request."""
    if class_request not in ("normal", "abnormal", "any"):
        raise DataError(f"unknown class request {class_request!r}")
    rng = rng if rng is not None else np.random.default_rng()
    for _ in range(REJECTION_BUDGET):
        landmarks, alpha, beta = _draw_geometry(rng, size)
        if not _layout_ok(landmarks, size):
            continue
        angles = GrafAngles(alpha=alpha, beta=beta)
        label = classify_graf(angles)
        if class_request == "normal" and label != LABEL_NORMAL:
            continue
        if class_request == "abnormal" and label != LABEL_ABNORMAL:
            continue
        return GeometrySample(landmarks=landmarks, angles=angles, label=label)
    raise GenerationError(f"no {class_request} layout found within {REJECTION_BUDGET} draws")


def _segment_distance_field(size: int, p0: np.ndarray, p1: np.ndarray) -> np.ndarray:
    """Distance from each pixel center to the segment p0-p1."""
    ys, xs = np.mgrid[0:size, 0:size]
    pts = np.stack([xs, ys], axis=-1).astype(np.float64)
    d = p1 - p0
    length_sq = float(d @ d)
    t = np.clip(((pts - p0) @ d) / length_sq, 0.0, 1.0)
    nearest = p0 + t[..., None] * d
    return np.linalg.norm(pts - nearest, axis=-1)


def render_phantom(landmarks: np.ndarray, rng: np.random.Generator | None = None, size: int = 128, speckle_gamma: float = 0.3) -> np.ndarray:
    """Render lines and blobs, then multiply in speckle and clamp to [0,1].

    With ``speckle_gamma`` zero the output is a deterministic function of the
    landmarks alone.
    """
    landmarks = np.asarray(landmarks, dtype=np.float64)
    clean = np.full((size, size), BACKGROUND_LEVEL, dtype=np.float64)
    for amplitude, (a, b) in zip(LINE_AMPLITUDES, ((0, 1), (2, 3), (4, 5))):
        dist = _segment_distance_field(size, landmarks[a], landmarks[b])
        clean += amplitude * np.exp(-(dist**2) / (2.0 * LINE_SIGMA_PX**2))
    ys, xs = np.mgrid[0:size, 0:size]
    for x, y in landmarks:
        r_sq = (xs - x) ** 2 + (ys - y) ** 2
        clean += BLOB_AMPLITUDE * np.exp(-r_sq / (2.0 * BLOB_SIGMA_PX**2))
    if speckle_gamma > 0.0:
        if rng is None:
            rng = np.random.default_rng()
        clean = clean * (1.0 + speckle_gamma * rng.uniform(-1.0, 1.0, size=clean.shape))
    return np.clip(clean, 0.0, 1.0).astype(np.float32)


def _class_requests(n: int, balance: float, seed: int) -> list[str]:
    n_abnormal = int(round(n * balance))
    requests = ["abnormal"] * n_abnormal + ["normal"] * (n - n_abnormal)
    order_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0DD5]))
    order_rng.shuffle(requests)
    return requests


def generate_dataset(out_dir: str | Path, config: GeneratorConfig) -> Path:
    """Write images (tensor + PGM) and the manifest; returns the manifest path."""
    config.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".writable"
        probe.touch()
        probe.unlink()
    except OSError as exc:
        raise IOError(f"output directory not writable: {out}: {exc}") from exc

    requests = _class_requests(config.n_samples, config.class_balance, config.seed)
    rows: list[dict] = []
    for index, request in enumerate(requests):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, index]))
        geometry = sample_geometry(request, rng=rng, size=config.size)
        image = render_phantom(geometry.landmarks, rng=rng, size=config.size, speckle_gamma=config.speckle_gamma)
        stem = f"sample_{index:04d}"
        write_image_tensor(out / f"{stem}.tgt", image)
        write_pgm(out / f"{stem}.pgm", image)
        row = {"file": f"{stem}.tgt"}
        for i in range(6):
            row[f"x{i + 1}"] = f"{geometry.landmarks[i, 0]:.4f}"
            row[f"y{i + 1}"] = f"{geometry.landmarks[i, 1]:.4f}"
        row["label"] = str(geometry.label)
        row["alpha_deg"] = f"{geometry.angles.alpha:.4f}"
        row["beta_deg"] = f"{geometry.angles.beta:.4f}"
        row["spacing_mm_px"] = f"{config.spacing:.6f}"
        if config.group_size:
            row[GROUP_COLUMN] = str(index // config.group_size)
        rows.append(row)
    manifest = out / MANIFEST_NAME
    write_manifest(manifest, rows)
    return manifest


def geometry_to_sample(geometry: GeometrySample, image: np.ndarray, name: str, spacing: float) -> ImageSample:
    return ImageSample(
        name=name,
        image=image,
        landmarks=geometry.landmarks.astype(np.float32),
        label=geometry.label,
        spacing=spacing,
        alpha=geometry.angles.alpha,
        beta=geometry.angles.beta,
    )
