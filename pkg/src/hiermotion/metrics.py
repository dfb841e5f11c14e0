"""Evaluation metrics over a pluggable feature space.

R-precision, Fréchet distance, multimodal distance, diversity and per-prompt
multimodality, all on plain numpy feature matrices so any extractor can feed
them.  The Fréchet matrix square root goes through the symmetric form
sqrt(S_r)^T S_g sqrt(S_r), which stays real for SPD inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class InsufficientSamples(Exception):
    pass


class SingularCovariance(Exception):
    pass


@dataclass
class RepeatedValue:
    values: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def ci95(self) -> float:
        if len(self.values) < 2:
            return 0.0
        return float(1.96 * np.std(self.values, ddof=1) / np.sqrt(len(self.values)))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci95": self.ci95, "n": len(self.values)}


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between rows of a and rows of b."""
    aa = (a * a).sum(axis=1)[:, None]
    bb = (b * b).sum(axis=1)[None, :]
    sq = np.maximum(aa + bb - 2.0 * a @ b.T, 0.0)
    return np.sqrt(sq)


def r_precision(motion_feats: np.ndarray, text_feats: np.ndarray, batch: int = 32,
                repeats: int = 20, seed: int = 0) -> dict[str, RepeatedValue]:
    """Top-1/2/3 retrieval accuracy of each motion's true text among ``batch``
    candidates (1 true + batch-1 mismatched), by Euclidean distance.

    Rank is the count of candidates strictly closer than the true text, so
    exact ties (duplicate captions in a candidate set) resolve in favor of the
    ground truth.
    """
    motion_feats = np.asarray(motion_feats, dtype=np.float64)
    text_feats = np.asarray(text_feats, dtype=np.float64)
    n = motion_feats.shape[0]
    if text_feats.shape[0] != n:
        raise ValueError("motion and text features must be aligned")
    if n < batch:
        raise InsufficientSamples(f"need at least {batch} pairs, got {n}")
    rng = np.random.default_rng(seed)
    out = {k: [] for k in ("top1", "top2", "top3")}
    for _ in range(repeats):
        perm = rng.permutation(n)
        hits = np.zeros(3)
        trials = 0
        for start in range(0, n - batch + 1, batch):
            idx = perm[start:start + batch]
            d = _pairwise_dist(motion_feats[idx], text_feats[idx])
            true = np.diagonal(d)
            rank = (d < true[:, None]).sum(axis=1)
            for k in range(3):
                hits[k] += (rank <= k).sum()
            trials += batch
        for k, key in enumerate(("top1", "top2", "top3")):
            out[key].append(hits[k] / trials)
    return {k: RepeatedValue(v) for k, v in out.items()}


def _sqrtm_spd(mat: np.ndarray, clamp: float = -1e-8) -> np.ndarray:
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    if (vals < clamp).any():
        raise SingularCovariance(
            f"matrix has eigenvalue {vals.min():.3e} below the clamp threshold")
    vals = np.maximum(vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _stats(feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    return mu, np.atleast_2d(cov)


def fid(real_feats: np.ndarray, gen_feats: np.ndarray, eps: float = 1e-10) -> float:
    """||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2})."""
    real_feats = np.asarray(real_feats, dtype=np.float64)
    gen_feats = np.asarray(gen_feats, dtype=np.float64)
    if real_feats.ndim == 1:
        real_feats = real_feats[:, None]
    if gen_feats.ndim == 1:
        gen_feats = gen_feats[:, None]
    d = real_feats.shape[1]
    for name, f in (("real", real_feats), ("generated", gen_feats)):
        if f.shape[0] < 2:
            raise InsufficientSamples(f"{name} feature set needs >= 2 rows")
        if f.shape[0] < d:
            warnings.warn(f"{name} set has fewer samples ({f.shape[0]}) than feature "
                          f"dims ({d}); covariance estimate will be poor")
    mu_r, cov_r = _stats(real_feats)
    mu_g, cov_g = _stats(gen_feats)
    diff = mu_r - mu_g
    try:
        root_r = _sqrtm_spd(cov_r)
        middle = _sqrtm_spd(root_r @ cov_g @ root_r)
    except SingularCovariance:
        reg = eps * np.eye(d)
        try:
            root_r = _sqrtm_spd(cov_r + reg)
            middle = _sqrtm_spd(root_r @ (cov_g + reg) @ root_r)
        except SingularCovariance as exc:
            raise SingularCovariance("covariance square root failed even after "
                                     f"regularization: {exc}") from exc
    value = float(diff @ diff + np.trace(cov_r) + np.trace(cov_g)
                  - 2.0 * np.trace(middle))
    return max(value, 0.0) if abs(value) < 1e-9 else value


def mm_dist(text_feats: np.ndarray, motion_feats: np.ndarray) -> float:
    """Mean Euclidean distance between each text feature and the motion
    generated from it (aligned pairs)."""
    text_feats = np.asarray(text_feats, dtype=np.float64)
    motion_feats = np.asarray(motion_feats, dtype=np.float64)
    if text_feats.shape != motion_feats.shape:
        raise ValueError("paired feature sets must have identical shape")
    return float(np.linalg.norm(text_feats - motion_feats, axis=1).mean())


def diversity(gen_feats: np.ndarray, subset_size: int = 100,
              seed: int = 0) -> float:
    """Mean distance between two disjoint random subsets of equal size."""
    gen_feats = np.asarray(gen_feats, dtype=np.float64)
    n = gen_feats.shape[0]
    if 2 * subset_size > n:
        raise InsufficientSamples(f"need at least {2 * subset_size} samples, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    first = gen_feats[perm[:subset_size]]
    second = gen_feats[perm[subset_size:2 * subset_size]]
    return float(np.linalg.norm(first - second, axis=1).mean())


def mmodality(generator: Callable[[str, int], np.ndarray], texts: list[str],
              pairs: int = 10, seed: int = 0) -> float:
    """Per-prompt diversity: generate 2 * pairs motions per text with fresh
    seeds, pair them up, average pair feature distance, then average texts.

    ``generator(text, call_seed)`` must return that generation's feature vector.
    """
    rng = np.random.default_rng(seed)
    totals = []
    for text in texts:
        feats = [np.asarray(generator(text, int(rng.integers(0, 2 ** 31))), dtype=np.float64)
                 for _ in range(2 * pairs)]
        dists = [np.linalg.norm(feats[2 * k] - feats[2 * k + 1]) for k in range(pairs)]
        totals.append(np.mean(dists))
    return float(np.mean(totals))


@dataclass
class MetricReport:
    r_top1: RepeatedValue
    r_top2: RepeatedValue
    r_top3: RepeatedValue
    fid: float
    mm_dist: float
    diversity: RepeatedValue
    mmodality: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "r_precision": {"top1": self.r_top1.to_dict(),
                            "top2": self.r_top2.to_dict(),
                            "top3": self.r_top3.to_dict()},
            "fid": self.fid,
            "mm_dist": self.mm_dist,
            "diversity": self.diversity.to_dict(),
            "mmodality": self.mmodality,
            "metadata": self.metadata,
        }

    def table(self) -> str:
        head = (f"{'':<12}{'Top-1':>8}{'Top-2':>8}{'Top-3':>8}"
                f"{'FID':>10}{'MM-Dist':>10}{'Diversity':>11}{'MModality':>11}")
        mm = f"{self.mmodality:.4f}" if self.mmodality is not None else "-"
        row = (f"{'generated':<12}{self.r_top1.mean:>8.3f}{self.r_top2.mean:>8.3f}"
               f"{self.r_top3.mean:>8.3f}{self.fid:>10.4f}{self.mm_dist:>10.4f}"
               f"{self.diversity.mean:>11.4f}{mm:>11}")
        return head + "\n" + row


def compute_report(motion_feats: np.ndarray, text_feats: np.ndarray,
                   real_feats: np.ndarray, repeats: int = 20,
                   diversity_size: int = 100, seed: int = 0,
                   mmodality_value: Optional[float] = None,
                   metadata: Optional[dict] = None) -> MetricReport:
    """Assemble the standard report for one generated set against a real set.

    The retrieval candidate-set size shrinks from the standard 32 when the
    evaluated split is smaller (recorded in the metadata).
    """
    n = motion_feats.shape[0]
    batch = min(32, n)
    rp = r_precision(motion_feats, text_feats, batch=batch, repeats=repeats,
                     seed=seed)
    div_size = min(diversity_size, n // 2)
    divs = [diversity(motion_feats, div_size, seed=seed + k) for k in range(repeats)]
    return MetricReport(
        r_top1=rp["top1"], r_top2=rp["top2"], r_top3=rp["top3"],
        fid=fid(real_feats, motion_feats),
        mm_dist=mm_dist(text_feats, motion_feats),
        diversity=RepeatedValue(divs),
        mmodality=mmodality_value,
        metadata={"repeats": repeats, "retrieval_batch": batch,
                  "diversity_size": div_size, "seed": seed, **(metadata or {})},
    )
