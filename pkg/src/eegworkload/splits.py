"""Stratified train/test splitting and k-fold plans."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassSmallerThanK, ClassTooSmall, SingleClassInput


@dataclass
class FoldPlan:
    k: int
    assignments: np.ndarray  # fold index per sample
    seed: int

    def fold_indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train_idx, val_idx) for one fold."""
        val = np.nonzero(self.assignments == fold)[0]
        train = np.nonzero(self.assignments != fold)[0]
        return train, val


def _class_indices(labels: np.ndarray) -> list[np.ndarray]:
    classes = np.unique(labels)
    if classes.size < 2:
        raise SingleClassInput("need both classes present")
    return [np.nonzero(labels == c)[0] for c in classes]


def split_80_20(labels: np.ndarray, seed: int, test_fraction: float = 0.2) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test partition preserving class proportions within 1 sample."""
    labels = np.asarray(labels)
    if labels.size < 10:
        raise ClassTooSmall(f"need at least 10 samples, got {labels.size}")
    per_class = _class_indices(labels)
    if min(idx.size for idx in per_class) < 2:
        raise ClassTooSmall("each class needs at least 2 samples")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5117]))
    train, test = [], []
    for idx in per_class:
        shuffled = idx[rng.permutation(idx.size)]
        n_train = int(round((1.0 - test_fraction) * idx.size))
        n_train = min(max(n_train, 1), idx.size - 1)
        train.append(shuffled[:n_train])
        test.append(shuffled[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def stratified_kfold(labels: np.ndarray, k: int, seed: int) -> FoldPlan:
    """Seeded stratified fold plan.

    Members of each class are shuffled then dealt round-robin; the folds
    receiving one extra member rotate across classes so total fold sizes
    never differ by more than one.
    """
    labels = np.asarray(labels)
    per_class = _class_indices(labels)
    for idx in per_class:
        if idx.size < k:
            raise ClassSmallerThanK(
                f"class with {idx.size} members cannot fill {k} folds"
            )
    assignments = np.empty(labels.size, dtype=np.int64)
    fold_loads = np.zeros(k, dtype=np.int64)
    for c, idx in enumerate(per_class):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF01D, c]))
        shuffled = idx[rng.permutation(idx.size)]
        base, extra = divmod(idx.size, k)
        counts = np.full(k, base, dtype=np.int64)
        if extra:
            # spread the remainder over the currently lightest folds
            order = np.lexsort((np.arange(k), fold_loads))
            counts[order[:extra]] += 1
        start = 0
        for fold in range(k):
            assignments[shuffled[start:start + counts[fold]]] = fold
            start += counts[fold]
        fold_loads += counts
    return FoldPlan(k=k, assignments=assignments, seed=seed)
