"""Bipartite matching and the training loss composition.

Owns the Hungarian solver, the head matching cost, focal loss, and the
assembly of the total loss (classification + localization + counter +
captioning + proposal) with optional deep supervision over decoder layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .geometry import giou_1d


def _lap_solve(cost: np.ndarray) -> tuple[float, list[int]]:
    """Minimum-cost assignment for an R x C matrix with R <= C.

    Potential-based shortest augmenting path (O(R^2 C)); deterministic, scans
    columns in index order and extends at the first minimum. Returns the total
    cost and, per row, the assigned column.
    """
    R, C = cost.shape
    INF = float("inf")
    u = [0.0] * (R + 1)
    v = [0.0] * (C + 1)
    p = [0] * (C + 1)  # p[j] = row matched to column j (1-based), 0 = free
    way = [0] * (C + 1)
    for i in range(1, R + 1):
        p[0] = i
        j0 = 0
        minv = [INF] * (C + 1)
        used = [False] * (C + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = INF
            j1 = -1
            row = cost[i0 - 1]
            for j in range(1, C + 1):
                if not used[j]:
                    cur = row[j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(C + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = [-1] * R
    total = 0.0
    for j in range(1, C + 1):
        if p[j]:
            col_of_row[p[j] - 1] = j - 1
            total += float(cost[p[j] - 1][j - 1])
    return total, col_of_row


def _solve_rect(cost: np.ndarray) -> tuple[float, list[tuple[int, int]]]:
    n, g = cost.shape
    if n <= g:
        total, cols = _lap_solve(cost)
        pairs = [(i, j) for i, j in enumerate(cols) if j >= 0]
    else:
        total, rows = _lap_solve(cost.T)
        pairs = sorted((i, j) for j, i in enumerate(rows) if i >= 0)
    return total, pairs


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost injective assignment of min(N, G) (row, col) pairs.

    For small problems the optimal assignment is additionally refined to the
    lexicographically smallest pair list among all optima, giving a stable
    lowest-(row, col) tie-break; large matrices keep the (still deterministic)
    raw solver output.
    """
    cost = np.asarray(
        cost.detach().cpu().numpy() if isinstance(cost, torch.Tensor) else cost,
        dtype=np.float64,
    )
    if cost.ndim != 2 or cost.size == 0:
        raise ValueError(f"cost must be a nonempty 2D matrix, got shape {cost.shape}")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix contains non-finite entries")
    n, g = cost.shape
    best_total, pairs = _solve_rect(cost)
    if min(n, g) > 8 or max(n, g) > 32:
        return sorted(pairs)
    return _lexicographic_refine(cost, best_total)


def _lexicographic_refine(cost: np.ndarray, best_total: float) -> list[tuple[int, int]]:
    """Greedy row-major selection among all minimum-cost assignments.

    Fixes rows in ascending order, trying columns in ascending order and
    keeping a pair iff the remainder can still reach the optimal total. A row
    is left unmatched only when every optimum does so (possible when rows
    outnumber columns).
    """
    n, g = cost.shape
    tol = 1e-9 * max(1.0, float(np.abs(cost).sum()))
    need = min(n, g)
    fixed: list[tuple[int, int]] = []
    fixed_cost = 0.0
    free_cols = list(range(g))
    for i in range(n):
        if len(fixed) == need:
            break
        rows_after = list(range(i + 1, n))
        rest_need = need - len(fixed) - 1
        for j in free_cols:
            if rest_need == 0:
                rest = 0.0
            else:
                cols_rest = [c for c in free_cols if c != j]
                if len(rows_after) < rest_need or len(cols_rest) < rest_need:
                    continue
                rest, _ = _solve_rect(cost[np.ix_(rows_after, cols_rest)])
            if fixed_cost + cost[i, j] + rest <= best_total + tol:
                fixed.append((i, j))
                fixed_cost += float(cost[i, j])
                free_cols.remove(j)
                break
    return fixed


def focal_loss(
    confidences: torch.Tensor,
    matched_mask: torch.Tensor,
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> torch.Tensor:
    """Binary focal loss; matched queries are positives. Normalized by #positives."""
    p = confidences.clamp(1e-7, 1.0 - 1e-7)
    pos = -alpha * (1.0 - p) ** gamma * torch.log(p)
    neg = -(1.0 - alpha) * p**gamma * torch.log(1.0 - p)
    mask = matched_mask.to(p.dtype)
    total = (mask * pos + (1.0 - mask) * neg).sum()
    return total / mask.sum().clamp(min=1.0)


def head_matching_cost(
    intervals: torch.Tensor,
    confidences: torch.Tensor,
    gt_intervals: torch.Tensor,
    w_giou: float = 2.0,
    w_cls: float = 1.0,
    alpha: float = 0.25,
    gamma: float = 2.0,
) -> torch.Tensor:
    """N x G matching cost: gIoU distance plus a focal-style foreground cost."""
    giou = giou_1d(intervals[:, None, :], gt_intervals[None, :, :])
    p = confidences.clamp(1e-7, 1.0 - 1e-7)
    cls_cost = alpha * (1.0 - p) ** gamma * (-torch.log(p)) - (1.0 - alpha) * p**gamma * (
        -torch.log(1.0 - p)
    )
    return w_giou * (1.0 - giou) + w_cls * cls_cost[:, None]


@dataclass
class LossWeights:
    loc: float = 2.0
    cnt: float = 1.0
    cap: float = 1.0
    prop: float = 1.0


@dataclass
class LossReport:
    cls: float
    loc: float
    cnt: float
    cap: float
    prop: float
    total: float
    weights: LossWeights = field(default_factory=LossWeights)

    def as_dict(self) -> dict[str, float]:
        return {
            "L_cls": self.cls,
            "L_loc": self.loc,
            "L_cnt": self.cnt,
            "L_cap": self.cap,
            "L_prop": self.prop,
            "total": self.total,
        }


def total_loss(
    layer_outputs: Sequence[tuple[torch.Tensor, torch.Tensor]],
    count_logits: torch.Tensor,
    gt_intervals: torch.Tensor,
    caption_nll: Callable[[list[tuple[int, int]]], torch.Tensor] | None,
    prop_loss: torch.Tensor | None,
    weights: LossWeights | None = None,
    deep_supervision: bool = True,
) -> tuple[torch.Tensor, LossReport, list[tuple[int, int]]]:
    """Compose the full training loss for one video.

    layer_outputs: per decoder layer (intervals N x 2, confidences N), final
    layer last. Matching is recomputed per supervised layer; captions are
    scored on the final layer's matched pairs via `caption_nll`, which maps a
    pair list to a mean per-token negative log likelihood.
    Returns (differentiable total, report, final-layer matched pairs).
    """
    weights = weights or LossWeights()
    device = count_logits.device
    dtype = count_logits.dtype
    zero = torch.zeros((), device=device, dtype=dtype)
    g = int(gt_intervals.shape[0])
    c_max = count_logits.shape[-1] - 1

    supervised = list(layer_outputs) if deep_supervision else [layer_outputs[-1]]
    l_cls = zero.clone()
    l_loc = zero.clone()
    final_pairs: list[tuple[int, int]] = []
    for idx, (intervals, conf) in enumerate(supervised):
        n = intervals.shape[0]
        if g > 0:
            cost = head_matching_cost(intervals, conf, gt_intervals)
            pairs = hungarian(cost.detach())
        else:
            pairs = []
        mask = torch.zeros(n, device=device, dtype=dtype)
        for i, _ in pairs:
            mask[i] = 1.0
        l_cls = l_cls + focal_loss(conf, mask)
        if pairs:
            pred = torch.stack([intervals[i] for i, _ in pairs])
            tgt = torch.stack([gt_intervals[j] for _, j in pairs])
            l_loc = l_loc + (1.0 - giou_1d(pred, tgt)).mean()
        if idx == len(supervised) - 1:
            final_pairs = pairs

    target_count = torch.tensor(min(g, c_max), device=device)
    l_cnt = torch.nn.functional.cross_entropy(count_logits.unsqueeze(0), target_count.unsqueeze(0))

    if caption_nll is not None and final_pairs:
        l_cap = caption_nll(final_pairs)
    else:
        l_cap = zero

    l_prop = prop_loss if prop_loss is not None else zero
    total = (
        l_cls
        + weights.loc * l_loc
        + weights.cnt * l_cnt
        + weights.cap * l_cap
        + weights.prop * l_prop
    )
    report = LossReport(
        cls=float(l_cls.detach()),
        loc=float(l_loc.detach()),
        cnt=float(l_cnt.detach()),
        cap=float(l_cap.detach()),
        prop=float(l_prop.detach()),
        total=float(total.detach()),
        weights=weights,
    )
    return total, report, final_pairs
