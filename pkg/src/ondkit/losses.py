"""Training objectives: supervised contrastive loss on embeddings, binary
cross entropy on the 1D projection, and their sum.

The two gradient paths never mix: the contrastive term returns dL/dZ and no
gradient for w, the BCE term returns dL/dw and an exactly-zero dL/dZ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ndnet import NU_CLAMP, sigmoid

DEFAULT_TAU = 0.1


@dataclass
class LossOutput:
    loss: float
    dZ: np.ndarray | None = None
    dw: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def supcon_loss(Z: np.ndarray, labels: np.ndarray, tau: float = DEFAULT_TAU) -> LossOutput:
    """Supervised contrastive loss over cosine similarities.

    Positives for sample i are all other samples with the same binary set
    label; the denominator runs over every j != i.  Samples with no positive
    partner are dropped from the average.  Returns the loss, the analytic
    dL/dZ, and mean positive/negative similarity diagnostics.
    """
    Z = np.asarray(Z, dtype=float)
    labels = np.asarray(labels)
    N = len(Z)
    if N < 2:
        raise ValueError("supcon needs at least 2 samples")
    if tau <= 0:
        raise ValueError("temperature must be > 0")
    norms = np.linalg.norm(Z, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero-norm embedding")
    U = Z / norms[:, None]
    S = U @ U.T                                   # cosine similarities
    same = labels[:, None] == labels[None, :]
    off = ~np.eye(N, dtype=bool)
    pos = same & off
    p_count = pos.sum(axis=1)
    anchors = p_count > 0
    n_anchors = int(anchors.sum())
    if n_anchors == 0:
        raise ValueError("no sample has a positive partner")

    logits = S / tau
    # row-wise log-sum-exp over j != i, max-shifted
    masked = np.where(off, logits, -np.inf)
    row_max = masked.max(axis=1)
    lse = row_max + np.log(np.exp(masked - row_max[:, None]).sum(axis=1))

    per_anchor = np.zeros(N)
    per_anchor[anchors] = -(
        (np.where(pos, logits, 0.0).sum(axis=1)[anchors] / p_count[anchors])
        - lse[anchors]
    )
    loss = per_anchor[anchors].mean()

    # dL/dS via each anchor's row: -1/|P_i| on positives, softmax weight on all j != i
    soft = np.exp(masked - lse[:, None])          # rows sum to 1 over j != i
    inv_p = np.zeros(N)
    inv_p[anchors] = 1.0 / p_count[anchors]
    G = np.zeros((N, N))
    G[anchors] = soft[anchors] - np.where(pos[anchors], inv_p[anchors, None], 0.0)
    G /= n_anchors * tau
    # S is used once per ordered pair (anchor row), but sim(i,j) depends on both
    # U_i and U_j; symmetrize before mapping back through the normalization.
    GS = G + G.T
    dU = GS @ U
    dZ = (dU - (np.sum(dU * U, axis=1)[:, None]) * U) / norms[:, None]

    neg = ~same
    diagnostics = {
        "mean_pos_sim": float(S[pos].mean()) if pos.any() else float("nan"),
        "mean_neg_sim": float(S[neg].mean()) if neg.any() else float("nan"),
        "n_anchors": n_anchors,
    }
    return LossOutput(loss=float(loss), dZ=dZ, dw=None, diagnostics=diagnostics)


def bce_head_loss(Z: np.ndarray, y: np.ndarray, w: np.ndarray) -> LossOutput:
    """Mean binary cross entropy of sigmoid(w.z) against the id/ood label.

    The embedding is behind a stop gradient: dL/dZ is exactly zero; the only
    trained parameter is w, with dL/dw = (1/N) sum (nu_i - y_i) z_i.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(Z) != len(y):
        raise ValueError("Z and y length mismatch")
    if np.any((y != 0) & (y != 1)):
        raise ValueError("labels must be 0 or 1")
    nu = np.clip(sigmoid(Z @ np.asarray(w, dtype=float)), NU_CLAMP, 1.0 - NU_CLAMP)
    loss = float(-np.mean(y * np.log(nu) + (1.0 - y) * np.log(1.0 - nu)))
    dw = Z.T @ (nu - y) / len(y)
    return LossOutput(loss=loss, dZ=np.zeros_like(Z), dw=dw,
                      diagnostics={"mean_nu_id": float(nu[y == 1].mean()) if (y == 1).any() else float("nan"),
                                   "mean_nu_ood": float(nu[y == 0].mean()) if (y == 0).any() else float("nan")})


def joint_objective(Z: np.ndarray, y: np.ndarray, w: np.ndarray,
                    tau: float = DEFAULT_TAU) -> LossOutput:
    """Sum of the contrastive and head losses with the paths kept apart."""
    sc = supcon_loss(Z, y, tau)
    bce = bce_head_loss(Z, y, w)
    diagnostics = {"supcon": sc.loss, "bce": bce.loss, **sc.diagnostics, **bce.diagnostics}
    return LossOutput(loss=sc.loss + bce.loss, dZ=sc.dZ, dw=bce.dw,
                      diagnostics=diagnostics)
