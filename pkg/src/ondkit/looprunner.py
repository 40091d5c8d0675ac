"""The incremental feedback loop.

Session 0 trains the head from scratch on G_0.  Every later session trains
on the union of all stored groups plus the new one (full experience
replay, warm-started from the previous checkpoint, lr/10, fixed epochs).
Labels come from the offline benchmark for G_0 and from the feedback
ledger (oracle or human accept/reject) afterwards.  After each session the
model and the logit baselines are evaluated on the holdout group and on
the cumulative seen pool, and the rows are appended to the metric history.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import benchkit, evalkit, featurestore, ndnet
from .losses import joint_objective
from .ndnet import NDModel, RegularizerConfig
from .optim import (METHOD_IBCE, METHOD_ICONP, SGD, Adam, TrainConfig,
                    early_stop_check, lr_at)

VERDICT_ID = "id"
VERDICT_OOD = "ood"
ACCEPT = "accept"
REJECT = "reject"

BASELINE_METHODS = (evalkit.MSP, evalkit.MAXLOGIT, evalkit.ENERGY)


class LoopError(RuntimeError):
    pass


@dataclass
class FeedbackRecord:
    record_index: int
    verdict: str                     # model's id/ood call
    score: float
    annotator_verdict: str           # accept | reject
    resolved_label: int              # 1 = id, 0 = ood
    annotator: str                   # oracle | human
    timestamp: float = 0.0


@dataclass
class QueueItem:
    item_id: int
    record_index: int
    verdict: str
    score: float
    image_id: int
    bbox: list[float]
    status: str = "pending"          # pending | answered


# --- training --------------------------------------------------------------


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        chunk = order[start:start + batch_size]
        if len(chunk) >= 2:
            yield chunk


def _bce_value(model, X, y):
    fwd, _ = ndnet.forward(model, X, mode="eval")
    return float(-np.mean(y * np.log(fwd.nu) + (1.0 - y) * np.log(1.0 - fwd.nu)))


def train_pool(model: NDModel, X: np.ndarray, y: np.ndarray, cfg: TrainConfig,
               session: int, seed: int) -> NDModel:
    """Train on one pool of (features, binary labels) per the method recipe.

    Session 0 uses the full schedule (warmup for the contrastive recipe,
    early stopping for the BCE one); later sessions use cfg.incremental().
    """
    cfg.validate()
    phase = cfg if session == 0 else cfg.incremental()
    rng = np.random.default_rng((seed, session))
    reg = RegularizerConfig(dropout_p=cfg.dropout_p, mixup=cfg.mixup)
    reg.validate()
    if cfg.method == METHOD_ICONP and cfg.mixup != ndnet.MIXUP_OFF:
        raise LoopError("mixup regularizers apply to the BCE recipe only")

    model = model.copy()
    params = model.params()

    if cfg.method == METHOD_ICONP:
        opt = SGD(params, momentum=cfg.momentum)
        for epoch in range(phase.epochs):
            lr = lr_at(epoch, phase)
            for idx in _batches(len(X), phase.batch_size, rng):
                bx, by = X[idx], y[idx]
                counts = np.bincount(by.astype(int), minlength=2)
                if counts.max() < 2:
                    continue  # no positive pair anywhere in the batch
                fwd, _ = ndnet.forward(model, bx, mode="train", reg=reg, rng=rng)
                out = joint_objective(fwd.z, by, model.w, tau=cfg.tau)
                gW, gb, _ = ndnet.backward(model, fwd, dZ=out.dZ)
                opt.step(gW + gb + [out.dw], lr)
        return model

    # plain binary-classifier recipe: BCE through the whole net, Adam
    use_early_stop = session == 0
    val_idx = np.array([], dtype=int)
    if use_early_stop and len(X) >= 20:
        val_idx = _stratified_split(y, cfg.validation_fraction, rng)
    train_mask = np.ones(len(X), dtype=bool)
    train_mask[val_idx] = False
    Xt, yt = X[train_mask], y[train_mask]
    Xv, yv = X[val_idx], y[val_idx]

    opt = Adam(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    history, best_model = [], model.copy()
    for epoch in range(phase.epochs):
        lr = lr_at(epoch, phase)
        for idx in _batches(len(Xt), phase.batch_size, rng):
            bx, by = Xt[idx], yt[idx]
            if reg.mixup == ndnet.MIXUP_INPUT:
                bx, by = ndnet.apply_mixup(bx, by, reg, rng)
            fwd, by = ndnet.forward(model, bx, mode="train", reg=reg, rng=rng,
                                    labels=by)
            dpre = (fwd.nu - by) / len(by)
            gW, gb, gw = ndnet.backward(model, fwd, dpre=dpre, full_backprop=True)
            opt.step(gW + gb + [gw], lr)
        if use_early_stop and len(Xv):
            history.append(_bce_value(model, Xv, yv))
            stop, best = early_stop_check(history, cfg.early_stopping_window)
            if best == len(history) - 1:
                best_model = model.copy()
            if stop:
                return best_model
    return best_model if (use_early_stop and len(Xv)) else model


def _stratified_split(y, fraction, rng):
    """Validation indices, sampled per label so both sides keep id and ood."""
    val = []
    for label in (0, 1):
        idx = np.flatnonzero(y == label)
        n_val = max(1, int(round(fraction * len(idx)))) if len(idx) > 1 else 0
        rng.shuffle(idx)
        val.extend(idx[:n_val])
    return np.array(sorted(val), dtype=int)


# --- session state ---------------------------------------------------------


@dataclass
class SessionState:
    method: str
    cfg: TrainConfig
    benchmark: benchkit.Benchmark
    header: featurestore.DatasetHeader
    records: list
    model: NDModel | None = None
    session_index: int = -1               # last completed session
    replay: list[int] = field(default_factory=list)
    labels: dict[int, int] = field(default_factory=dict)
    ledger: list[FeedbackRecord] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)
    queue: list[QueueItem] = field(default_factory=list)
    pending_group: int | None = None      # group whose queue is being annotated

    @property
    def replay_size(self) -> int:
        return len(self.replay)

    def features(self, indices) -> np.ndarray:
        return np.stack([self.records[i].feature for i in indices]).astype(float)

    def pool_labels(self, indices) -> np.ndarray:
        return np.array([self.labels.get(i, int(self.records[i].is_id))
                         for i in indices], dtype=float)

    def group_records(self, group: benchkit.Group):
        return [self.records[i] for i in group.indices]


def _evaluate_session(state: SessionState, session: int):
    """Append holdout and cumulative-seen rows for the model and baselines."""
    rows = []
    seen_records = [state.records[i] for i in state.replay]
    targets = [("holdout", state.group_records(state.benchmark.holdout)),
               ("seen", seen_records)]
    for group_tag, recs in targets:
        ss = evalkit.model_score(state.model, recs, group=group_tag,
                                 method=state.method)
        rows.append(evalkit.evaluate(ss))
        for method in BASELINE_METHODS:
            bs = evalkit.baseline_score_set(recs, method, group=group_tag)
            rows.append(evalkit.evaluate(bs))
    for r in rows:
        state.history.append({"session": session, **r.as_row()})


def initial_session(benchmark: benchkit.Benchmark,
                    header: featurestore.DatasetHeader, records,
                    cfg: TrainConfig) -> SessionState:
    """Train from scratch on G_0, seed the replay store and metric history."""
    cfg.validate()
    if not benchmark.groups:
        raise LoopError("benchmark has no trainable group")
    state = SessionState(method=cfg.method, cfg=cfg, benchmark=benchmark,
                         header=header, records=records)
    g0 = benchmark.groups[0]
    if len(g0.indices) < 4:
        raise LoopError("G_0 too small to form a batch")
    model = ndnet.init_model(header.D, seed=cfg.seed,
                             widths=_widths_for(header.D))
    X = state.features(g0.indices)
    y = state.pool_labels(g0.indices)
    ndnet.fit_standardizer(model, X)   # frozen after S_0
    state.model = ndnet.snap_to_f32(train_pool(model, X, y, cfg, session=0,
                                               seed=cfg.seed))
    state.replay = list(g0.indices)
    state.session_index = 0
    _evaluate_session(state, 0)
    return state


def _widths_for(D: int) -> list[int]:
    # keep the head lightweight for small synthetic feature dims
    if D >= 512:
        return list(ndnet.DEFAULT_WIDTHS)
    return [max(2 * D, 32), max(D, 16), max(D // 2, 16), max(D // 2, 16)]


def run_session(state: SessionState, group_index: int,
                extra_labels: dict[int, int] | None = None) -> SessionState:
    """Consume group G_i: warm start, full replay, lr/10, fixed epochs."""
    if state.model is None:
        raise LoopError("no trained checkpoint; run the initial session first")
    if group_index != state.session_index + 1:
        raise LoopError(
            f"session order violation: next group is {state.session_index + 1}, "
            f"got {group_index}")
    if group_index >= len(state.benchmark.groups):
        raise LoopError(f"no trainable group {group_index}")
    group = state.benchmark.groups[group_index]
    if extra_labels:
        state.labels.update(extra_labels)
    pool = state.replay + [i for i in group.indices if i not in set(state.replay)]
    X = state.features(pool)
    y = state.pool_labels(pool)
    state.model = ndnet.snap_to_f32(train_pool(state.model, X, y, state.cfg,
                                               session=group_index,
                                               seed=state.cfg.seed))
    state.replay = pool
    state.session_index = group_index
    state.queue = []
    state.pending_group = None
    _evaluate_session(state, group_index)
    return state


def run_replay_session(state: SessionState) -> SessionState:
    """Retrain on the replay store alone (all groups consumed already)."""
    if state.model is None:
        raise LoopError("no trained checkpoint; run the initial session first")
    session = state.session_index + 1
    X = state.features(state.replay)
    y = state.pool_labels(state.replay)
    state.model = ndnet.snap_to_f32(train_pool(state.model, X, y, state.cfg,
                                               session=session,
                                               seed=state.cfg.seed))
    state.session_index = session
    _evaluate_session(state, session)
    return state


# --- annotation ------------------------------------------------------------


def predict_verdicts(state: SessionState, indices):
    """Model verdicts for a set of record indices: (verdict, score) pairs."""
    X = state.features(indices)
    fwd, _ = ndnet.forward(state.model, X, mode="eval")
    return [(VERDICT_ID if nu >= 0.5 else VERDICT_OOD, float(nu)) for nu in fwd.nu]


def oracle_annotate(state: SessionState, group_index: int) -> list[FeedbackRecord]:
    """Simulated annotator: accept when the verdict matches ground truth.

    Resolved labels therefore equal the is_id flags exactly.
    """
    group = state.benchmark.groups[group_index]
    out = []
    verdicts = predict_verdicts(state, group.indices)
    now = time.time()
    for idx, (verdict, score) in zip(group.indices, verdicts):
        truth = int(state.records[idx].is_id)
        correct = (verdict == VERDICT_ID) == bool(truth)
        fb = FeedbackRecord(record_index=idx, verdict=verdict, score=score,
                            annotator_verdict=ACCEPT if correct else REJECT,
                            resolved_label=truth, annotator="oracle",
                            timestamp=now)
        out.append(fb)
        state.ledger.append(fb)
        state.labels[idx] = truth
    return out


def open_queue(state: SessionState, group_index: int) -> list[QueueItem]:
    """Stage group G_i for human annotation: one pending item per record."""
    if state.pending_group is not None and state.pending_group != group_index:
        raise LoopError(f"group {state.pending_group} is already staged")
    group = state.benchmark.groups[group_index]
    verdicts = predict_verdicts(state, group.indices)
    state.queue = [QueueItem(item_id=i, record_index=idx, verdict=v, score=s,
                             image_id=state.records[idx].image_id,
                             bbox=[float(b) for b in state.records[idx].bbox])
                   for i, (idx, (v, s)) in enumerate(zip(group.indices, verdicts))]
    state.pending_group = group_index
    return state.queue


def ingest_human_feedback(state: SessionState, feedback: list[dict]) -> list[FeedbackRecord]:
    """Apply accept/reject verdicts against the stored model verdicts.

    feedback entries are {"item_id": int, "verdict": "accept"|"reject"}.
    Duplicate or unknown items raise without touching the ledger.
    """
    by_id = {q.item_id: q for q in state.queue}
    staged = []
    for fb in feedback:
        item = by_id.get(fb["item_id"])
        if item is None:
            raise LoopError(f"unknown item {fb['item_id']}")
        if item.status != "pending":
            raise LoopError(f"duplicate feedback for item {fb['item_id']}")
        if fb["verdict"] not in (ACCEPT, REJECT):
            raise LoopError(f"verdict must be accept or reject, got {fb['verdict']!r}")
        staged.append((item, fb["verdict"]))
    out = []
    now = time.time()
    for item, verdict in staged:
        model_says_id = item.verdict == VERDICT_ID
        resolved = int(model_says_id if verdict == ACCEPT else not model_says_id)
        rec = FeedbackRecord(record_index=item.record_index, verdict=item.verdict,
                             score=item.score, annotator_verdict=verdict,
                             resolved_label=resolved, annotator="human",
                             timestamp=now)
        item.status = "answered"
        state.ledger.append(rec)
        state.labels[item.record_index] = resolved
        out.append(rec)
    return out


def run_loop(benchmark, header, records, cfg: TrainConfig,
             sessions: int | None = None, annotator: str = "oracle",
             on_session=None) -> SessionState:
    """Oracle-driven end-to-end protocol: S_0 then annotate + train each group."""
    state = initial_session(benchmark, header, records, cfg)
    if on_session:
        on_session(state)
    n = len(benchmark.groups) if sessions is None else min(sessions, len(benchmark.groups))
    for g in range(1, n):
        if annotator != "oracle":
            raise LoopError("only the oracle annotator can drive a full loop")
        oracle_annotate(state, g)
        run_session(state, g)
        if on_session:
            on_session(state)
    return state


# --- run-directory persistence ---------------------------------------------


def checkpoint_path(run_dir, session: int):
    return os.path.join(run_dir, f"session_{session:02d}.ckpt")


def save_state(state: SessionState, run_dir):
    os.makedirs(run_dir, exist_ok=True)
    if state.model is not None:
        ndnet.save_checkpoint(state.model, checkpoint_path(run_dir, state.session_index))
    with open(os.path.join(run_dir, "ledger.jsonl"), "w") as f:
        for fb in state.ledger:
            f.write(json.dumps(asdict(fb)) + "\n")
    write_history(state.history, os.path.join(run_dir, "history.tsv"))
    meta = {
        "method": state.method,
        "session_index": state.session_index,
        "replay": state.replay,
        "labels": {str(k): v for k, v in state.labels.items()},
        "pending_group": state.pending_group,
        "queue": [asdict(q) for q in state.queue],
        "history": state.history,
    }
    with open(os.path.join(run_dir, "state.json"), "w") as f:
        json.dump(meta, f, indent=1)
    state.cfg.to_file(os.path.join(run_dir, "config.txt"))
    benchkit.save_benchmark(state.benchmark, os.path.join(run_dir, "benchmark.json"))
    with open(os.path.join(run_dir, "manifest.txt"), "w") as f:
        f.write(benchkit.benchmark_manifest(state.benchmark))


def load_state(run_dir, header, records) -> SessionState:
    with open(os.path.join(run_dir, "state.json")) as f:
        meta = json.load(f)
    cfg = TrainConfig.from_file(os.path.join(run_dir, "config.txt"))
    benchmark = benchkit.load_benchmark(os.path.join(run_dir, "benchmark.json"))
    state = SessionState(method=meta["method"], cfg=cfg, benchmark=benchmark,
                         header=header, records=records,
                         session_index=meta["session_index"],
                         replay=list(meta["replay"]),
                         labels={int(k): v for k, v in meta["labels"].items()},
                         history=list(meta["history"]),
                         queue=[QueueItem(**q) for q in meta["queue"]],
                         pending_group=meta["pending_group"])
    ledger_path = os.path.join(run_dir, "ledger.jsonl")
    if os.path.exists(ledger_path):
        with open(ledger_path) as f:
            state.ledger = [FeedbackRecord(**json.loads(ln)) for ln in f if ln.strip()]
    if state.session_index >= 0:
        state.model = ndnet.load_checkpoint(checkpoint_path(run_dir, state.session_index))
    return state


HISTORY_COLUMNS = ["session", "group", "method", "fpr95", "auroc", "n_id",
                   "n_ood", "threshold"]


def write_history(history: list[dict], path):
    lines = ["\t".join(HISTORY_COLUMNS)]
    for row in history:
        lines.append("\t".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                               for c in HISTORY_COLUMNS))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
