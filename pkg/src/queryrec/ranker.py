"""Point-wise click ranker over suggestion candidates.

A user's recent behavior sequence runs through a bidirectional GRU; each
state is transformed by a per-action-type matrix and damped by the elapsed
time raised to a learned non-positive exponent; attention conditioned on the
candidate query's state summarizes the sequence into a glimpse; one further
GRU step fuses query and glimpse into the behavior feature s1. The head
scores [user field ; query field ; context field] into a click probability.

Three variants share this code path: ``modified`` (the full model), ``plain``
(attention without the action/time modulation), and ``gru_only`` (terminal
encoder states instead of attention). Action types and time deltas reach the
model only through the modulation, so the latter two variants cannot see
them — the point of the ablation.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import nncore as nn
from .corpus import BehaviorEvent, ContextFeatures, Corpus, Instance, SEASONS
from .metapath import (
    CandidateFeatures,
    CandidateSet,
    MetaPathIndex,
    PER_PATH_CAP_DEFAULT,
    TOTAL_CAP_DEFAULT,
    generate_candidates,
)
from .metrics import SingleClassTestSet, f1_score, rank_sum_auc

VARIANTS = ("modified", "plain", "gru_only")

HOUR_BUCKETS = 6  # 4-hour buckets


class RankerError(Exception):
    pass


class IdOutOfRange(RankerError):
    pass


class TimestampAfterDecision(RankerError):
    pass


class NonFiniteLoss(RankerError):
    pass


class CheckpointError(RankerError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    word_dim: int = 16
    category_dim: int = 8
    user_dim: int = 8
    value_dim: int = 4
    hour_dim: int = 4
    x_dim: int = 32          # item encoding fed to the GRU
    hidden: int = 256        # per-direction GRU width
    attn_hidden: int | None = None   # defaults to hidden
    s0_dim: int | None = None        # query-state width; defaults to hidden
    head_hidden: tuple[int, int] = (64, 32)
    variant: str = "modified"
    # weights come from the modulated states; the glimpse averages the raw
    # encoder states unless this is set
    glimpse_uses_modulated: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise RankerError(f"unknown variant {self.variant!r}")

    @property
    def attn_hidden_(self) -> int:
        return self.attn_hidden if self.attn_hidden is not None else self.hidden

    @property
    def s0_dim_(self) -> int:
        return self.s0_dim if self.s0_dim is not None else self.hidden


@dataclass
class EvalReport:
    auc: float
    f1: float
    threshold: float
    n_instances: int

    def to_json_obj(self) -> dict:
        return {"auc": self.auc, "f1": self.f1, "threshold": self.threshold,
                "n_instances": self.n_instances}


def embed(table: nn.Tensor, id: int) -> nn.Tensor:
    """Row lookup with bounds checking."""
    if not 0 <= id < table.data.shape[0]:
        raise IdOutOfRange(f"id {id} outside table of {table.data.shape[0]} rows")
    return nn.row(table, id)


def _pad_ids(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max((len(s) for s in seqs), default=0) or 1
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=np.float64)
    for r, s in enumerate(seqs):
        ids[r, :len(s)] = s
        mask[r, :len(s)] = 1.0
    return ids, mask


def dt_hours_from_seconds(dt_seconds: float) -> float:
    """Elapsed-time preprocessing: floor at one second, convert to hours,
    floor again so the decay exponent never sees values under 1e-3."""
    return max(max(dt_seconds, 1.0) / 3600.0, nn.DT_FLOOR)


class RankingModel:
    """Parameters plus corpus-derived lookup arrays, bound at creation."""

    def __init__(self, config: ModelConfig, corpus: Corpus, seed: int = 0):
        self.config = config
        self.corpus = corpus
        rng = np.random.default_rng(seed)
        c = config

        self.n_users = corpus.n_users
        self.n_words = max(corpus.n_words, 1)
        self.n_categories = max(corpus.n_categories, 1)
        self.n_values = max(corpus.n_discrete_values, 1)

        # +1 row per id table: reserved index for ids unseen at training time
        self.word_E = nn.uniform_init(rng, (self.n_words + 1, c.word_dim))
        self.cat_E = nn.uniform_init(rng, (self.n_categories + 1, c.category_dim))
        self.user_E = nn.uniform_init(rng, (self.n_users + 1, c.user_dim))
        self.value_E = nn.uniform_init(rng, (self.n_values + 1, c.value_dim))
        self.hour_E = nn.uniform_init(rng, (HOUR_BUCKETS, c.hour_dim))

        self.item_ids, self.item_mask = _pad_ids([it.title_tokens for it in corpus.items])
        self.item_cat = np.array([it.category for it in corpus.items], dtype=np.int64)
        self.item_vids, self.item_vmask = _pad_ids(
            [[v for _, v in it.discrete_feats] for it in corpus.items])
        self.item_cont = np.array([it.continuous_feats for it in corpus.items],
                                  dtype=np.float64).reshape(len(corpus.items), -1)

        self.query_ids, self.query_mask = _pad_ids([q.text_tokens for q in corpus.queries])
        qcats = []
        for q in corpus.queries:
            cats = q.top_categories if q.top_categories is not None \
                else (self.n_categories, self.n_categories, self.n_categories)
            qcats.append(cats)
        self.query_cats = np.array(qcats, dtype=np.int64)
        self.query_vids, self.query_vmask = _pad_ids(
            [[v for _, v in q.discrete_feats] for q in corpus.queries])
        self.query_cont = np.array([q.continuous_feats for q in corpus.queries],
                                   dtype=np.float64).reshape(len(corpus.queries), -1)

        self.raw_item_dim = (c.word_dim + c.category_dim + c.value_dim
                             + self.item_cont.shape[1])
        self.query_repr_dim = c.word_dim + c.category_dim

        self.item_proj_w = nn.uniform_init(rng, (self.raw_item_dim, c.x_dim))
        self.item_proj_b = nn.parameter(np.zeros(c.x_dim))
        self.fwd = nn.GruParams.create(rng, c.x_dim, c.hidden)
        self.bwd = nn.GruParams.create(rng, c.x_dim, c.hidden)
        state_width = 2 * c.hidden
        self.attn = nn.AttentionParams.create(rng, state_width, c.s0_dim_,
                                              c.attn_hidden_)
        self.query_proj_w = nn.uniform_init(rng, (self.query_repr_dim, c.s0_dim_))
        self.query_proj_b = nn.parameter(np.zeros(c.s0_dim_))
        self.fuse = nn.GruParams.create(rng, self.query_repr_dim + state_width,
                                        c.s0_dim_)
        self.empty_behavior = nn.uniform_init(rng, (c.s0_dim_,))
        head_in = (c.user_dim + c.s0_dim_                       # user field
                   + self.query_repr_dim + 6 + c.value_dim      # query field
                   + self.query_cont.shape[1]
                   + len(SEASONS) + 1 + c.hour_dim)             # context field
        self.head = nn.DenseHead.create(rng, head_in, *c.head_hidden)

    # -- parameters ---------------------------------------------------------

    def named_parameters(self) -> dict[str, nn.Tensor]:
        out = {
            "word_E": self.word_E, "cat_E": self.cat_E, "user_E": self.user_E,
            "value_E": self.value_E, "hour_E": self.hour_E,
            "item_proj_w": self.item_proj_w, "item_proj_b": self.item_proj_b,
            "query_proj_w": self.query_proj_w, "query_proj_b": self.query_proj_b,
            "empty_behavior": self.empty_behavior,
        }
        out.update(self.fwd.named("fwd"))
        out.update(self.bwd.named("bwd"))
        out.update(self.attn.named("attn"))
        out.update(self.fuse.named("fuse"))
        out.update(self.head.named("head"))
        return out

    def parameters(self) -> list[nn.Tensor]:
        return list(self.named_parameters().values())

    def with_variant(self, variant: str) -> "RankingModel":
        """A view of the same parameters under a different forward variant."""
        clone = object.__new__(RankingModel)
        clone.__dict__ = {**self.__dict__, "config": replace(self.config,
                                                             variant=variant)}
        return clone

    # -- encoding -----------------------------------------------------------

    def _safe_id(self, id: int, n_real: int) -> int:
        # reserved trailing row covers ids minted after training
        return id if 0 <= id < n_real else n_real

    def _item_inputs(self, item_ids: Sequence[int]) -> nn.Tensor:
        idx = np.array(item_ids, dtype=np.int64)
        parts = [
            nn.mean_rows(self.word_E, self.item_ids[idx], self.item_mask[idx]),
            nn.take_rows(self.cat_E, self.item_cat[idx]),
            nn.mean_rows(self.value_E, self.item_vids[idx], self.item_vmask[idx]),
        ]
        if self.item_cont.shape[1]:
            parts.append(nn.constant(self.item_cont[idx]))
        raw = nn.concat(parts, axis=1)
        return nn.add(nn.matmul(raw, self.item_proj_w),
                      nn.broadcast_rows(self.item_proj_b, len(item_ids)))

    def query_repr(self, qid: int) -> nn.Tensor:
        if not 0 <= qid < self.corpus.n_queries:
            raise IdOutOfRange(f"query {qid} outside corpus of {self.corpus.n_queries}")
        text = nn.reshape(nn.mean_rows(self.word_E, self.query_ids[qid:qid + 1],
                                       self.query_mask[qid:qid + 1]),
                          (self.config.word_dim,))
        cats = nn.matmul(nn.constant(np.full(3, 1.0 / 3.0)),
                         nn.take_rows(self.cat_E, self.query_cats[qid]))
        return nn.concat([text, cats])

    def query_state(self, query_repr: nn.Tensor) -> nn.Tensor:
        return nn.add(nn.matmul(query_repr, self.query_proj_w), self.query_proj_b)

    def behavior_state(self, history: Sequence[BehaviorEvent], decision_time: int):
        """The query-independent part of the encoder: per-event states (and
        their modulated counterparts for the modified variant), or the
        terminal-state summary for the attention-free variant. Returns None
        for an empty history."""
        if not history:
            return None
        for ev in history:
            if ev.timestamp >= decision_time:
                raise TimestampAfterDecision(
                    f"event at {ev.timestamp} not before decision {decision_time}")
        xs_mat = self._item_inputs([ev.item for ev in history])
        xs = [nn.row(xs_mat, k) for k in range(len(history))]
        variant = self.config.variant
        if variant == "gru_only":
            h = nn.constant(np.zeros(self.config.hidden))
            for x in xs:
                h = nn.gru_step(self.fwd, x, h)
            hb = nn.constant(np.zeros(self.config.hidden))
            for x in reversed(xs):
                hb = nn.gru_step(self.bwd, x, hb)
            return {"summary": nn.concat([h, hb])}
        states = nn.bigru_encode(self.fwd, self.bwd, xs)
        h_base = nn.stack(states)
        if variant == "plain":
            return {"base": h_base, "primes": h_base}
        actions = np.array([ev.action for ev in history], dtype=np.int64)
        dts = np.array([dt_hours_from_seconds(decision_time - ev.timestamp)
                        for ev in history])
        h_primes = nn.modulate_sequence(h_base, actions, dts, self.attn)
        return {"base": h_base, "primes": h_primes}

    def behavior_feature(self, bstate, query_repr: nn.Tensor,
                         s0: nn.Tensor) -> nn.Tensor:
        """s1: one fused recurrence step over [query ; glimpse] from s0."""
        if bstate is None:
            return self.empty_behavior
        if "summary" in bstate:
            glimpse = bstate["summary"]
        else:
            bases = bstate["primes"] if self.config.glimpse_uses_modulated \
                else bstate["base"]
            _, glimpse = nn.attend(self.attn, s0, bstate["primes"], h_bases=bases)
        return nn.gru_step(self.fuse, nn.concat([query_repr, glimpse]), s0)

    def encode_behavior(self, history: Sequence[BehaviorEvent], decision_time: int,
                        qid: int) -> nn.Tensor:
        q = self.query_repr(qid)
        return self.behavior_feature(self.behavior_state(history, decision_time),
                                     q, self.query_state(q))

    def attention_weights(self, history: Sequence[BehaviorEvent],
                          decision_time: int, qid: int) -> np.ndarray:
        """Inference helper: the attention distribution over history events."""
        with nn.no_grad():
            bstate = self.behavior_state(history, decision_time)
            if bstate is None or "summary" in bstate:
                return np.zeros(0)
            s0 = self.query_state(self.query_repr(qid))
            weights, _ = nn.attend(self.attn, s0, bstate["primes"],
                                   h_bases=bstate["base"])
            return weights.data.copy()

    # -- scoring ------------------------------------------------------------

    def _context_vec(self, ctx: ContextFeatures) -> nn.Tensor:
        onehot = np.zeros(len(SEASONS) + 1)
        onehot[SEASONS.index(ctx.season)] = 1.0
        onehot[-1] = 1.0 if ctx.special_day else 0.0
        hour_emb = nn.row(self.hour_E, min(ctx.hour_of_day // 4, HOUR_BUCKETS - 1))
        return nn.concat([nn.constant(onehot), hour_emb])

    def _query_field(self, qid: int, feats: CandidateFeatures | None) -> nn.Tensor:
        v = feats.vector() if feats is not None else (0.0,) * 6
        meta = nn.constant([v[0], math.log1p(v[1]), v[2], math.log1p(v[3]),
                            v[4], math.log1p(v[5])])
        value_mean = nn.reshape(
            nn.mean_rows(self.value_E, self.query_vids[qid:qid + 1],
                         self.query_vmask[qid:qid + 1]),
            (self.config.value_dim,))
        parts = [self.query_repr(qid), meta, value_mean]
        if self.query_cont.shape[1]:
            parts.append(nn.constant(self.query_cont[qid]))
        return nn.concat(parts)

    def _head_probs(self, inst: Instance, feats: CandidateFeatures | None,
                    bstate) -> nn.Tensor:
        q = self.query_repr(inst.query)
        s0 = self.query_state(q)
        s1 = self.behavior_feature(bstate, q, s0)
        user_vec = nn.row(self.user_E, self._safe_id(inst.user, self.n_users))
        head_in = nn.concat([user_vec, s1, self._query_field(inst.query, feats),
                             self._context_vec(inst.context)])
        return nn.dense_head_probs(self.head, head_in)

    def instance_loss(self, inst: Instance, feats: CandidateFeatures | None,
                      bstate=None) -> nn.Tensor:
        """Cross-entropy of the softmax head against the instance label."""
        if bstate is None:
            bstate = self.behavior_state(inst.history, inst.decision_time)
        probs = self._head_probs(inst, feats, bstate)
        return nn.scale(nn.log(nn.pick(probs, inst.label)), -1.0)

    def score(self, inst: Instance, feats: CandidateFeatures | None) -> float:
        """p_click: the positive-class softmax output."""
        with nn.no_grad():
            bstate = self.behavior_state(inst.history, inst.decision_time)
            return float(self._head_probs(inst, feats, bstate).data[1])

    def rank_candidates(self, user: int, history: Sequence[BehaviorEvent],
                        decision_time: int, context: ContextFeatures,
                        candidates: CandidateSet, top_n: int = 4
                        ) -> list[tuple[int, float]]:
        """Score every candidate against one shared behavior encoding; order
        by probability descending, query id ascending."""
        with nn.no_grad():
            bstate = self.behavior_state(history, decision_time)
            scored = []
            for qid, feats in candidates.entries:
                inst = Instance(user=user, query=qid, label=0, context=context,
                                decision_time=decision_time, history=())
                p = float(self._head_probs(inst, feats, bstate).data[1])
                scored.append((qid, p))
        scored.sort(key=lambda qp: (-qp[1], qp[0]))
        return scored[:max(top_n, 0)]


# ---------------------------------------------------------------------------
# candidate features for logged instances
# ---------------------------------------------------------------------------

def recent_items_of(history: Sequence[BehaviorEvent]) -> list[int]:
    """Distinct consumed items, first-seen order, history oldest-first."""
    seen: list[int] = []
    have = set()
    for ev in history:
        if ev.item not in have:
            seen.append(ev.item)
            have.add(ev.item)
    return seen


class FeatureCache:
    """Candidate features per instance, memoized per impression.

    Instances from one impression share (user, decision_time) and therefore
    one candidate set; training and evaluation reuse it instead of rerunning
    generation per instance.
    """

    def __init__(self, indexes: Mapping[str, MetaPathIndex],
                 per_path_cap: int = PER_PATH_CAP_DEFAULT,
                 total_cap: int = TOTAL_CAP_DEFAULT):
        self.indexes = indexes
        self.per_path_cap = per_path_cap
        self.total_cap = total_cap
        self._cache: dict[tuple, dict[int, CandidateFeatures]] = {}

    def candidates_for(self, history: Sequence[BehaviorEvent],
                       key: tuple) -> dict[int, CandidateFeatures]:
        hit = self._cache.get(key)
        if hit is None:
            cands = generate_candidates(recent_items_of(history), self.indexes,
                                        per_path_cap=self.per_path_cap,
                                        total_cap=self.total_cap)
            hit = dict(cands.entries)
            self._cache[key] = hit
        return hit

    def features(self, inst: Instance) -> CandidateFeatures | None:
        table = self.candidates_for(inst.history, (inst.user, inst.decision_time))
        return table.get(inst.query)


# ---------------------------------------------------------------------------
# training / evaluation
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 3
    lr: float = 1e-3
    optimizer: str = "adam"   # "adam" | "sgd"
    batch_impressions: int = 8
    seed: int = 0
    shuffle: bool = True

    def make_optimizer(self):
        if self.optimizer == "adam":
            return nn.Adam(lr=self.lr)
        if self.optimizer == "sgd":
            return nn.SGD(lr=self.lr)
        raise RankerError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    epoch_losses: list[float]
    n_instances: int
    n_steps: int


def _group_by_impression(instances: Sequence[Instance]) -> list[list[Instance]]:
    groups: dict[tuple, list[Instance]] = {}
    for inst in instances:
        groups.setdefault((inst.user, inst.decision_time), []).append(inst)
    return list(groups.values())


def train(model: RankingModel, instances: Sequence[Instance],
          feature_cache: FeatureCache, config: TrainConfig,
          on_epoch: Callable[[int, float], None] | None = None) -> TrainResult:
    """Minibatch cross-entropy descent. Instances sharing an impression share
    one encoder pass on the tape; per-group losses are swept with seed
    1/batch_instances so leaf gradients accumulate the mean-instance-loss
    gradient. The decay exponent is projected back to <= 0 after every step.
    ``on_epoch(epoch, mean_loss)`` runs after each epoch — a monitoring hook
    for validation curves or early-stopping checks by the caller."""
    if not instances:
        raise RankerError("empty training set")
    params = model.parameters()
    opt = config.make_optimizer()
    rng = np.random.default_rng(config.seed)
    groups = _group_by_impression(instances)
    feats = [[feature_cache.features(i) for i in g] for g in groups]

    epoch_losses = []
    n_steps = 0
    order = np.arange(len(groups))
    for epoch in range(config.epochs):
        if config.shuffle:
            rng.shuffle(order)
        total_loss = 0.0
        n_seen = 0
        for start in range(0, len(order), config.batch_impressions):
            batch = order[start:start + config.batch_impressions]
            batch_n = sum(len(groups[g]) for g in batch)
            nn.zero_grad(params)
            for g in batch:
                group = groups[g]
                where = (f"epoch {epoch}, impression group {g} "
                         f"(user {group[0].user}, t {group[0].decision_time})")
                try:
                    bstate = model.behavior_state(group[0].history,
                                                  group[0].decision_time)
                    losses = [model.instance_loss(inst, f, bstate)
                              for inst, f in zip(group, feats[g])]
                except nn.NonFiniteInput as e:
                    # a diverged parameter state surfaces as a zero or
                    # non-finite value inside the loss graph
                    raise NonFiniteLoss(f"loss diverged at {where}: {e}") from e
                group_loss = losses[0]
                for term in losses[1:]:
                    group_loss = nn.add(group_loss, term)
                value = float(group_loss.data)
                if not math.isfinite(value):
                    raise NonFiniteLoss(f"non-finite loss at {where}")
                total_loss += value
                n_seen += len(group)
                nn.backward(group_loss, seed=1.0 / batch_n)
            opt.step(params)
            nn.project_epsilon(model.attn)
            assert float(model.attn.epsilon.data) <= 0.0
            n_steps += 1
        epoch_losses.append(total_loss / max(n_seen, 1))
        if on_epoch is not None:
            on_epoch(epoch, epoch_losses[-1])
    return TrainResult(epoch_losses=epoch_losses, n_instances=len(instances),
                       n_steps=n_steps)


def evaluate(model: RankingModel, instances: Sequence[Instance],
             feature_cache: FeatureCache, threshold: float = 0.5) -> EvalReport:
    if not instances:
        raise RankerError("empty evaluation set")
    scores = np.array([model.score(i, feature_cache.features(i)) for i in instances])
    labels = np.array([i.label for i in instances])
    if labels.min() == labels.max():
        raise SingleClassTestSet("evaluation set has a single label value")
    return EvalReport(auc=rank_sum_auc(scores, labels),
                      f1=f1_score(scores, labels, threshold=threshold),
                      threshold=threshold, n_instances=len(instances))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_checkpoint(model: RankingModel, path) -> None:
    params = {}
    for name, p in model.named_parameters().items():
        # asarray, not ascontiguousarray: the latter promotes 0-d to 1-d,
        # which would corrupt the scalar decay exponent's shape
        arr = np.asarray(p.data, dtype=np.float64)
        params[name] = {"shape": list(arr.shape),
                        "data": base64.b64encode(arr.tobytes()).decode("ascii")}
    blob = {
        "kind": "ranking_model",
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": {
            "n_users": model.n_users, "n_words": model.n_words,
            "n_categories": model.n_categories, "n_values": model.n_values,
            "n_items": model.corpus.n_items, "n_queries": model.corpus.n_queries,
            "item_cont": model.item_cont.shape[1],
            "query_cont": model.query_cont.shape[1],
        },
        "params": params,
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True), encoding="utf-8")


def load_checkpoint(path, corpus: Corpus) -> RankingModel:
    try:
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable checkpoint: {e}") from None
    if blob.get("kind") != "ranking_model":
        raise CheckpointError(f"{path}: not a model checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {blob.get('version')}")
    cfg_obj = dict(blob["config"])
    for key in ("head_hidden",):
        if key in cfg_obj and isinstance(cfg_obj[key], list):
            cfg_obj[key] = tuple(cfg_obj[key])
    config = ModelConfig(**cfg_obj)
    model = RankingModel(config, corpus, seed=0)
    vocab = blob.get("vocab", {})
    checks = {
        "n_users": model.n_users, "n_words": model.n_words,
        "n_categories": model.n_categories, "n_values": model.n_values,
        "n_items": corpus.n_items, "n_queries": corpus.n_queries,
        "item_cont": model.item_cont.shape[1],
        "query_cont": model.query_cont.shape[1],
    }
    for key, expected in checks.items():
        if vocab.get(key) != expected:
            raise CheckpointError(
                f"{path}: corpus mismatch on {key} (checkpoint "
                f"{vocab.get(key)}, corpus {expected})")
    named = model.named_parameters()
    saved = blob.get("params", {})
    if set(saved) != set(named):
        missing = set(named) - set(saved)
        extra = set(saved) - set(named)
        raise CheckpointError(f"{path}: parameter set mismatch "
                              f"(missing {sorted(missing)}, extra {sorted(extra)})")
    for name, p in named.items():
        entry = saved[name]
        shape = tuple(entry["shape"])
        if shape != p.data.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}: "
                                  f"checkpoint {shape}, model {p.data.shape}")
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype=np.float64).reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{path}: non-finite values in {name}")
        p.data = arr.copy()
    return model
