"""Assembled end-to-end system and its joint training loops.

The scoring path is features -> normalization/context expansion -> statistics
network -> MAP supervector -> fixed PCA -> embedding network -> quadratic
trial scoring. Joint training runs Adam on the prior-weighted cross-entropy
over sampled trial batches, regularized toward a snapshot of the initial
parameters, halving the learning rate when the dev-set cost stops improving
and returning the best-on-dev parameters.

Backpropagation through the statistics network is memory-checkpointed: the
per-frame activations are dropped once an utterance's statistics exist and
are recomputed during the backward pass, which leaves gradients bit-identical
to the full-graph pass while only one utterance's frame-level activations are
ever live.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .corpus import Corpus
from .dplda import (
    DEFAULT_E2E_PAIRS,
    DEFAULT_JOINT_PAIRS,
    DpldaParams,
    ObjectiveConfig,
    TrialBatch,
    bxe_objective,
    draw_groups,
    make_pair_pool,
)
from .errors import ConfigError, InputError, ShapeError
from .frontend import (
    DEFAULT_CONTEXT,
    DEFAULT_N_DCT,
    DEFAULT_STMVN_WINDOW_S,
    context_expand,
    stmvn,
)
from .gmm import DiagGmm, sufficient_stats
from .ivecnet import DEFAULT_RELEVANCE, IvecNet, PcaModel, map_supervector
from .metrics import ScoredTrials, c_primary, eer
from .statsnet import StatsNet

logger = logging.getLogger(__name__)

DEFAULT_EPOCH_BATCHES = 250


@dataclass
class FrontendConfig:
    window_s: float = DEFAULT_STMVN_WINDOW_S
    frame_rate_hz: float = 100.0
    context: int = DEFAULT_CONTEXT
    n_dct: int = DEFAULT_N_DCT


class ActivationLedger:
    """Counts utterances whose frame-level activations are currently live."""

    def __init__(self):
        self.live = 0
        self.max_live = 0

    def acquire(self):
        self.live += 1
        self.max_live = max(self.max_live, self.live)

    def release(self):
        self.live -= 1


@dataclass
class E2eSystem:
    """All stages wired together; pca and the MAP prior stay frozen."""

    frontend: FrontendConfig
    stats_net: StatsNet
    ubm: DiagGmm
    pca: PcaModel
    ivec_net: IvecNet
    dplda: DpldaParams
    relevance: float = DEFAULT_RELEVANCE
    snapshot: netcore.ParamSnapshot | None = None

    @property
    def n_stats_params(self):
        return 2 * len(self.stats_net.net.layers)

    @property
    def n_ivec_params(self):
        return 2 * len(self.ivec_net.net.layers)

    def trainable_parameters(self):
        """Flat list: statistics net, embedding net, then (lam, gamma, c, k)."""
        return (
            self.stats_net.net.parameters()
            + self.ivec_net.net.parameters()
            + [self.dplda.lam, self.dplda.gamma, self.dplda.c, np.asarray(self.dplda.k, dtype=np.float64)]
        )

    def set_trainable_parameters(self, params):
        n_s, n_i = self.n_stats_params, self.n_ivec_params
        if len(params) != n_s + n_i + 4:
            raise ShapeError("trainable parameter list has the wrong length")
        self.stats_net.net.set_parameters(params[:n_s])
        self.ivec_net.net.set_parameters(params[n_s : n_s + n_i])
        lam, gamma, c, k = params[n_s + n_i :]
        self.dplda = DpldaParams(lam, gamma, c, float(k))

    def to_tensors(self):
        tensors = {
            "frontend.window_s": np.float64(self.frontend.window_s),
            "frontend.frame_rate_hz": np.float64(self.frontend.frame_rate_hz),
            "frontend.context": np.float64(self.frontend.context),
            "frontend.n_dct": np.float64(self.frontend.n_dct),
            "relevance": np.float64(self.relevance),
        }
        tensors.update(self.stats_net.to_tensors("stats_net."))
        tensors.update(self.ubm.to_tensors("ubm."))
        tensors.update(self.pca.to_tensors("pca."))
        tensors.update(self.ivec_net.to_tensors("ivec_net."))
        tensors.update(self.dplda.to_tensors("dplda."))
        if self.snapshot is not None:
            tensors["snapshot.weights"] = self.snapshot.weights
            for i, value in enumerate(self.snapshot.values):
                tensors[f"snapshot.values.{i}"] = value
        return tensors

    @classmethod
    def from_tensors(cls, tensors):
        snapshot = None
        if "snapshot.weights" in tensors:
            weights = np.atleast_1d(np.asarray(tensors["snapshot.weights"]))
            values = [
                np.asarray(tensors[f"snapshot.values.{i}"])
                for i in range(weights.shape[0])
            ]
            snapshot = netcore.ParamSnapshot(values, weights)
        return cls(
            frontend=FrontendConfig(
                window_s=float(tensors["frontend.window_s"]),
                frame_rate_hz=float(tensors["frontend.frame_rate_hz"]),
                context=int(tensors["frontend.context"]),
                n_dct=int(tensors["frontend.n_dct"]),
            ),
            stats_net=StatsNet.from_tensors(tensors, "stats_net."),
            ubm=DiagGmm.from_tensors(tensors, "ubm."),
            pca=PcaModel.from_tensors(tensors, "pca."),
            ivec_net=IvecNet.from_tensors(tensors, "ivec_net."),
            dplda=DpldaParams.from_tensors(tensors, "dplda."),
            relevance=float(tensors["relevance"]),
            snapshot=snapshot,
        )


def assemble_system(
    frontend, stats_net, ubm, pca, ivec_net, dplda, relevance=DEFAULT_RELEVANCE,
    snapshot_weight=0.0,
) -> E2eSystem:
    """Wire the individually trained stages together and freeze the snapshot."""
    system = E2eSystem(
        frontend=frontend,
        stats_net=stats_net,
        ubm=ubm,
        pca=pca,
        ivec_net=ivec_net,
        dplda=dplda.copy(),
        relevance=relevance,
    )
    system.snapshot = netcore.make_snapshot(
        system.trainable_parameters(), snapshot_weight
    )
    return system


def preprocess(system: E2eSystem, features):
    """Normalized features and their context expansion."""
    norm = stmvn(features, system.frontend.window_s, system.frontend.frame_rate_hz)
    return norm, context_expand(norm, system.frontend.context, system.frontend.n_dct)


def _utterance_stats(system, features, ledger=None, keep_cache=False):
    norm, expanded = preprocess(system, features)
    if ledger is not None:
        ledger.acquire()
    acts = netcore.forward(system.stats_net.net, expanded)
    stats = sufficient_stats(acts[-1], norm)
    if not keep_cache:
        acts = None
        if ledger is not None:
            ledger.release()
    return norm, stats, acts


def embed_utterance(system: E2eSystem, features):
    """Unit-norm embedding of one utterance (inference path)."""
    _, stats, _ = _utterance_stats(system, features)
    supervector = map_supervector(system.ubm, stats, system.relevance)
    coords = (supervector - system.pca.mean) @ system.pca.basis
    return netcore.forward(system.ivec_net.net, coords[None, :])[-1][0]


def embed_utterances(system: E2eSystem, features_list):
    return np.stack([embed_utterance(system, f) for f in features_list])


def e2e_score(system: E2eSystem, features_a, features_b):
    """Trial score between two utterances; symmetric in its arguments."""
    from .dplda import dplda_score

    return dplda_score(
        system.dplda, embed_utterance(system, features_a), embed_utterance(system, features_b)
    )


def _system_grads(system, features_list, loss_fn, ledger, keep_caches):
    """Shared forward/backward machinery for both checkpointing modes.

    loss_fn maps the (U, R') embedding matrix to (loss, d_embeddings).
    Returns (loss, grads) with grads aligned to the statistics-net plus
    embedding-net parameters.
    """
    if not features_list:
        raise InputError("empty utterance batch")
    norms = []
    stats_list = []
    caches = []
    for features in features_list:
        norm, stats, acts = _utterance_stats(
            system, features, ledger=ledger, keep_cache=keep_caches
        )
        norms.append(norm)
        stats_list.append(stats)
        caches.append(acts)

    supervectors = np.stack(
        [map_supervector(system.ubm, s, system.relevance) for s in stats_list]
    )
    coords = (supervectors - system.pca.mean) @ system.pca.basis
    ivec_acts = netcore.forward(system.ivec_net.net, coords)
    loss, d_emb = loss_fn(ivec_acts[-1])
    ivec_grads, d_coords = netcore.backward(system.ivec_net.net, ivec_acts, d_emb)
    d_super = d_coords @ system.pca.basis.T

    c, d = system.ubm.n_components, system.ubm.dim
    stats_grads = [np.zeros_like(p) for p in system.stats_net.net.parameters()]
    for u, features in enumerate(features_list):
        d_sv = d_super[u].reshape(c, d)
        sv = supervectors[u].reshape(c, d)
        denom = stats_list[u].n + system.relevance
        d_f = d_sv / denom[:, None]
        d_n = -(d_sv * sv).sum(axis=1) / denom
        d_resp_grad = d_n[None, :] + norms[u] @ d_f.T
        if keep_caches:
            acts = caches[u]
        else:
            if ledger is not None:
                ledger.acquire()
            acts = netcore.forward(system.stats_net.net, preprocess(system, features)[1])
        grads_u, _ = netcore.backward(system.stats_net.net, acts, d_resp_grad)
        if not keep_caches and ledger is not None:
            ledger.release()
        for g, gu in zip(stats_grads, grads_u):
            g += gu
    if keep_caches and ledger is not None:
        for _ in features_list:
            ledger.release()
    return loss, stats_grads + ivec_grads


def checkpointed_grads(system, features_list, loss_fn, ledger=None):
    """Gradients with per-utterance recomputation of frame-level activations.

    Identical arithmetic to full_graph_grads; only one utterance's
    statistics-network activations are live at any time.
    """
    return _system_grads(system, features_list, loss_fn, ledger, keep_caches=False)


def full_graph_grads(system, features_list, loss_fn, ledger=None):
    """Reference backward pass that keeps every activation in memory."""
    return _system_grads(system, features_list, loss_fn, ledger, keep_caches=True)


def lr_schedule_step(history, lr):
    """Halve lr iff the latest dev cost is no better than the best before it."""
    if len(history) < 1:
        raise InputError("need at least one completed epoch")
    if len(history) == 1:
        return lr
    return lr * 0.5 if history[-1] >= min(history[:-1]) else lr


@dataclass
class TrainSchedule:
    n_pairs: int = DEFAULT_JOINT_PAIRS
    lr: float = 1e-3
    epoch_batches: int = DEFAULT_EPOCH_BATCHES
    max_epochs: int = 10
    halve_on_plateau: bool = True
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)

    def __post_init__(self):
        if self.epoch_batches < 1:
            raise ConfigError("epoch_batches must be >= 1")
        if self.n_pairs < 1:
            raise ConfigError("n_pairs must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_eer: float
    dev_c_primary: float
    lr: float


def format_epoch_log(record: EpochRecord):
    return (
        f"{record.epoch}\t{record.train_loss:.6f}\t{record.dev_eer:.6f}"
        f"\t{record.dev_c_primary:.6f}\t{record.lr:.6g}"
    )


def _split_features(corpus: Corpus, split):
    utts = corpus.split(split)
    if not utts:
        raise ConfigError(f"corpus has no {split} utterances")
    return [u.features for u in utts], np.array([u.speaker for u in utts])


def _dev_metrics(embeddings, speakers, params):
    batch = TrialBatch.all_trials(embeddings, speakers)
    trials = ScoredTrials(batch.scores(params), batch.is_target)
    return eer(trials), c_primary(trials)


def train_joint_s2i_dplda(system: E2eSystem, corpus: Corpus, schedule, rng):
    """Jointly train the embedding network and the scoring parameters.

    The statistics network stays frozen, so its PCA-projected outputs are
    precomputed once. Returns (system, history); the system carries the
    best-on-dev parameters (initialization included as a candidate).
    """
    train_feats, train_speakers = _split_features(corpus, "train")
    dev_feats, dev_speakers = _split_features(corpus, "dev")

    def projected(features_list):
        coords = []
        for features in features_list:
            _, stats, _ = _utterance_stats(system, features)
            sv = map_supervector(system.ubm, stats, system.relevance)
            coords.append((sv - system.pca.mean) @ system.pca.basis)
        return np.stack(coords)

    train_coords = projected(train_feats)
    dev_coords = projected(dev_feats)

    n_skip = system.n_stats_params
    if system.snapshot is None:
        raise ConfigError("system has no parameter snapshot; assemble it first")
    sub_snapshot = netcore.ParamSnapshot(
        system.snapshot.values[n_skip:], system.snapshot.weights[n_skip:]
    )

    def forward_dev():
        emb = netcore.forward(system.ivec_net.net, dev_coords)[-1]
        return _dev_metrics(emb, dev_speakers, system.dplda)

    def params_of():
        return system.ivec_net.net.parameters() + [
            system.dplda.lam,
            system.dplda.gamma,
            system.dplda.c,
            np.asarray(system.dplda.k, dtype=np.float64),
        ]

    def set_params(params):
        n_i = system.n_ivec_params
        system.ivec_net.net.set_parameters(params[:n_i])
        lam, gamma, c, k = params[n_i:]
        system.dplda = DpldaParams(lam, gamma, c, float(k))

    utts_by_speaker = {
        spk: np.flatnonzero(train_speakers == spk)
        for spk in np.unique(train_speakers)
    }
    pool = make_pair_pool(utts_by_speaker, rng)
    adam = netcore.AdamState.create(params_of(), lr=schedule.lr)

    def batch_step():
        idx = draw_groups(pool, schedule.n_pairs, rng)
        acts = netcore.forward(system.ivec_net.net, train_coords[idx])
        batch = TrialBatch.all_trials(acts[-1], train_speakers[idx])
        loss, d_params, d_emb = bxe_objective(system.dplda, batch, schedule.objective)
        ivec_grads, _ = netcore.backward(system.ivec_net.net, acts, d_emb)
        grads = ivec_grads + [d_params.lam, d_params.gamma, d_params.c, np.asarray(d_params.k, dtype=np.float64)]
        params = params_of()
        penalty, pen_grads = netcore.penalty_to_snapshot(params, sub_snapshot)
        grads = [g + pg for g, pg in zip(grads, pen_grads)]
        set_params(netcore.adam_step(adam, params, grads))
        return loss + penalty

    system, history = _epoch_loop(system, schedule, adam, batch_step, forward_dev, set_params, params_of)
    return system, history


def train_e2e_full(system: E2eSystem, corpus: Corpus, schedule=None, rng=None):
    """Train all three stages jointly with checkpointed backpropagation."""
    if schedule is None:
        schedule = TrainSchedule(n_pairs=DEFAULT_E2E_PAIRS)
    if rng is None:
        rng = np.random.default_rng(0)
    train_feats, train_speakers = _split_features(corpus, "train")
    dev_feats, dev_speakers = _split_features(corpus, "dev")
    if system.snapshot is None:
        raise ConfigError("system has no parameter snapshot; assemble it first")

    def forward_dev():
        emb = embed_utterances(system, dev_feats)
        return _dev_metrics(emb, dev_speakers, system.dplda)

    def params_of():
        return system.trainable_parameters()

    def set_params(params):
        system.set_trainable_parameters(params)

    utts_by_speaker = {
        spk: np.flatnonzero(train_speakers == spk)
        for spk in np.unique(train_speakers)
    }
    pool = make_pair_pool(utts_by_speaker, rng)
    adam = netcore.AdamState.create(params_of(), lr=schedule.lr)

    def batch_step():
        idx = draw_groups(pool, schedule.n_pairs, rng)
        speakers = train_speakers[idx]
        holder = {}

        def loss_fn(embeddings):
            batch = TrialBatch.all_trials(embeddings, speakers)
            loss, d_params, d_emb = bxe_objective(
                system.dplda, batch, schedule.objective
            )
            holder["d_params"] = d_params
            return loss, d_emb

        loss, net_grads = checkpointed_grads(
            system, [train_feats[i] for i in idx], loss_fn
        )
        d_params = holder["d_params"]
        grads = net_grads + [d_params.lam, d_params.gamma, d_params.c, np.asarray(d_params.k, dtype=np.float64)]
        params = params_of()
        penalty, pen_grads = netcore.penalty_to_snapshot(params, system.snapshot)
        grads = [g + pg for g, pg in zip(grads, pen_grads)]
        set_params(netcore.adam_step(adam, params, grads))
        return loss + penalty

    system, history = _epoch_loop(system, schedule, adam, batch_step, forward_dev, set_params, params_of)
    return system, history


def _epoch_loop(system, schedule, adam, batch_step, forward_dev, set_params, params_of):
    init_eer, init_c = forward_dev()
    best_c = init_c
    best_params = [p.copy() for p in params_of()]
    history = [EpochRecord(0, np.nan, init_eer, init_c, schedule.lr)]
    dev_curve = [init_c]
    lr = schedule.lr
    for epoch in range(1, schedule.max_epochs + 1):
        losses = [batch_step() for _ in range(schedule.epoch_batches)]
        dev_eer, dev_c = forward_dev()
        dev_curve.append(dev_c)
        if schedule.halve_on_plateau:
            lr = lr_schedule_step(dev_curve, lr)
            adam.lr = lr
        record = EpochRecord(epoch, float(np.mean(losses)), dev_eer, dev_c, lr)
        history.append(record)
        logger.info("%s", format_epoch_log(record))
        if dev_c < best_c:
            best_c = dev_c
            best_params = [p.copy() for p in params_of()]
    set_params(best_params)
    return system, history
