"""Recurrent encoder/decoder scorer for the transition parser, and its training.

Action logits are laid out as ``[emit, pop, arc_0 .. arc_{N-1}]`` where the
arc positions follow the canonical element order.  Emit/Pop come from a
linear head on the decoder output; arc logits are scaled dot products
between the decoder output and each element encoding.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
import torch
from torch import nn

from .core import DEFAULT_VOCABULARY, Element, HierarchyTree, Screen, canonical_sort
from .oracle import (GoldTree, canonical_action, initial_oracle,
                     optimal_actions, static_oracle, step as oracle_step)
from .synth import derive_seed
from .transition import (EMIT, POP, Action, ParserState, apply, arc, emit_allowed,
                         extract_tree, initial_state, is_terminal, max_steps)
from .weights import load_arrays, read_weights, state_dict_arrays, write_weights

log = logging.getLogger(__name__)

DTYPE = torch.float64


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PolicyConfig:
    hidden: int = 256
    layers: int = 1
    dropout: float = 0.25
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY

    def __post_init__(self):
        if self.hidden % 2:
            raise ValueError("hidden size must be even (split across two directions)")
        object.__setattr__(self, "vocabulary", tuple(self.vocabulary))

    @property
    def n_features(self) -> int:
        return 4 + len(self.vocabulary)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    max_epochs: int = 200
    patience: int = 10
    accumulate: int = 1
    max_train_elements: int = 64  # screens with at least this many are not trained on
    seed: int = 0

    def __post_init__(self):
        if self.accumulate < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("accumulate, max_epochs and patience must be positive")


def element_features(elements: Sequence[Element], width: float, height: float,
                     vocabulary: Sequence[str] = DEFAULT_VOCABULARY) -> np.ndarray:
    """Rows of ``[x0/W, y0/H, x1/W, y1/H, one-hot class]``."""
    index = {c: i for i, c in enumerate(vocabulary)}
    feats = np.zeros((len(elements), 4 + len(vocabulary)))
    for row, e in zip(feats, elements):
        b = e.bounds
        row[:4] = (b.x_min / width, b.y_min / height, b.x_max / width, b.y_max / height)
        try:
            row[4 + index[e.class_label]] = 1.0
        except KeyError:
            raise ValueError(f"class {e.class_label!r} not in vocabulary") from None
    return feats


def featurize(screen: Screen, vocabulary: Sequence[str] = DEFAULT_VOCABULARY
              ) -> tuple[list[str], np.ndarray]:
    """Canonically ordered ids and their feature rows."""
    elements = canonical_sort(screen.elements)
    return [e.id for e in elements], element_features(elements, screen.width, screen.height,
                                                      vocabulary)


class ScreenParserNet(nn.Module):
    def __init__(self, config: PolicyConfig):
        super().__init__()
        n = config.hidden
        self.config = config
        self.embed = nn.Linear(config.n_features, n)
        self.encoder = nn.LSTM(n, n // 2, num_layers=config.layers, bidirectional=True)
        self.decoder = nn.LSTM(n, n, num_layers=config.layers)
        self.action_head = nn.Linear(n, 2)
        self.drop = nn.Dropout(config.dropout)
        self.to(DTYPE)

    @property
    def hidden(self) -> int:
        return self.config.hidden

    def encode(self, feats: torch.Tensor):
        """Element encodings, initial decoder state and the pooled screen embedding."""
        out, (h, c) = self.encoder(self.embed(feats).unsqueeze(1))
        L, half = self.config.layers, self.hidden // 2
        # (2L, 1, n/2) -> (L, 1, n): concatenate each layer's two directions
        h_dir = h.view(L, 2, 1, half)
        c_dir = c.view(L, 2, 1, half)
        h0 = torch.cat([h_dir[:, 0], h_dir[:, 1]], dim=-1)
        c0 = torch.cat([c_dir[:, 0], c_dir[:, 1]], dim=-1)
        embedding = (h_dir[-1, 0, 0] + h_dir[-1, 1, 0]) / 2.0
        return self.drop(out[:, 0]), (h0, c0), embedding

    def inputs_for(self, enc: torch.Tensor, top_idx: torch.Tensor) -> torch.Tensor:
        # containers (index -1) are fed as the zero vector
        padded = torch.cat([enc.new_zeros(1, enc.shape[1]), enc], dim=0)
        return padded[top_idx + 1]

    def logits(self, out: torch.Tensor, enc: torch.Tensor) -> torch.Tensor:
        out = self.drop(out)
        head = self.action_head(out)
        attn = out @ enc.T / math.sqrt(self.hidden)
        return torch.cat([head, attn], dim=-1)

    def run(self, enc, state, top_idx: torch.Tensor):
        """Decode a whole (teacher-forced) sequence of stack tops at once."""
        out, new_state = self.decoder(self.inputs_for(enc, top_idx).unsqueeze(1), state)
        return self.logits(out[:, 0], enc), new_state


def attention_score(e: np.ndarray | torch.Tensor, h: np.ndarray | torch.Tensor,
                    n: int | None = None) -> float:
    e, h = np.asarray(e, dtype=float), np.asarray(h, dtype=float)
    if e.shape != h.shape or e.ndim != 1:
        raise ValueError(f"dimension mismatch: {e.shape} vs {h.shape}")
    n = e.shape[0] if n is None else n
    return float(e @ h / math.sqrt(n))


class Encoded(NamedTuple):
    ids: list[str]
    position: dict[str, int]
    enc: torch.Tensor
    state: tuple[torch.Tensor, torch.Tensor]
    embedding: torch.Tensor


def encode(screen: Screen, model: ScreenParserNet) -> Encoded:
    if not screen.elements:
        raise ValueError(f"screen {screen.screen_id} has no elements")
    ids, feats = featurize(screen, model.config.vocabulary)
    enc, state, emb = model.encode(torch.as_tensor(feats, dtype=DTYPE))
    return Encoded(ids, {e: i for i, e in enumerate(ids)}, enc, state, emb)


def screen_embedding(screen: Screen, model: ScreenParserNet) -> np.ndarray:
    model.eval()
    with torch.no_grad():
        return encode(screen, model).embedding.numpy().copy()


def action_index(action: Action, position: dict[str, int]) -> int:
    if action.is_arc:
        return 2 + position[action.target]
    return 0 if action.kind == "EMIT" else 1


def legal_mask(state: ParserState, position: dict[str, int]) -> np.ndarray:
    mask = np.zeros(2 + len(position), dtype=bool)
    if is_terminal(state):
        return mask
    mask[0] = emit_allowed(state)
    mask[1] = len(state.stack) > 1
    for e in state.buffer:
        if e not in state.visited:
            mask[2 + position[e]] = True
    return mask


def top_index(state: ParserState, position: dict[str, int]) -> int:
    return position.get(state.top, -1)


@dataclass
class ActionScores:
    logits: torch.Tensor
    mask: torch.Tensor
    position: dict[str, int]

    @property
    def u_emit(self) -> float:
        return float(self.logits[0])

    @property
    def u_pop(self) -> float:
        return float(self.logits[1])

    @property
    def u_arc(self) -> np.ndarray:
        return self.logits[2:].detach().numpy()

    @property
    def log_probs(self) -> torch.Tensor:
        return torch.log_softmax(self.logits.masked_fill(~self.mask, -math.inf), dim=-1)

    @property
    def distribution(self) -> np.ndarray:
        return self.log_probs.exp().detach().numpy()

    def prob(self, action: Action) -> float:
        return float(self.log_probs[action_index(action, self.position)].detach().exp())

    def by_action(self, actions: Iterable[Action]) -> dict[Action, float]:
        lp = self.log_probs.detach()
        return {a: float(lp[action_index(a, self.position)]) for a in actions}

    def best(self, actions: Sequence[Action]) -> Action:
        lp = self.log_probs.detach()
        return max(actions, key=lambda a: float(lp[action_index(a, self.position)]))


def decode_step(state: ParserState, dec_state, encoded: Encoded, model: ScreenParserNet):
    if is_terminal(state):
        raise ValueError("decode_step on a finished parse")
    top = torch.tensor([top_index(state, encoded.position)])
    logits, new_state = model.run(encoded.enc, dec_state, top)
    mask = torch.as_tensor(legal_mask(state, encoded.position))
    return ActionScores(logits[0], mask, encoded.position), new_state


def loss_static(scores: ActionScores, gold: Action) -> torch.Tensor:
    lp = scores.log_probs[action_index(gold, scores.position)]
    if torch.isinf(lp):
        raise TrainingError(f"gold action {gold!r} is masked")
    return -lp


def loss_dynamic(scores: ActionScores, optimal: Iterable[Action]) -> torch.Tensor:
    """Negative log of the mean probability of the optimal actions."""
    idx = sorted({action_index(a, scores.position) for a in optimal})
    if not idx:
        raise TrainingError("empty optimal set")
    lp = scores.log_probs[idx]
    if torch.isinf(lp).any():
        raise TrainingError("an optimal action is masked")
    return -(torch.logsumexp(lp, dim=0) - math.log(len(idx)))


# -- trajectories --------------------------------------------------------------

@dataclass
class Trajectory:
    """States visited by one parse, with their supervision targets."""

    screen: Screen
    top_idx: list[int] = field(default_factory=list)
    masks: list[np.ndarray] = field(default_factory=list)
    targets: list[list[int]] = field(default_factory=list)  # optimal action indices
    actions: list[Action] = field(default_factory=list)

    def add(self, state, position, target_actions, executed):
        self.top_idx.append(top_index(state, position))
        self.masks.append(legal_mask(state, position))
        self.targets.append(sorted(action_index(a, position) for a in target_actions))
        self.actions.append(executed)

    def __len__(self):
        return len(self.actions)


def static_trajectory(screen: Screen, gold: GoldTree | None = None) -> Trajectory:
    gold = gold or GoldTree(screen.ground_truth, screen)
    ids = [e.id for e in canonical_sort(screen.elements)]
    position = {e: i for i, e in enumerate(ids)}
    traj = Trajectory(screen)
    state = initial_state(screen)
    for a in static_oracle(gold):
        traj.add(state, position, [a], a)
        state = apply(state, a)
    return traj


def dynamic_trajectory(screen: Screen, model: ScreenParserNet, rng: np.random.Generator | None,
                       gold: GoldTree | None = None) -> Trajectory:
    """Roll out the policy, taking its top choice when optimal.

    With ``rng=None`` the fallback is the canonical optimal action instead
    of a random one, which keeps validation deterministic.
    """
    gold = gold or GoldTree(screen.ground_truth, screen)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        encoded = encode(screen, model)
        traj = Trajectory(screen)
        parser, ostate = initial_state(screen), initial_oracle(gold)
        dec = encoded.state
        while not is_terminal(parser):
            scores, dec = decode_step(parser, dec, encoded, model)
            optimal = optimal_actions(gold, parser, ostate)
            legal_idx = torch.nonzero(scores.mask).flatten()
            top = int(legal_idx[torch.argmax(scores.logits[legal_idx])])
            choice = _index_action(top, encoded.ids)
            if choice not in optimal:
                if rng is None:
                    choice = canonical_action(gold, parser, ostate)
                else:
                    ordered = sorted(optimal)
                    choice = ordered[int(rng.integers(len(ordered)))]
            traj.add(parser, encoded.position, optimal, choice)
            parser, ostate = oracle_step(gold, parser, ostate, choice)
    model.train(was_training)
    return traj


def _index_action(i: int, ids: Sequence[str]) -> Action:
    if i == 0:
        return EMIT
    if i == 1:
        return POP
    return arc(ids[i - 2])


def trajectory_loss(model: ScreenParserNet, traj: Trajectory, reduction: str = "mean"
                    ) -> torch.Tensor:
    """Summed (or per-step mean) negative log-likelihood of the targets.

    One target per step is the static objective; several are the averaged
    set likelihood of the dynamic objective.
    """
    encoded = encode(traj.screen, model)
    logits, _ = model.run(encoded.enc, encoded.state, torch.tensor(traj.top_idx))
    mask = torch.as_tensor(np.stack(traj.masks))
    lp = torch.log_softmax(logits.masked_fill(~mask, -math.inf), dim=-1)
    target = torch.zeros_like(mask)
    sizes = []
    for t, idx in enumerate(traj.targets):
        target[t, idx] = True
        sizes.append(len(idx))
    picked = lp.masked_fill(~target, -math.inf)
    per_step = -(torch.logsumexp(picked, dim=-1) - torch.log(torch.tensor(sizes, dtype=DTYPE)))
    if not torch.isfinite(per_step).all():
        raise TrainingError(f"non-finite loss on screen {traj.screen.screen_id}")
    return per_step.mean() if reduction == "mean" else per_step.sum()


def batch_loss(model: ScreenParserNet, trajs: Sequence[Trajectory]) -> torch.Tensor:
    """Sum of per-screen mean losses, computed in one padded pass.

    Gives the same value and gradient as adding up ``trajectory_loss`` over
    the group, only faster.
    """
    B, n = len(trajs), model.hidden
    feats = [torch.as_tensor(featurize(t.screen, model.config.vocabulary)[1], dtype=DTYPE)
             for t in trajs]
    n_el = [f.shape[0] for f in feats]
    steps = [len(t) for t in trajs]
    T, S = max(n_el), max(steps)

    x = nn.utils.rnn.pad_sequence([model.embed(f) for f in feats])
    packed = nn.utils.rnn.pack_padded_sequence(x, n_el, enforce_sorted=False)
    out, (h, c) = model.encoder(packed)
    enc, _ = nn.utils.rnn.pad_packed_sequence(out, total_length=T)  # (T, B, n)
    enc = model.drop(enc)
    L, half = model.config.layers, n // 2
    h0 = torch.cat([h.view(L, 2, B, half)[:, 0], h.view(L, 2, B, half)[:, 1]], dim=-1)
    c0 = torch.cat([c.view(L, 2, B, half)[:, 0], c.view(L, 2, B, half)[:, 1]], dim=-1)

    inputs = nn.utils.rnn.pad_sequence(
        [model.inputs_for(enc[:k, b], torch.tensor(t.top_idx)) for b, (k, t)
         in enumerate(zip(n_el, trajs))])
    packed = nn.utils.rnn.pack_padded_sequence(inputs, steps, enforce_sorted=False)
    dec, _ = model.decoder(packed, (h0.contiguous(), c0.contiguous()))
    dec, _ = nn.utils.rnn.pad_packed_sequence(dec, total_length=S)  # (S, B, n)
    dec = model.drop(dec)
    logits = torch.cat([model.action_head(dec),
                        torch.einsum("sbn,tbn->sbt", dec, enc) / math.sqrt(n)], dim=-1)

    # padded steps get a single legal, targeted action so they contribute zero
    mask = torch.zeros(S, B, 2 + T, dtype=torch.bool)
    target = torch.zeros_like(mask)
    sizes = torch.ones(S, B, dtype=DTYPE)
    mask[:, :, 0] = True
    target[:, :, 0] = True
    for b, t in enumerate(trajs):
        k = 2 + n_el[b]
        mask[:steps[b], b, :k] = torch.as_tensor(np.stack(t.masks))
        target[:steps[b], b, 0] = False
        for i, idx in enumerate(t.targets):
            target[i, b, idx] = True
            sizes[i, b] = len(idx)
    lp = torch.log_softmax(logits.masked_fill(~mask, -math.inf), dim=-1)
    per_step = -(torch.logsumexp(lp.masked_fill(~target, -math.inf), dim=-1) - torch.log(sizes))
    if not torch.isfinite(per_step).all():
        raise TrainingError("non-finite loss in batch")
    return (per_step.sum(dim=0) / torch.tensor(steps, dtype=DTYPE)).sum()


# -- decoding ----------------------------------------------------------------------

def greedy_decode(screen: Screen, model: ScreenParserNet) -> tuple[HierarchyTree, list[Action]]:
    was_training = model.training
    model.eval()
    actions: list[Action] = []
    with torch.no_grad():
        encoded = encode(screen, model)
        state, dec = initial_state(screen), encoded.state
        limit = max_steps(len(encoded.ids))
        while not is_terminal(state):
            scores, dec = decode_step(state, dec, encoded, model)
            legal_idx = torch.nonzero(scores.mask).flatten()
            a = _index_action(int(legal_idx[torch.argmax(scores.logits[legal_idx])]), encoded.ids)
            state = apply(state, a)
            actions.append(a)
            if len(actions) > limit:
                raise RuntimeError("decoding exceeded the transition-system step bound")
    model.train(was_training)
    return extract_tree(state), actions


# -- training ------------------------------------------------------------------------

STATIC = "static"
DYNAMIC = "dynamic"


def new_model(config: PolicyConfig, seed: int) -> ScreenParserNet:
    torch.manual_seed(derive_seed(seed, "init") % (2 ** 63))
    return ScreenParserNet(config)


class TrainResult(NamedTuple):
    model: ScreenParserNet
    log: list[dict]
    excluded: int


def train(train_screens: Sequence[Screen], val_screens: Sequence[Screen], mode: str,
          config: PolicyConfig = PolicyConfig(), train_config: TrainConfig = TrainConfig(),
          progress=None) -> TrainResult:
    """Fit a parser with the static or dynamic oracle; early stops on validation loss."""
    if mode not in (STATIC, DYNAMIC):
        raise ValueError(f"unknown oracle mode {mode!r}")
    usable = [s for s in train_screens if len(s.elements) < train_config.max_train_elements]
    excluded = len(train_screens) - len(usable)
    if not usable or not val_screens:
        raise TrainingError("training and validation splits must be non-empty")
    log.info("training on %d screens (%d excluded for size)", len(usable), excluded)

    model = new_model(config, train_config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=train_config.lr,
                           weight_decay=train_config.weight_decay)
    order_rng = np.random.default_rng(derive_seed(train_config.seed, "order"))
    oracle_rng = np.random.default_rng(derive_seed(train_config.seed, "oracle"))
    torch.manual_seed(derive_seed(train_config.seed, "dropout") % (2 ** 63))

    golds = {s.screen_id: GoldTree(s.ground_truth, s) for s in list(usable) + list(val_screens)}
    static_cache = {}
    if mode == STATIC:
        static_cache = {s.screen_id: static_trajectory(s, golds[s.screen_id])
                        for s in list(usable) + list(val_screens)}

    def trajectory(s, rng):
        if mode == STATIC:
            return static_cache[s.screen_id]
        return dynamic_trajectory(s, model, rng, golds[s.screen_id])

    history, best_val, best_state, stale = [], math.inf, None, 0
    for epoch in range(1, train_config.max_epochs + 1):
        t0 = time.time()
        model.train()
        total = 0.0
        opt.zero_grad()
        perm = order_rng.permutation(len(usable))
        step = train_config.accumulate
        for start in range(0, len(perm), step):
            group = [trajectory(usable[i], oracle_rng) for i in perm[start:start + step]]
            if len(group) == 1:
                loss = trajectory_loss(model, group[0])
            else:
                loss = batch_loss(model, group)
            (loss / step).backward()
            total += float(loss.detach())
            opt.step()
            opt.zero_grad()
        val = validation_loss(model, val_screens, mode, golds, static_cache)
        if not math.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        rec = {"epoch": epoch, "train_loss": total / len(usable), "val_loss": val,
               "seconds": time.time() - t0, "excluded": excluded}
        history.append(rec)
        if progress:
            progress(rec)
        if val < best_val:
            best_val, stale = val, 0
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= train_config.patience:
                break
    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return TrainResult(model, history, excluded)


def validation_loss(model, screens, mode, golds=None, static_cache=None) -> float:
    golds = golds or {}
    static_cache = static_cache or {}
    model.eval()
    total = 0.0
    with torch.no_grad():
        for s in screens:
            gold = golds.get(s.screen_id) or GoldTree(s.ground_truth, s)
            if mode == STATIC:
                traj = static_cache.get(s.screen_id) or static_trajectory(s, gold)
            else:
                traj = dynamic_trajectory(s, model, None, gold)
            total += float(trajectory_loss(model, traj))
    return total / len(screens)


# -- persistence ---------------------------------------------------------------------

def save_policy(path: str | Path, model: ScreenParserNet, seed: int = 0,
                extra: dict | None = None) -> None:
    cfg = asdict(model.config)
    meta = {"config": cfg, "vocabulary": list(model.config.vocabulary), "seed": seed}
    if extra:
        meta.update(extra)
    write_weights(path, "policy", state_dict_arrays(model), meta)


def load_policy(path: str | Path) -> ScreenParserNet:
    header, tensors = read_weights(path, kind="policy")
    cfg = dict(header["config"])
    cfg["vocabulary"] = tuple(cfg["vocabulary"])
    model = ScreenParserNet(PolicyConfig(**cfg))
    load_arrays(model, tensors)
    model.eval()
    return model
