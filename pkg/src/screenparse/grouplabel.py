"""Deep averaging network that names container nodes from their descendants."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import torch
from sklearn.metrics import f1_score
from torch import nn

from .core import (DEFAULT_VOCABULARY, Element, HierarchyTree, Screen,
                   all_descendant_leaves)
from .policy import DTYPE, element_features
from .synth import derive_seed
from .weights import load_arrays, read_weights, state_dict_arrays, write_weights

OTHER = "Other"
AMP_LABELS = ("Tab Bar Button", "Table", "Tab Bar", "Collection", "Button", "Segmented Control")
RICO_LABELS = ("List Item", "Toolbar", "Card", "Drawer", "Multi-Tab", "Bottom Navigation")


@dataclass(frozen=True)
class GroupLabelSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(l for l in self.labels if l != OTHER) + (OTHER,)
        if len(set(labels)) != len(labels):
            raise ValueError("group labels must be unique")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def index(self, label: str | None) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            return len(self.labels) - 1


AMP = GroupLabelSet(AMP_LABELS)
RICO = GroupLabelSet(RICO_LABELS)


@dataclass(frozen=True)
class GroupLabelerConfig:
    hidden: int = 256
    layers: int = 4
    vocabulary: tuple[str, ...] = DEFAULT_VOCABULARY
    labels: tuple[str, ...] = AMP.labels


@dataclass(frozen=True)
class GroupTrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 300
    patience: int = 10
    seed: int = 0


class GroupExample(NamedTuple):
    elements: tuple[Element, ...]
    width: float
    height: float
    label: str | None = None


class GroupLabeler(nn.Module):
    def __init__(self, config: GroupLabelerConfig):
        super().__init__()
        n = config.hidden
        self.config = config
        self.embed = nn.Sequential(nn.Linear(4 + len(config.vocabulary), n), nn.ReLU())
        layers = []
        for _ in range(config.layers):
            layers += [nn.Linear(n, n), nn.ReLU()]
        self.mlp = nn.Sequential(*layers, nn.Linear(n, len(config.labels)))
        self.to(DTYPE)

    @property
    def labelset(self) -> GroupLabelSet:
        return GroupLabelSet(self.config.labels)

    def pool(self, feats: torch.Tensor, segments: torch.Tensor, n_groups: int) -> torch.Tensor:
        emb = self.embed(feats)
        out = emb.new_zeros(n_groups, emb.shape[1])
        return out.index_add(0, segments, emb)

    def forward(self, feats, segments, n_groups):
        return self.mlp(self.pool(feats, segments, n_groups))


def _batch(examples: Sequence[GroupExample], vocabulary):
    feats, segs = [], []
    for i, ex in enumerate(examples):
        if not ex.elements:
            raise ValueError("a group needs at least one descendant")
        feats.append(element_features(ex.elements, ex.width, ex.height, vocabulary))
        segs.append(np.full(len(ex.elements), i))
    return (torch.as_tensor(np.concatenate(feats), dtype=DTYPE),
            torch.as_tensor(np.concatenate(segs)), len(examples))


def pool_group(descendants: Sequence[Element], width: float, height: float,
               model: GroupLabeler) -> np.ndarray:
    with torch.no_grad():
        feats, segs, n = _batch([GroupExample(tuple(descendants), width, height)],
                                model.config.vocabulary)
        return model.pool(feats, segs, n)[0].numpy()


def classify_group(descendants: Sequence[Element], width: float, height: float,
                   model: GroupLabeler) -> tuple[str, np.ndarray]:
    model.eval()
    with torch.no_grad():
        logits = model(*_batch([GroupExample(tuple(descendants), width, height)],
                               model.config.vocabulary))[0]
        probs = torch.softmax(logits, dim=-1).numpy()
    return model.config.labels[int(np.argmax(probs))], probs


def class_weights(targets: Sequence[int], n_classes: int) -> np.ndarray:
    """Inverse class frequency, rescaled to mean 1."""
    counts = np.bincount(np.asarray(targets, dtype=int), minlength=n_classes).astype(float)
    if (counts == 0).any():
        missing = np.flatnonzero(counts == 0).tolist()
        raise ValueError(f"classes {missing} never occur in the training data")
    w = 1.0 / counts
    return w / w.mean()


def f1_macro(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> float:
    return float(f1_score(y_true, y_pred, labels=list(range(n_classes)), average="macro",
                          zero_division=0))


def group_examples(screens: Sequence[Screen], include_root: bool = False) -> list[GroupExample]:
    out = []
    for s in screens:
        tree = s.ground_truth
        by_id = s.by_id()
        desc = all_descendant_leaves(tree)
        for c in tree.containers():
            if c == tree.root and not include_root:
                continue
            elems = tuple(by_id[x] for x in sorted(desc[c]))
            if elems:
                out.append(GroupExample(elems, s.width, s.height, tree[c].label))
    return out


class GroupTrainResult(NamedTuple):
    model: GroupLabeler
    val_f1: float
    log: list[dict]


def predict(model: GroupLabeler, examples: Sequence[GroupExample], batch_size: int = 256
            ) -> np.ndarray:
    model.eval()
    preds = []
    with torch.no_grad():
        for i in range(0, len(examples), batch_size):
            chunk = examples[i:i + batch_size]
            preds.append(model(*_batch(chunk, model.config.vocabulary)).argmax(-1).numpy())
    return np.concatenate(preds) if preds else np.zeros(0, dtype=int)


def train_group_labeler(train_examples: Sequence[GroupExample],
                        val_examples: Sequence[GroupExample],
                        config: GroupLabelerConfig = GroupLabelerConfig(),
                        train_config: GroupTrainConfig = GroupTrainConfig(),
                        progress=None) -> GroupTrainResult:
    """Class-weighted cross entropy; early stopping on validation loss."""
    if not train_examples or not val_examples:
        raise ValueError("training and validation examples must be non-empty")
    labelset = GroupLabelSet(config.labels)
    config = replace(config, labels=labelset.labels)
    y_train = np.array([labelset.index(ex.label) for ex in train_examples])
    y_val = np.array([labelset.index(ex.label) for ex in val_examples])
    weights = torch.as_tensor(class_weights(y_train, len(labelset)), dtype=DTYPE)

    torch.manual_seed(derive_seed(train_config.seed, "group-init") % (2 ** 63))
    model = GroupLabeler(config)
    opt = torch.optim.Adam(model.parameters(), lr=train_config.lr,
                           weight_decay=train_config.weight_decay)
    loss_fn = nn.CrossEntropyLoss(weight=weights)
    rng = np.random.default_rng(derive_seed(train_config.seed, "group-order"))
    val_batch = _batch(val_examples, config.vocabulary)
    y_val_t = torch.as_tensor(y_val)

    history, best, best_state, stale = [], math.inf, None, 0
    for epoch in range(1, train_config.max_epochs + 1):
        t0 = time.time()
        model.train()
        perm = rng.permutation(len(train_examples))
        total = 0.0
        for i in range(0, len(perm), train_config.batch_size):
            idx = perm[i:i + train_config.batch_size]
            batch = _batch([train_examples[j] for j in idx], config.vocabulary)
            loss = loss_fn(model(*batch), torch.as_tensor(y_train[idx]))
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        model.eval()
        with torch.no_grad():
            val_logits = model(*val_batch)
            val_loss = float(loss_fn(val_logits, y_val_t))
        val_f1 = f1_macro(y_val, val_logits.argmax(-1).numpy(), len(labelset))
        rec = {"epoch": epoch, "train_loss": total / len(perm), "val_loss": val_loss,
               "val_f1_macro": val_f1, "seconds": time.time() - t0}
        history.append(rec)
        if progress:
            progress(rec)
        if val_loss < best:
            best, stale = val_loss, 0
            best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        else:
            stale += 1
            if stale >= train_config.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return GroupTrainResult(model, f1_macro(y_val, predict(model, val_examples), len(labelset)),
                            history)


def label_tree(tree: HierarchyTree, screen: Screen, model: GroupLabeler) -> HierarchyTree:
    """Attach predicted labels to every non-root container."""
    by_id = screen.by_id()
    desc = all_descendant_leaves(tree)
    nodes = dict(tree.nodes)
    for c in tree.containers():
        if c == tree.root or not desc[c]:
            continue
        label, _ = classify_group([by_id[x] for x in sorted(desc[c])], screen.width,
                                  screen.height, model)
        nodes[c] = replace(tree[c], label=label)
    return HierarchyTree(tree.root, nodes)


def save_group_labeler(path: str | Path, model: GroupLabeler, seed: int = 0) -> None:
    cfg = asdict(model.config)
    write_weights(path, "grouplabeler", state_dict_arrays(model),
                  {"config": cfg, "vocabulary": list(model.config.vocabulary), "seed": seed})


def load_group_labeler(path: str | Path) -> GroupLabeler:
    header, tensors = read_weights(path, kind="grouplabeler")
    cfg = dict(header["config"])
    cfg["vocabulary"] = tuple(cfg["vocabulary"])
    cfg["labels"] = tuple(cfg["labels"])
    model = GroupLabeler(GroupLabelerConfig(**cfg))
    load_arrays(model, tensors)
    model.eval()
    return model
