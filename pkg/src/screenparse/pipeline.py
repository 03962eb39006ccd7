"""End-to-end evaluation: degrade detections, parse, score against ground truth."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from .core import HierarchyTree, Screen
from .metrics import EvalRecord, EvalReport, detector_oracle_tree, evaluate_tree
from .policy import ScreenParserNet, greedy_decode
from .synth import NoiseConfig, apply_noise

Parser = Callable[[Screen], HierarchyTree]


def _ordered_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def detections(screen: Screen, noise: NoiseConfig | None) -> tuple[Screen, dict[str, str]]:
    if noise is None or noise.is_clean:
        return screen_without_truth(screen), {e.id: e.id for e in screen.elements}
    return apply_noise(screen, noise)


def screen_without_truth(screen: Screen) -> Screen:
    return Screen(screen.screen_id, screen.width, screen.height, screen.elements)


def evaluate_parser(parse: Parser, screens: Sequence[Screen], noise: NoiseConfig | None = None,
                    name: str = "", workers: int = 1) -> EvalReport:
    def one(s: Screen) -> EvalRecord:
        det, _ = detections(s, noise)
        return evaluate_tree(s.screen_id, s.elements, s.ground_truth, det.elements, parse(det))
    return EvalReport(_ordered_map(one, screens, workers), name)


def evaluate_model(model: ScreenParserNet, screens: Sequence[Screen],
                   noise: NoiseConfig | None = None, name: str = "", workers: int = 1
                   ) -> EvalReport:
    return evaluate_parser(lambda s: greedy_decode(s, model)[0], screens, noise, name, workers)


def evaluate_detector_oracle(screens: Sequence[Screen], noise: NoiseConfig | None = None,
                             name: str = "detector-oracle", workers: int = 1) -> EvalReport:
    def one(s: Screen) -> EvalRecord:
        det, survivors = detections(s, noise)
        tree = detector_oracle_tree(s.ground_truth, survivors)
        return evaluate_tree(s.screen_id, s.elements, s.ground_truth, det.elements, tree)
    return EvalReport(_ordered_map(one, screens, workers), name)
