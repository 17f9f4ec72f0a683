"""Generate labeled error chains from entailment trees.

Six edit types cover correctness errors (replacing an inference with a
distractor, negating it, swapping it with a parent) and informativeness
errors (repeating it, paraphrasing it, inserting an irrelevant true
sentence). Edits only ever touch intermediate inferences whose text does
not appear in the input context, so surface-overlap shortcuts cannot
detect them.
"""

from __future__ import annotations

import dataclasses
import json
import random
import re
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Protocol, runtime_checkable

from .chains import ReasoningChain, Step

HALL = "HALL"
NEG = "NEG"
SWAP = "SWAP"
REP = "REP"
PAR = "PAR"
RED = "RED"

PERTURBATION_TYPES = (HALL, NEG, SWAP, REP, PAR, RED)

#: Types that add a step; the others edit in place.
ADDITIVE_TYPES = (REP, PAR, RED)


class PerturbationError(ValueError):
    """Raised when a tree cannot support the requested edit."""


@runtime_checkable
class Paraphraser(Protocol):
    def paraphrase(self, text: str) -> str: ...


@dataclass
class LexiconParaphraser:
    """Deterministic word-for-word substitution from a fixed lexicon."""

    lexicon: dict[str, str]

    def paraphrase(self, text: str) -> str:
        def swap(match: re.Match[str]) -> str:
            word = match.group(0)
            repl = self.lexicon.get(word.lower())
            if repl is None:
                return word
            return repl.capitalize() if word[0].isupper() else repl

        return re.sub(r"[A-Za-z']+", swap, text)

    @classmethod
    def from_file(cls, path: str | Path) -> "LexiconParaphraser":
        with open(path, encoding="utf-8") as fh:
            return cls(lexicon={str(k).lower(): str(v) for k, v in json.load(fh).items()})


@dataclass(frozen=True)
class TreeNode:
    """One node; ``parent_ids`` lists the nodes this one is inferred from."""

    id: str
    text: str
    parent_ids: tuple[str, ...] = ()
    in_context: bool = False

    @property
    def is_intermediate(self) -> bool:
        return bool(self.parent_ids)


@dataclass(frozen=True)
class EntailmentTree:
    """A proof structure: context leaves combined stepwise into a hypothesis."""

    id: str
    nodes: dict[str, TreeNode]
    hypothesis: str
    context_sentences: tuple[str, ...]
    distractors: tuple[str, ...] = ()

    def validate(self) -> None:
        used_as_parent: set[str] = set()
        for node in self.nodes.values():
            for pid in node.parent_ids:
                if pid not in self.nodes:
                    raise PerturbationError(
                        f"tree {self.id!r}: node {node.id!r} references missing node {pid!r}"
                    )
                used_as_parent.add(pid)
        roots = [nid for nid in self.nodes if nid not in used_as_parent]
        if len(roots) != 1:
            raise PerturbationError(
                f"tree {self.id!r}: expected exactly one root, found {sorted(roots)}"
            )
        for node in self.nodes.values():
            if not node.parent_ids and not node.in_context:
                raise PerturbationError(
                    f"tree {self.id!r}: leaf {node.id!r} must be a context fact"
                )
        topological_order(self.nodes)  # raises on cycles

    def intermediates(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.is_intermediate]

    @classmethod
    def from_json(cls, payload: dict[str, Any]) -> "EntailmentTree":
        nodes = {
            nid: TreeNode(
                id=nid,
                text=raw["text"],
                parent_ids=tuple(raw.get("parent_ids", [])),
                in_context=bool(raw.get("in_context", False)),
            )
            for nid, raw in payload["nodes"].items()
        }
        return cls(
            id=str(payload.get("id", "tree")),
            nodes=nodes,
            hypothesis=payload["hypothesis"],
            context_sentences=tuple(payload.get("context", [])),
            distractors=tuple(payload.get("distractors", [])),
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "nodes": {
                nid: {
                    "text": n.text,
                    "parent_ids": list(n.parent_ids),
                    "in_context": n.in_context,
                }
                for nid, n in sorted(self.nodes.items())
            },
            "hypothesis": self.hypothesis,
            "context": list(self.context_sentences),
            "distractors": list(self.distractors),
        }


def load_trees(path: str | Path) -> list[EntailmentTree]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    items = payload["trees"] if isinstance(payload, dict) else payload
    return [EntailmentTree.from_json(item) for item in items]


def save_trees(trees: Iterable[EntailmentTree], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"trees": [t.to_json() for t in trees]}, fh, indent=2, sort_keys=True)


def topological_order(nodes: dict[str, TreeNode]) -> list[str]:
    """Parents-before-children order, ties broken by node id."""
    placed: set[str] = set()
    order: list[str] = []
    pending = set(nodes)
    while pending:
        ready = sorted(
            nid for nid in pending if all(p in placed for p in nodes[nid].parent_ids)
        )
        if not ready:
            raise PerturbationError(f"cycle detected among nodes {sorted(pending)}")
        nxt = ready[0]
        pending.remove(nxt)
        placed.add(nxt)
        order.append(nxt)
    return order


def _clean(text: str) -> str:
    return text.strip().rstrip(".").strip()


def compose_step_text(parent_texts: Iterable[str], conclusion_text: str) -> str:
    parents = " and ".join(_clean(t) for t in parent_texts)
    return f"{parents}, so {_clean(conclusion_text)}."


def _linearized_steps(nodes: dict[str, TreeNode]) -> tuple[list[Step], list[str]]:
    order = topological_order(nodes)
    steps: list[Step] = []
    step_nodes: list[str] = []
    for nid in order:
        node = nodes[nid]
        if not node.is_intermediate:
            continue
        text = compose_step_text((nodes[p].text for p in node.parent_ids), node.text)
        steps.append(Step(index=len(steps) + 1, text=text))
        step_nodes.append(nid)
    return steps, step_nodes


def linearize(tree: EntailmentTree, validate: bool = True) -> ReasoningChain:
    """Turn a tree into a chain: one "parents, so conclusion." step per inference."""
    if validate:
        tree.validate()
    steps, _ = _linearized_steps(tree.nodes)
    if not steps:
        raise PerturbationError(f"tree {tree.id!r} has no intermediate nodes")
    return ReasoningChain(
        id=tree.id,
        context=tree.context_sentences,
        steps=tuple(steps),
        predicted_answer=tree.hypothesis,
    )


# --- rule-based negation ------------------------------------------------------

_AUXILIARIES = {
    "is", "are", "was", "were", "am", "be", "been", "being",
    "do", "does", "did", "has", "have", "had",
    "can", "could", "will", "would", "shall", "should", "may", "might", "must",
}
_NEGATORS = {"not", "n't", "never"}


def _strip_word(token: str) -> str:
    return token.strip(".,;:!?").lower()


def _singular_stem(verb: str) -> str:
    if verb.endswith("ies") and len(verb) > 4:
        return verb[:-3] + "y"
    if verb.endswith(("ches", "shes", "sses", "xes", "zes", "oes")):
        return verb[:-2]
    return verb[:-1]


def negate_text(text: str) -> str:
    """Insert or remove a negator at the first auxiliary or copula.

    Falls back to do-support on a third-person-singular verb ("orbits"
    becomes "does not orbit"). Shapes with neither are refused rather
    than silently skipped.
    """
    tokens = text.split()
    for idx, token in enumerate(tokens):
        word = _strip_word(token)
        if word in _AUXILIARIES:
            if idx + 1 < len(tokens) and _strip_word(tokens[idx + 1]) in _NEGATORS:
                return " ".join(tokens[: idx + 1] + tokens[idx + 2 :])
            return " ".join(tokens[: idx + 1] + ["not"] + tokens[idx + 1 :])
    for idx in range(1, len(tokens)):
        word = _strip_word(tokens[idx])
        if len(word) > 2 and word.endswith("s") and not word.endswith("ss"):
            tail = tokens[idx][len(tokens[idx].rstrip(".,;:!?")):]
            replaced = f"does not {_singular_stem(word)}{tail}"
            return " ".join(tokens[:idx] + [replaced] + tokens[idx + 1 :])
    raise PerturbationError(f"cannot negate (no auxiliary, copula, or finite verb): {text!r}")


# --- perturbation records -----------------------------------------------------


@dataclass(frozen=True)
class PerturbationRecord:
    """One seeded edit: the clean chain, the edited chain, and the labels."""

    error_type: str
    target_node: str
    original_chain: ReasoningChain
    perturbed_chain: ReasoningChain
    seed: int


def _token_set(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9']+", text.lower()))


def _jaccard(a: set[str], b: set[str]) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def appears_in_context(text: str, context: Iterable[str]) -> bool:
    needle = text.strip().lower()
    return any(needle in sentence.lower() for sentence in context)


def eligible_targets(tree: EntailmentTree) -> list[str]:
    """Intermediate nodes whose text is absent from the context, sorted by id."""
    return sorted(
        n.id
        for n in tree.intermediates()
        if not n.in_context and not appears_in_context(n.text, tree.context_sentences)
    )


def _pick_distractor_for_hall(tree: EntailmentTree) -> str:
    """Highest token overlap with the context wins; ties keep list order."""
    context_tokens = _token_set(" ".join(tree.context_sentences))
    best_idx = max(
        range(len(tree.distractors)),
        key=lambda i: (_jaccard(_token_set(tree.distractors[i]), context_tokens), -i),
    )
    return tree.distractors[best_idx]


def perturb(
    tree: EntailmentTree,
    error_type: str,
    rng_seed: int,
    paraphraser: Paraphraser | None = None,
) -> PerturbationRecord:
    """Apply one seeded edit to one eligible intermediate node.

    The target is drawn uniformly from the eligible nodes. Edits rewrite
    the node set and re-linearize, except the irrelevant-sentence type,
    which splices a bare distractor sentence in after the target's step.
    """
    if error_type not in PERTURBATION_TYPES:
        raise PerturbationError(f"unknown error type: {error_type!r}")
    tree.validate()
    targets = eligible_targets(tree)
    if not targets:
        raise PerturbationError(f"tree {tree.id!r} has no eligible intermediate node")
    if error_type == PAR and paraphraser is None:
        raise PerturbationError("paraphrase perturbation requires a paraphraser")
    if error_type in (HALL, RED) and not tree.distractors:
        raise PerturbationError(f"tree {tree.id!r} has no distractors")

    rng = random.Random(rng_seed)
    target_id = rng.choice(targets)
    target = tree.nodes[target_id]
    nodes = dict(tree.nodes)

    original = linearize(tree)

    if error_type == HALL:
        nodes[target_id] = dataclasses.replace(target, text=_pick_distractor_for_hall(tree))
    elif error_type == NEG:
        try:
            nodes[target_id] = dataclasses.replace(target, text=negate_text(target.text))
        except PerturbationError as exc:
            raise PerturbationError(f"tree {tree.id!r} node {target_id!r}: {exc}") from exc
    elif error_type == SWAP:
        parent_id = rng.choice(sorted(target.parent_ids))
        parent = tree.nodes[parent_id]
        nodes[target_id] = dataclasses.replace(target, text=parent.text)
        nodes[parent_id] = dataclasses.replace(parent, text=target.text)
    elif error_type == REP:
        extra_id = f"{target_id}.rep"
        nodes[extra_id] = TreeNode(id=extra_id, text=target.text, parent_ids=(target_id,))
    elif error_type == PAR:
        extra_id = f"{target_id}.par"
        assert paraphraser is not None
        nodes[extra_id] = TreeNode(
            id=extra_id, text=paraphraser.paraphrase(target.text), parent_ids=(target_id,)
        )

    perturbed_id = f"{tree.id}::{error_type.lower()}::s{rng_seed}"
    if error_type == RED:
        distractor = rng.choice(list(tree.distractors))
        steps, step_nodes = _linearized_steps(tree.nodes)
        insert_at = step_nodes.index(target_id) + 1
        new_steps = [s.text for s in steps]
        new_steps.insert(insert_at, f"{_clean(distractor)}.")
        perturbed_steps = tuple(
            Step(index=i + 1, text=t) for i, t in enumerate(new_steps)
        )
    else:
        steps, _ = _linearized_steps(nodes)
        perturbed_steps = tuple(steps)

    perturbed = ReasoningChain(
        id=perturbed_id,
        context=tree.context_sentences,
        steps=perturbed_steps,
        predicted_answer=tree.hypothesis,
        error_labels={error_type: 1.0},
    )
    original = dataclasses.replace(original, error_labels={error_type: 0.0})
    return PerturbationRecord(
        error_type=error_type,
        target_node=target_id,
        original_chain=original,
        perturbed_chain=perturbed,
        seed=rng_seed,
    )


def derive_seed(base: int, *parts: str) -> int:
    """Stable per-record seed from a base seed and string parts."""
    return zlib.crc32(f"{base}|{'|'.join(parts)}".encode("utf-8"))


def manifest_entry(record: PerturbationRecord) -> dict[str, Any]:
    return {
        "record_id": record.perturbed_chain.id,
        "tree_id": record.original_chain.id,
        "error_type": record.error_type,
        "seed": record.seed,
        "target_node": record.target_node,
    }
