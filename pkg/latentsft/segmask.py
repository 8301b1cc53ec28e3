"""Chain segmentation, sequence layouts and the specialised attention masks.

Layouts describe every position of a training or inference sequence by its
role. Masks are then derived from roles alone:

* ``build_ltim`` (encoder): ordinary tokens are causal but never see latent
  slots; slot ``k`` sees the question, ``<think>``, segments ``S_1..S_k`` and
  itself.
* ``build_ltsum`` (stage-1 decoder, step ``i``): the suffix
  ``Y_i = [S_{i+1}..S_N, </think>, Answer]`` sees the question, ``<think>``,
  ``z_1..z_i`` and its own earlier tokens; slot ``z_j`` sees the question,
  ``<think>`` and ``z_1..z_j``; explicit segments ``S_{<=i}``, when a layout
  carries them, see only the question, ``<think>`` and themselves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Literal, TypeAlias

import numpy as np

from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.transformer.masking import AttentionMask

if TYPE_CHECKING:
    from collections.abc import Sequence

    from latentsft.synthdata.tokenizer import Tokenizer

RoleKind: TypeAlias = Literal[
    "question", "think_open", "explicit", "latent", "think_close", "answer"
]

_PREFIX: frozenset[str] = frozenset({"question", "think_open"})


@dataclass(frozen=True)
class Role:
    """Role of one position.

    ``index`` is the 1-based segment number of ``explicit`` and ``latent``
    roles; ``offset`` is the position inside an explicit segment or the
    answer.
    """

    kind: RoleKind
    index: int = 0
    offset: int = 0

    def __str__(self) -> str:
        if self.kind == "explicit":
            return f"S{self.index}.{self.offset}"
        if self.kind == "latent":
            return f"L{self.index}"
        return self.kind


@dataclass(frozen=True)
class SequenceLayout:
    """Roles and token ids of a sequence; latent slots fed as vectors carry ``None``."""

    roles: tuple[Role, ...]
    tokens: tuple[int | None, ...]

    def __post_init__(self) -> None:
        if len(self.roles) != len(self.tokens):
            raise InvalidArgumentError("layout", "roles and tokens differ in length")
        _validate_order(self.roles)

    def __len__(self) -> int:
        return len(self.roles)

    def positions(self, kind: RoleKind, index: int | None = None) -> list[int]:
        """Positions with role ``kind`` (and segment ``index`` when given)."""
        return [
            p
            for p, role in enumerate(self.roles)
            if role.kind == kind and (index is None or role.index == index)
        ]

    @property
    def latent_positions(self) -> list[int]:
        """Latent slot positions in slot order."""
        return self.positions("latent")

    @property
    def slot_count(self) -> int:
        """Number of latent slots N."""
        return len(self.latent_positions)


def _validate_order(roles: Sequence[Role]) -> None:
    """Question, then ``<think>``, then the body, then ``</think>`` and answer."""
    if not roles:
        raise InvalidArgumentError("layout", "is empty")
    stage = 0  # 0 question, 1 body, 2 after </think>
    seen_open = False
    latent_next = 1
    for position, role in enumerate(roles):
        if role.kind == "question":
            if stage != 0 or seen_open:
                msg = f"question token at position {position} follows the body"
                raise InvalidArgumentError("layout", msg)
        elif role.kind == "think_open":
            if seen_open:
                raise InvalidArgumentError("layout", "more than one <think>")
            seen_open = True
            stage = 1
        elif role.kind in {"explicit", "latent"}:
            if stage != 1:
                msg = f"{role} at position {position} is outside <think>"
                raise InvalidArgumentError("layout", msg)
            if role.kind == "latent":
                if role.index != latent_next:
                    msg = f"latent slots out of order at position {position}"
                    raise InvalidArgumentError("layout", msg)
                latent_next += 1
            if role.index < 1:
                raise InvalidArgumentError("layout", f"segment index of {role} must be >= 1")
        elif role.kind == "think_close":
            if stage != 1:
                raise InvalidArgumentError("layout", "</think> without a matching <think>")
            stage = 2
        elif role.kind == "answer" and stage != 2:
            msg = f"answer token at position {position} precedes </think>"
            raise InvalidArgumentError("layout", msg)


@dataclass(frozen=True)
class SegmentedExample:
    """A tokenized problem with its chain split into segments.

    ``answer`` ends with the end-of-sequence id.
    """

    question: tuple[int, ...]
    segments: tuple[tuple[int, ...], ...]
    answer: tuple[int, ...]
    think_open: int
    think_close: int
    latent: int
    id: str = ""

    def __post_init__(self) -> None:
        if not self.segments:
            raise InvalidArgumentError("segments", "need at least one segment")
        if any(not s for s in self.segments):
            raise InvalidArgumentError("segments", "segments must be non-empty")
        if not self.question:
            raise InvalidArgumentError("question", "must be non-empty")

    @property
    def n_segments(self) -> int:
        """N."""
        return len(self.segments)

    @property
    def chain(self) -> tuple[int, ...]:
        """Concatenated explicit chain."""
        return tuple(t for segment in self.segments for t in segment)


def segment_fixed(chain: Sequence[int], r: int) -> list[list[int]]:
    """Split ``chain`` into ``ceil(len/r)`` windows of ``r`` tokens; the last may be shorter.

    Raises:
        InvalidArgumentError: On an empty chain or ``r < 1``.
    """
    if not chain:
        raise InvalidArgumentError("chain", "must be non-empty")
    if r < 1:
        raise InvalidArgumentError("r", f"must be >= 1, got {r}")
    tokens = list(chain)
    return [tokens[start : start + r] for start in range(0, len(tokens), r)]


def segment_semantic(chain: Sequence[int], boundaries: Sequence[int]) -> list[list[int]]:
    """Thought-boundary segmentation. Fixed-length segmentation is used instead."""
    raise NotImplementedError("semantic segmentation is not implemented; use segment_fixed")


def segment_example(
    tokenizer: Tokenizer,
    question: str,
    chain: str,
    answer: str,
    r: int,
    example_id: str = "",
) -> SegmentedExample:
    """Tokenize a problem and segment its chain with ratio ``r``."""
    return SegmentedExample(
        question=tuple(tokenizer.tokenize(question)),
        segments=tuple(tuple(s) for s in segment_fixed(tokenizer.tokenize(chain), r)),
        answer=(*tokenizer.tokenize(answer), tokenizer.eos_id),
        think_open=tokenizer.think_open_id,
        think_close=tokenizer.think_close_id,
        latent=tokenizer.latent_id,
        id=example_id,
    )


def expected_segments(chain_length: int, r: int) -> int:
    """``ceil(chain_length / r)``."""
    return math.ceil(chain_length / r)


# ---------------------------------------------------------------------- #
# Layout builders
# ---------------------------------------------------------------------- #
class _Builder:
    def __init__(self) -> None:
        self.roles: list[Role] = []
        self.tokens: list[int | None] = []

    def add(self, role: Role, token: int | None) -> None:
        self.roles.append(role)
        self.tokens.append(token)

    def prefix(self, example: SegmentedExample) -> None:
        for token in example.question:
            self.add(Role("question"), token)
        self.add(Role("think_open"), example.think_open)

    def segment(self, index: int, tokens: Sequence[int]) -> None:
        for offset, token in enumerate(tokens):
            self.add(Role("explicit", index, offset), token)

    def suffix(self, example: SegmentedExample) -> None:
        self.add(Role("think_close"), example.think_close)
        for offset, token in enumerate(example.answer):
            self.add(Role("answer", offset=offset), token)

    def build(self) -> SequenceLayout:
        return SequenceLayout(tuple(self.roles), tuple(self.tokens))


def encoder_layout(example: SegmentedExample) -> SequenceLayout:
    """``[Q, <think>, S_1, L_1, ..., S_N, L_N]``; slots hold the ``<latent>`` id."""
    builder = _Builder()
    builder.prefix(example)
    for index, segment in enumerate(example.segments, start=1):
        builder.segment(index, segment)
        builder.add(Role("latent", index), example.latent)
    return builder.build()


def decoder_layout(example: SegmentedExample, step: int) -> SequenceLayout:
    """``[Q, <think>, z_1..z_N, S_{i+1}..S_N, </think>, Answer]`` for step ``i``.

    Raises:
        InvalidArgumentError: If ``step`` is outside ``[1, N]``.
    """
    if not 1 <= step <= example.n_segments:
        raise InvalidArgumentError("i", f"{step} outside [1, {example.n_segments}]")
    builder = _Builder()
    builder.prefix(example)
    for index in range(1, example.n_segments + 1):
        builder.add(Role("latent", index), None)
    for index in range(step + 1, example.n_segments + 1):
        builder.segment(index, example.segments[index - 1])
    builder.suffix(example)
    return builder.build()


def stage2_layout(example: SegmentedExample) -> SequenceLayout:
    """``[Q, <think>, z_1..z_N, </think>, Answer]``."""
    builder = _Builder()
    builder.prefix(example)
    for index in range(1, example.n_segments + 1):
        builder.add(Role("latent", index), None)
    builder.suffix(example)
    return builder.build()


def cot_layout(example: SegmentedExample) -> SequenceLayout:
    """``[Q, <think>, chain, </think>, Answer]`` for explicit training."""
    builder = _Builder()
    builder.prefix(example)
    for index, segment in enumerate(example.segments, start=1):
        builder.segment(index, segment)
    builder.suffix(example)
    return builder.build()


def suffix_positions(layout: SequenceLayout, step: int) -> list[int]:
    """Positions of ``Y_i``: explicit segments after ``step``, ``</think>`` and the answer."""
    return [
        p
        for p, role in enumerate(layout.roles)
        if role.kind in {"think_close", "answer"}
        or (role.kind == "explicit" and role.index > step)
    ]


# ---------------------------------------------------------------------- #
# Masks
# ---------------------------------------------------------------------- #
def build_ltim(layout: SequenceLayout) -> AttentionMask:
    """Latent-token induction mask for the encoder.

    Raises:
        InvalidArgumentError: If the layout carries ``</think>`` or answer
            tokens, or a slot ``L_k`` does not directly follow its segment.
    """
    roles = layout.roles
    if layout.positions("think_close") or layout.positions("answer"):
        raise InvalidArgumentError("layout", "encoder layouts end with the last latent slot")
    current = 0
    for position, role in enumerate(roles):
        if role.kind == "explicit":
            if role.index not in {current, current + 1}:
                raise InvalidArgumentError("layout", f"{role} at position {position} skips a slot")
            current = role.index
        elif role.kind == "latent" and role.index != current:
            msg = f"{role} at position {position} does not follow S{role.index}"
            raise InvalidArgumentError("layout", msg)

    length = len(roles)
    allow = np.tril(np.ones((length, length), dtype=bool))
    is_latent = np.array([role.kind == "latent" for role in roles])
    for row, role in enumerate(roles):
        if role.kind != "latent":
            allow[row] &= ~is_latent
            continue
        visible = np.array(
            [
                other.kind in _PREFIX or (other.kind == "explicit" and other.index <= role.index)
                for other in roles
            ]
        )
        allow[row] &= visible
        allow[row, row] = True
    return AttentionMask(allow)


def build_ltsum(layout: SequenceLayout, step: int) -> AttentionMask:
    """Latent-token supervision mask for stage-1 decoding at step ``i``.

    Raises:
        InvalidArgumentError: If ``step`` is outside ``[1, N]``.
    """
    n_slots = layout.slot_count
    if not 1 <= step <= n_slots:
        raise InvalidArgumentError("i", f"{step} outside [1, {n_slots}]")
    roles = layout.roles
    length = len(roles)
    prefix = np.array([role.kind in _PREFIX for role in roles])
    latent_upto = np.array([role.kind == "latent" and role.index <= step for role in roles])
    suffix = np.zeros(length, dtype=bool)
    suffix[suffix_positions(layout, step)] = True

    allow = np.zeros((length, length), dtype=bool)
    for row, role in enumerate(roles):
        if role.kind in _PREFIX:
            allow[row] = prefix
        elif role.kind == "latent":
            allow[row] = prefix | np.array(
                [other.kind == "latent" and other.index <= role.index for other in roles]
            )
        elif suffix[row]:
            allow[row] = prefix | latent_upto | suffix
        else:
            allow[row] = prefix
        allow[row, row] = True
    return AttentionMask(np.tril(allow))


def mask_ablation_variants(layout: SequenceLayout) -> AttentionMask:
    """Plain causal mask over ``layout``, used by the w/o-LTIM and w/o-LTSuM runs."""
    return AttentionMask.causal(len(layout))
