"""Turning problem records into segmented, length-checked training examples."""

from __future__ import annotations

from typing import TYPE_CHECKING

from latentsft.exceptions.errors import CapacityError, InvalidArgumentError
from latentsft.segmask import cot_layout, encoder_layout, segment_example

if TYPE_CHECKING:
    from collections.abc import Sequence

    from latentsft.models.data import Problem
    from latentsft.segmask import SegmentedExample
    from latentsft.synthdata.tokenizer import Tokenizer


def prepare_examples(
    problems: Sequence[Problem],
    tokenizer: Tokenizer,
    ratio: int,
    context_length: int,
) -> list[SegmentedExample]:
    """Segment every problem with ratio ``r`` and check it fits the context.

    Raises:
        InvalidArgumentError: If ``problems`` is empty.
        CapacityError: If an explicit or encoder sequence is too long.
    """
    if not problems:
        raise InvalidArgumentError("dataset", "must be non-empty")
    examples = []
    for problem in problems:
        example = segment_example(
            tokenizer, problem.question, problem.chain, problem.answer, ratio, problem.id
        )
        longest = max(len(cot_layout(example)), len(encoder_layout(example)))
        if longest > context_length:
            raise CapacityError(longest, context_length)
        examples.append(example)
    return examples
