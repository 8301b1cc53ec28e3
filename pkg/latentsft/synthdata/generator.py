"""Chained arithmetic problems evaluated strictly left to right.

``3+4*2+5`` means ``((3+4)*2)+5`` and is solved by the chain
``3+4=7;7*2=14;14+5=19``. A multiplication that would reach 1000 is
replaced by an addition so every intermediate value stays short.
"""

from __future__ import annotations

import operator
import re
from typing import TYPE_CHECKING

import numpy as np

from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.models.data import Problem

if TYPE_CHECKING:
    from collections.abc import Callable

VALUE_LIMIT = 1000

OPERATORS: dict[str, Callable[[int, int], int]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
}

_STEP = re.compile(r"^(-?\d+)([+\-*])(\d+)=(-?\d+)$")
_TERM = re.compile(r"(\d+)|([+\-*])")


def gen_problem(
    seed: int,
    n_steps: int,
    value_range: tuple[int, int] = (1, 9),
    ops: str = "+*",
) -> Problem:
    """Draw a problem of ``n_steps`` operations.

    Args:
        seed (int): Seeds a private ``numpy`` generator; same seed, same problem.
        n_steps (int): Number of operations (chain equalities).
        value_range (tuple[int, int]): Inclusive operand range.
        ops (str): Operators to draw from.

    Raises:
        InvalidArgumentError: If ``seed`` is negative, ``n_steps < 1`` or ``ops``
            is empty or unknown.

    Returns:
        Problem: Question, chain and answer with id ``p<seed>``.
    """
    if seed < 0:
        raise InvalidArgumentError("seed", f"must be >= 0, got {seed}")
    if n_steps < 1:
        raise InvalidArgumentError("n_steps", f"must be >= 1, got {n_steps}")
    if not ops or set(ops) - set(OPERATORS):
        raise InvalidArgumentError("ops", f"expected a subset of '+-*', got {ops!r}")
    low, high = value_range
    rng = np.random.default_rng(seed)
    value = int(rng.integers(low, high, endpoint=True))
    question = [str(value)]
    steps: list[str] = []
    for _ in range(n_steps):
        symbol = ops[int(rng.integers(len(ops)))]
        operand = int(rng.integers(low, high, endpoint=True))
        if symbol == "*" and abs(value * operand) >= VALUE_LIMIT:
            symbol = "+"
        result = OPERATORS[symbol](value, operand)
        steps.append(f"{value}{symbol}{operand}={result}")
        question.append(f"{symbol}{operand}")
        value = result
    return Problem(
        id=f"p{seed}",
        question="".join(question),
        chain=";".join(steps),
        answer=str(value),
        seed=seed,
    )


def execute_chain(chain: str) -> str:
    """Re-evaluate every equality and return the final value.

    Raises:
        InvalidArgumentError: If a step is malformed, miscomputed or does not
            continue from the previous result.
    """
    previous: int | None = None
    for step in chain.split(";"):
        match = _STEP.match(step)
        if match is None:
            raise InvalidArgumentError("chain", f"malformed step {step!r}")
        left, symbol, right, stated = match.groups()
        if previous is not None and int(left) != previous:
            raise InvalidArgumentError("chain", f"step {step!r} does not continue from {previous}")
        result = OPERATORS[symbol](int(left), int(right))
        if result != int(stated):
            raise InvalidArgumentError("chain", f"step {step!r} evaluates to {result}")
        previous = result
    return str(previous)


def evaluate_question(question: str) -> str:
    """Left-to-right value of a question string."""
    terms = _TERM.findall(question)
    if not terms or not terms[0][0]:
        raise InvalidArgumentError("question", f"cannot parse {question!r}")
    value = int(terms[0][0])
    for (_, symbol), (number, _) in zip(terms[1::2], terms[2::2], strict=True):
        value = OPERATORS[symbol](value, int(number))
    return str(value)


def operands(question: str) -> tuple[list[int], list[str]]:
    """Numbers and operators of a question, in order."""
    terms = _TERM.findall(question)
    return [int(n) for n, _ in terms if n], [s for _, s in terms if s]
