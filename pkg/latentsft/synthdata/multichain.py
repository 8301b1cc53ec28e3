"""Alternative accumulation orders of pure-sum problems."""

from __future__ import annotations

from itertools import permutations

from latentsft import get_logger
from latentsft.exceptions.errors import InvalidArgumentError
from latentsft.models.data import MultiChainProblem, Problem
from latentsft.synthdata.generator import execute_chain, operands

log = get_logger(__name__)

SIMILARITY_THRESHOLD = 0.9


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit insert, delete and substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            current.append(
                min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + (ca != cb))
            )
        previous = current
    return previous[-1]


def edit_similarity(a: str, b: str) -> float:
    """``1 - levenshtein(a, b) / max(len(a), len(b))``; two empty strings are identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def render_sum(values: list[int]) -> str:
    """Chain accumulating ``values`` in the given order."""
    total = values[0]
    steps = []
    for value in values[1:]:
        steps.append(f"{total}+{value}={total + value}")
        total += value
    return ";".join(steps)


def gen_multichain(
    problem: Problem,
    max_chains: int = 4,
    threshold: float = SIMILARITY_THRESHOLD,
) -> MultiChainProblem:
    """Collect distinct, verified summation orders of a pure-sum problem.

    Orders whose first two operands are swapped give the same chain up to
    commutation and are enumerated once. Chains are kept greedily, starting
    from the problem's own chain, while their edit similarity to every kept
    chain stays below ``threshold``.

    Args:
        problem (Problem): A problem whose operators are all ``+``.
        max_chains (int): Cap M on kept chains.
        threshold (float): Pairwise similarity ceiling.

    Raises:
        InvalidArgumentError: If the problem is not a pure sum.

    Returns:
        MultiChainProblem: ``excluded`` is set when fewer than two chains survive.
    """
    values, symbols = operands(problem.question)
    if not symbols or set(symbols) != {"+"}:
        raise InvalidArgumentError("problem", f"{problem.question!r} is not a pure sum")
    kept = [problem.chain]
    seen = {problem.chain}
    for order in permutations(range(len(values))):
        if len(kept) >= max_chains:
            break
        if order[0] > order[1]:
            continue
        chain = render_sum([values[i] for i in order])
        if chain in seen:
            continue
        seen.add(chain)
        if execute_chain(chain) != problem.answer:
            log.warning("Discarding chain %s: does not reach %s", chain, problem.answer)
            continue
        if all(edit_similarity(chain, other) < threshold for other in kept):
            kept.append(chain)
    excluded = len(kept) < 2
    if excluded:
        log.debug("%s has a single distinct chain", problem.id)
    return MultiChainProblem(problem=problem, chains=kept, excluded=excluded)
