"""Character-level tokenizer over a closed alphabet.

Ids ``0..4`` are reserved markers; the alphabet follows in order. Markers
are written as their literal strings (``<think>``) in text and always map to
a single id.
"""

from __future__ import annotations

from latentsft.exceptions.errors import InvalidArgumentError

PAD = "<pad>"
EOS = "<eos>"
THINK_OPEN = "<think>"
THINK_CLOSE = "</think>"
LATENT = "<latent>"
SPECIAL_TOKENS: tuple[str, ...] = (PAD, EOS, THINK_OPEN, THINK_CLOSE, LATENT)

DEFAULT_ALPHABET = "0123456789+-*/=;(),.:? abcdefghijklmnopqrstuvwxyz"


class Tokenizer:
    """Closed-vocabulary character tokenizer.

    Args:
        alphabet (str): Ordered, duplicate-free characters; must not contain
            ``<``, since that opens marker strings.

    Raises:
        InvalidArgumentError: If the alphabet is empty, repeats a character or
            contains ``<``.
    """

    def __init__(self, alphabet: str = DEFAULT_ALPHABET) -> None:
        if not alphabet:
            raise InvalidArgumentError("alphabet", "must not be empty")
        if len(set(alphabet)) != len(alphabet):
            raise InvalidArgumentError("alphabet", "contains duplicate characters")
        if "<" in alphabet:
            raise InvalidArgumentError("alphabet", "'<' is reserved for markers")
        self.alphabet = alphabet
        self.symbols: tuple[str, ...] = (*SPECIAL_TOKENS, *alphabet)
        self._ids = {symbol: index for index, symbol in enumerate(self.symbols)}

    @property
    def vocab_size(self) -> int:
        """Number of ids, markers included."""
        return len(self.symbols)

    @property
    def pad_id(self) -> int:
        """Padding id."""
        return self._ids[PAD]

    @property
    def eos_id(self) -> int:
        """End-of-sequence id."""
        return self._ids[EOS]

    @property
    def think_open_id(self) -> int:
        """``<think>`` id."""
        return self._ids[THINK_OPEN]

    @property
    def think_close_id(self) -> int:
        """``</think>`` id."""
        return self._ids[THINK_CLOSE]

    @property
    def latent_id(self) -> int:
        """Latent-slot placeholder id."""
        return self._ids[LATENT]

    def tokenize(self, text: str) -> list[int]:
        """Map text to ids.

        Raises:
            InvalidArgumentError: On characters outside the alphabet.
        """
        tokens: list[int] = []
        position = 0
        while position < len(text):
            if text[position] == "<":
                marker = next(
                    (m for m in SPECIAL_TOKENS if text.startswith(m, position)), None
                )
                if marker is None:
                    raise InvalidArgumentError(
                        "text", f"unknown marker at offset {position} in {text!r}"
                    )
                tokens.append(self._ids[marker])
                position += len(marker)
                continue
            symbol = text[position]
            if symbol not in self._ids:
                raise InvalidArgumentError(
                    "text", f"character {symbol!r} is outside the alphabet"
                )
            tokens.append(self._ids[symbol])
            position += 1
        return tokens

    def detokenize(self, tokens: list[int]) -> str:
        """Map ids back to text.

        Raises:
            InvalidArgumentError: On ids outside the vocabulary.
        """
        invalid = [token for token in tokens if not 0 <= token < self.vocab_size]
        if invalid:
            raise InvalidArgumentError("tokens", f"ids {invalid} outside the vocabulary")
        return "".join(self.symbols[token] for token in tokens)
