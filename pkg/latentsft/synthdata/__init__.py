"""Synthetic arithmetic corpora and the character tokenizer."""

from latentsft.synthdata.generator import execute_chain, gen_problem
from latentsft.synthdata.multichain import edit_similarity, gen_multichain
from latentsft.synthdata.tokenizer import Tokenizer

__all__ = ["Tokenizer", "edit_similarity", "execute_chain", "gen_multichain", "gen_problem"]
