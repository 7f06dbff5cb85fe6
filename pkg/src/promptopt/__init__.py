"""RL-trained selection and ordering of in-context examples for LLM prompts."""

__version__ = "0.1.0"
