"""Speech tokenization at a variable token rate.

A contrastive boundary detector cuts an utterance into segments, each segment
is compressed to one vector, and a group-wise scalar quantizer turns that
vector into a single composite token.
"""

__version__ = "0.1.0"
