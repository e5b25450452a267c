"""Simplifying scientific sentences for non-expert readers.

Complex phrases are found by comparing document frequencies in everyday and
scientific reference corpora, tagged with square brackets, and sent in
batches to a chat model; replies are split back into one simplification per
sentence and scored with standard readability measures.
"""

__version__ = "0.1.0"
