"""domainsift: select pseudo in-domain parallel sentences from a large
general-domain corpus by ranking them against a monolingual in-domain
corpus with reduced-dimension sentence-embedding cosine similarity."""

__version__ = "0.1.0"
