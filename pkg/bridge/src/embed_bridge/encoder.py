"""Encoder loading, kept behind a tiny interface so tests can inject a
stand-in: an encoder is anything with a `dims` attribute and an
`encode(sentences) -> float32 array` method."""

from __future__ import annotations

DEFAULT_MODEL = "stsb-xlm-r-multilingual"


class ModelLoadFailure(Exception):
    pass


class SentenceTransformerEncoder:
    """Wraps a sentence-transformers checkpoint with its default pooling."""

    def __init__(self, model_name: str, device: str | None = None):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise ModelLoadFailure(f"sentence-transformers not installed: {exc}") from exc
        try:
            self._model = SentenceTransformer(model_name, device=device)
        except Exception as exc:
            raise ModelLoadFailure(f"cannot load model '{model_name}': {exc}") from exc
        self.model_name = model_name
        dims = self._model.get_sentence_embedding_dimension()
        if not dims:
            raise ModelLoadFailure(f"model '{model_name}' reports no output dimension")
        self.dims = int(dims)

    def encode(self, sentences):
        import numpy as np

        return np.asarray(
            self._model.encode(sentences, convert_to_numpy=True,
                               show_progress_bar=False),
            dtype="float32",
        )


def load_encoder(model_name: str = DEFAULT_MODEL, device: str | None = None):
    return SentenceTransformerEncoder(model_name, device)
