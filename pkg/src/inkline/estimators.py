"""Estimator-style fronts for the three recognizers.

These wrap the training loops behind the familiar fit/predict surface
(constructor hyperparameters, ``get_params``/``set_params`` from
scikit-learn's ``BaseEstimator``, fitted state on trailing-underscore
attributes) so the models compose with the wider tooling ecosystem.  ``X``
is a list of ink sentences; ``y`` is unused because targets travel inside
the sentences.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .config import preset_config
from .decoder import TopKPrediction
from .errors import ValidationError
from .evaluation import precision_at_k
from .forge import Alphabet
from .strokes import InkSentence
from . import training


def _validate_sentences(X) -> list[InkSentence]:
    if not isinstance(X, (list, tuple)) or len(X) == 0:
        raise ValidationError("X must be a non-empty list of InkSentence")
    for s in X:
        if not isinstance(s, InkSentence):
            raise ValidationError(f"X holds a {type(s).__name__}, expected InkSentence")
    return list(X)


class _RecognizerBase(BaseEstimator):
    _kind = ""

    def __init__(self, preset: str = "desk", vocab: int = 40, seed: int = 0,
                 lr: float = 1e-3, batch_size: int = 16,
                 steps_period1: int = 400, steps_period2: int = 400,
                 pretrain_epochs: int = 8, style_refresh: int = 1000):
        self.preset = preset
        self.vocab = vocab
        self.seed = seed
        self.lr = lr
        self.batch_size = batch_size
        self.steps_period1 = steps_period1
        self.steps_period2 = steps_period2
        self.pretrain_epochs = pretrain_epochs
        self.style_refresh = style_refresh

    # -- fitting -------------------------------------------------------------

    def _settings(self) -> training.TrainSettings:
        return training.TrainSettings(
            steps_period1=self.steps_period1, steps_period2=self.steps_period2,
            batch_size=self.batch_size, lr=self.lr, seed=self.seed,
            style_refresh=self.style_refresh)

    def _build(self):
        cfg = preset_config(self.preset, self.vocab)
        return training.build_model(self._kind, cfg, seed=self.seed)

    def _pretrain_or_adopt(self, model, X, pretrained):
        return  # overridden where the model has a pretrainable stack

    def fit(self, X, y=None, alphabet: Alphabet | None = None,
            pretrained: dict[str, np.ndarray] | None = None):
        X = _validate_sentences(X)
        model = self._build()
        self._pretrain_or_adopt(model, X, pretrained)
        self.train_log_ = training.train_curriculum(
            model, X, alphabet, self._settings())
        self.model_ = model
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    # -- prediction ----------------------------------------------------------

    def predict_topk(self, X, k: int = 5) -> list[list[TopKPrediction]]:
        self._check_fitted()
        X = _validate_sentences(X)
        if hasattr(self.model_, "predict_sentences"):
            return self.model_.predict_sentences(X, k=k)
        return [self.model_.predict_sentence(s, k=k) for s in X]

    def predict(self, X) -> list[list[int]]:
        return [[p.top1 for p in preds] for preds in self.predict_topk(X)]

    def score(self, X, y=None) -> float:
        """Mean P@1 over all positions."""
        preds = self.predict_topk(X)
        flat = [p for ps in preds for p in ps]
        targets = [t for s in X for t in s.targets]
        return precision_at_k(flat, targets)[0]


class SbdcnnClassifier(_RecognizerBase):
    """Single-character conv classifier; context-free per position."""

    _kind = "sbdcnn"


class VcnRecognizer(_RecognizerBase):
    """Glyph-sequence recognizer (recurrent or decoder variant)."""

    _kind = "vcn-decoder"

    def __init__(self, variant: str = "decoder", preset: str = "desk",
                 vocab: int = 40, seed: int = 0, lr: float = 1e-3,
                 batch_size: int = 16, steps_period1: int = 400,
                 steps_period2: int = 400, pretrain_epochs: int = 8,
                 style_refresh: int = 1000):
        super().__init__(preset=preset, vocab=vocab, seed=seed, lr=lr,
                         batch_size=batch_size, steps_period1=steps_period1,
                         steps_period2=steps_period2,
                         pretrain_epochs=pretrain_epochs,
                         style_refresh=style_refresh)
        self.variant = variant

    def _build(self):
        cfg = preset_config(self.preset, self.vocab)
        kind = "vcn-decoder" if self.variant == "decoder" else "vcn-lstm"
        return training.build_model(kind, cfg, seed=self.seed)

    def _pretrain_or_adopt(self, model, X, pretrained):
        if self.variant != "decoder" or self.pretrain_epochs <= 0:
            return
        if pretrained is None:
            cfg = preset_config(self.preset, self.vocab)
            lm = training.build_model("dstfn", cfg, seed=self.seed)
            _, self.pretrain_perplexity_ = training.pretrain_lm(
                lm, [list(s.targets) for s in X], epochs=self.pretrain_epochs,
                batch_size=self.batch_size, lr=self.lr, seed=self.seed)
            pretrained = lm.store.as_arrays()
        model.load_pretrained_stack(pretrained)


class DstfnRecognizer(_RecognizerBase):
    """Fused recognizer: pretrained token stack plus per-block glyph fusion."""

    _kind = "dstfn"

    def _pretrain_or_adopt(self, model, X, pretrained):
        if self.pretrain_epochs <= 0 and pretrained is None:
            return
        if pretrained is None:
            _, self.pretrain_perplexity_ = training.pretrain_lm(
                model, [list(s.targets) for s in X], epochs=self.pretrain_epochs,
                batch_size=self.batch_size, lr=self.lr, seed=self.seed)
        else:
            model.store.load_arrays(pretrained)
            model.invalidate_caches()
