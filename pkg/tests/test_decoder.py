"""Fused decoder: causality, fusion pass-through, losses, stepwise decoding."""

import math

import numpy as np
import pytest

from inkline import decoder as dec
from inkline import nn
from inkline import strokes as sk
from inkline.config import toy_config
from inkline.errors import DimensionError, ValidationError

TOL = 1e-4


def make_model(seed=0, dtype=np.float64, fusion_init="identity", vocab=7):
    return dec.DstfnModel(toy_config(vocab=vocab), seed=seed, dtype=dtype,
                          fusion_init=fusion_init)


def random_sentence(rng, vocab, n, strokes_per_glyph=2):
    targets = rng.integers(0, vocab, size=n).tolist()
    glyphs = []
    for t in targets:
        strokes = []
        for _ in range(strokes_per_glyph):
            pts = [(float(a), float(b)) for a, b in rng.uniform(0, 1, size=(3, 2))]
            strokes.append(sk.Stroke.from_xy(pts))
        glyphs.append(sk.Glyph(int(t), tuple(strokes)))
    return sk.InkSentence(tuple(glyphs), tuple(targets))


class TestTopK:
    def test_sorted_with_id_tiebreak(self):
        probs = np.array([0.2, 0.4, 0.2, 0.15, 0.05])
        pred = dec.top_k_from_probs(probs, 5)
        assert pred.ids == (1, 0, 2, 3, 4)
        assert all(a >= b for a, b in zip(pred.probs, pred.probs[1:]))

    def test_k_capped_at_5(self):
        with pytest.raises(ValidationError):
            dec.top_k_from_probs(np.full(10, 0.1), 6)

    def test_invalid_order_rejected(self):
        with pytest.raises(ValidationError):
            dec.TopKPrediction(((0, 0.1), (1, 0.5)))


class TestFusionBlock:
    def setup_method(self):
        self.model = make_model(seed=1)
        self.p = self.model._dec.blocks[0]
        self.f = self.model._dec.fusion[0]
        # make the block parameters generic, not pass-through
        rng = np.random.default_rng(2)
        self.f.w.data[...] = rng.standard_normal(self.f.w.shape) * 0.2

    def test_causality_in_tokens_and_glyphs(self):
        rng = np.random.default_rng(3)
        h = rng.standard_normal((5, 8))
        g = rng.standard_normal((5, 8))
        base = dec.fusion_block(nn.Tensor(h), nn.Tensor(g), self.p, self.f, 2).data
        for src in ("h", "g"):
            for i in range(4):
                h2, g2 = h.copy(), g.copy()
                (h2 if src == "h" else g2)[i + 1:] += 1.0
                out = dec.fusion_block(nn.Tensor(h2), nn.Tensor(g2), self.p, self.f, 2).data
                assert np.array_equal(base[: i + 1], out[: i + 1]), (src, i)

    def test_zeroed_glyph_half_ignores_glyphs(self):
        d = 8
        self.f.w.data[...] = 0.0
        self.f.w.data[:d] = np.eye(d)
        self.f.b.data[...] = 0.0
        rng = np.random.default_rng(4)
        h = rng.standard_normal((4, d))
        a = dec.fusion_block(nn.Tensor(h), nn.Tensor(rng.standard_normal((4, d))),
                             self.p, self.f, 2).data
        b = dec.fusion_block(nn.Tensor(h), nn.Tensor(rng.standard_normal((4, d))),
                             self.p, self.f, 2).data
        assert np.array_equal(a, b)

    def test_gradients(self):
        rng = np.random.default_rng(5)
        h = nn.Tensor(rng.standard_normal((2, 8)), requires_grad=True)
        g = nn.Tensor(rng.standard_normal((2, 8)), requires_grad=True)
        proj = rng.standard_normal((2, 8))

        def loss():
            out = dec.fusion_block(h, g, self.p, self.f, 2)
            return nn.sum_all(nn.mul(out, nn.Tensor(proj)))

        wrt = [h, g, self.f.w, self.f.b, self.p.wq, self.p.wo, self.p.mlp_w1,
               self.p.mlp_w2, self.p.ln_attn_g, self.p.ln_mlp_s]
        assert nn.check_gradients(loss, wrt, freeze_routing=True) <= TOL

    def test_length_mismatch_rejected(self):
        with pytest.raises(DimensionError):
            dec.fusion_block(nn.Tensor(np.zeros((3, 8))), nn.Tensor(np.zeros((2, 8))),
                             self.p, self.f, 2)


class TestForward:
    def setup_method(self):
        self.model = make_model(seed=7)
        rng = np.random.default_rng(8)
        # generic fusion weights so glyphs matter
        for f in self.model._dec.fusion:
            f.w.data[...] = rng.standard_normal(f.w.shape) * 0.2
        self.rng = rng

    def test_shape_contract(self):
        n, d, v = 6, 8, 7
        tokens = np.array([7, 1, 2, 3, 4, 5])
        vecs = nn.Tensor(self.rng.standard_normal((n, d)))
        logits = self.model.forward(tokens, vecs)
        assert logits.shape == (n, v)

    def test_row_softmax_is_stochastic(self):
        tokens = np.array([7, 0, 1])
        vecs = nn.Tensor(self.rng.standard_normal((3, 8)))
        p = nn.softmax(self.model.forward(tokens, vecs)).data
        assert np.allclose(p.sum(axis=-1), 1.0, atol=1e-6)

    def test_end_to_end_causality_bitwise(self):
        n = 6
        tokens = np.array([7, 2, 4, 1, 0, 3])
        vecs = self.rng.standard_normal((n, 8))
        base = self.model.forward(tokens, nn.Tensor(vecs)).data
        for i in range(n - 1):
            t2 = tokens.copy()
            t2[i + 1:] = self.rng.integers(0, 7, size=n - i - 1)
            v2 = vecs.copy()
            v2[i + 1:] += self.rng.standard_normal((n - i - 1, 8))
            out = self.model.forward(t2, nn.Tensor(v2)).data
            assert np.array_equal(base[: i + 1], out[: i + 1]), i

    def test_glyph_half_zero_makes_logits_glyph_invariant(self):
        model = make_model(seed=9)  # identity fusion init keeps glyph half zero
        tokens = np.array([7, 1, 2])
        a = model.forward(tokens, nn.Tensor(self.rng.standard_normal((3, 8)))).data
        b = model.forward(tokens, nn.Tensor(self.rng.standard_normal((3, 8)))).data
        assert np.array_equal(a, b)

    def test_token_glyph_length_mismatch(self):
        with pytest.raises(DimensionError):
            self.model.forward(np.array([7, 1]), nn.Tensor(np.zeros((3, 8))))

    def test_sequence_cap(self):
        n = 70  # toy max_len is 64
        with pytest.raises(DimensionError):
            self.model.forward(np.zeros(n, dtype=np.int64), nn.Tensor(np.zeros((n, 8))))


class TestLoss:
    def test_init_loss_near_log_vocab(self):
        for seed in range(5):
            model = make_model(seed=seed)
            rng = np.random.default_rng(100 + seed)
            batch = [random_sentence(rng, 7, 12) for _ in range(8)]
            loss = float(model.loss(batch).data)
            assert abs(loss - math.log(7)) / math.log(7) < 0.10, (seed, loss)

    def test_duplication_invariance(self):
        model = make_model(seed=11)
        rng = np.random.default_rng(12)
        a = random_sentence(rng, 7, 5)
        b = random_sentence(rng, 7, 9)
        single = float(model.loss([a, b]).data)
        doubled = float(model.loss([a, b, a, b]).data)
        assert abs(single - doubled) < 1e-12

    def test_overfit_ten_sentences(self):
        model = make_model(seed=13, dtype=np.float32)
        rng = np.random.default_rng(14)
        batch = [random_sentence(rng, 7, 5) for _ in range(10)]
        opt = nn.Adam(model.store, lr=3e-3)
        initial = None
        for _ in range(200):
            with nn.GradTape() as tape:
                loss = model.loss(batch)
            if initial is None:
                initial = float(loss.data)
            tape.backward(loss)
            opt.step()
        final = float(model.loss(batch).data)
        assert final < 0.1 * initial, (initial, final)


class TestPretrain:
    def test_pass_through_initialization(self):
        for seed in (0, 1, 2):
            model = make_model(seed=seed)
            rng = np.random.default_rng(seed + 40)
            s = random_sentence(rng, 7, 12)
            fused = float(model.loss([s]).data)
            pre = float(model.pretrain_loss([list(s.targets)]).data)
            assert abs(fused - pre) <= 1e-6, (seed, fused, pre)

    def test_causality(self):
        model = make_model(seed=21)
        rng = np.random.default_rng(22)
        tokens = np.array([7, 1, 2, 3, 4])
        base = model.pretrain_logits(tokens).data
        t2 = tokens.copy()
        t2[3:] = [6, 6]
        out = model.pretrain_logits(t2).data
        assert np.array_equal(base[:3], out[:3])

    def test_bigram_corpus_next_word_accuracy(self):
        # corpus with a unique successor for every symbol: the oracle next
        # word is always known
        vocab = 6
        succ = [(i + 1) % vocab for i in range(vocab)]
        rng = np.random.default_rng(23)
        seqs = []
        for _ in range(40):
            start = int(rng.integers(0, vocab))
            seq = [start]
            for _ in range(9):
                seq.append(succ[seq[-1]])
            seqs.append(seq)
        model = make_model(seed=24, dtype=np.float32, vocab=vocab)
        opt = nn.Adam(model.store, lr=3e-3)
        for _ in range(150):
            with nn.GradTape() as tape:
                loss = model.pretrain_loss(seqs)
            tape.backward(loss)
            opt.step()
        hits = total = 0
        for seq in seqs[:10]:
            tokens = np.array([model.bos] + seq[:-1])
            logits = model.pretrain_logits(tokens).data
            # forced positions: everything after the first symbol
            for i in range(1, len(seq)):
                hits += int(np.argmax(logits[i]) == seq[i])
                total += 1
        assert hits / total >= 0.95

    def test_parameter_participation_sets(self):
        model = make_model(seed=25)
        rng = np.random.default_rng(26)
        targets = rng.integers(0, 7, size=6).tolist()

        def used_names(loss_fn):
            model.store.zero_grads()
            with nn.GradTape() as tape:
                loss = loss_fn()
            tape.backward(loss)
            return {name for name, t in model.store.items()
                    if np.any(t.grad != 0)}

        pre_used = used_names(lambda: model.pretrain_loss([targets]))
        vecs = nn.Tensor(rng.standard_normal((6, 8)))
        tokens = model.teacher_tokens(targets)
        fused_used = used_names(
            lambda: nn.cross_entropy(model.forward(tokens, vecs), targets))
        assert pre_used == {n for n in model.store.names() if n.startswith("lm.")}
        assert {n for n in fused_used if not n.startswith("fusion.")} == pre_used


class TestRecognizeStepwise:
    def setup_method(self):
        self.model = make_model(seed=31, dtype=np.float32)
        rng = np.random.default_rng(32)
        for f in self.model._dec.fusion:
            f.w.data[...] = (rng.standard_normal(f.w.shape) * 0.2).astype(np.float32)
        self.rng = rng
        self.sentence = random_sentence(rng, 7, 6)

    def test_empty_stream_rejected(self):
        with pytest.raises(ValidationError):
            self.model.recognize_stepwise([])

    def test_single_glyph(self):
        preds = self.model.recognize_stepwise(list(self.sentence.glyphs[:1]))
        assert len(preds) == 1 and len(preds[0].entries) == 5

    def test_probabilities_non_increasing(self):
        preds = self.model.recognize_stepwise(list(self.sentence.glyphs))
        for p in preds:
            assert all(a >= b for a, b in zip(p.probs, p.probs[1:]))

    def test_gold_history_matches_when_predictions_correct(self):
        preds = self.model.recognize_stepwise(list(self.sentence.glyphs))
        committed = [p.top1 for p in preds]
        forced = self.model.recognize_stepwise(list(self.sentence.glyphs),
                                               gold_history=committed)
        for a, b in zip(preds, forced):
            assert a.entries == b.entries
