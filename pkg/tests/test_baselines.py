"""Baseline models: single-character classifier and glyph-sequence heads."""

import math

import numpy as np
import pytest

from inkline import nn
from inkline import strokes as sk
from inkline.baselines import SbdcnnModel, VcnModel, VcnVariant
from inkline.config import ModelConfig, EncoderConfig, DecoderConfig, toy_config
from inkline.decoder import DstfnModel
from inkline.errors import ValidationError

from tests.test_decoder import random_sentence


def small_cfg(vocab=7):
    cfg = ModelConfig(
        EncoderConfig(map_size=16, channels=(8, 8, 16, 16), hidden=32),
        DecoderConfig(vocab=vocab, hidden=32, heads=4, mlp_hidden=64, max_len=64),
        preset="test")
    cfg.validate()
    return cfg


class TestSbdcnn:
    def setup_method(self):
        self.model = SbdcnnModel(toy_config(), seed=1, dtype=np.float64)
        rng = np.random.default_rng(2)
        self.sentence = random_sentence(rng, 7, 6)

    def test_identical_glyphs_identical_predictions(self):
        g = self.sentence.glyphs[0]
        s = sk.InkSentence((g, self.sentence.glyphs[1], g), (0, 1, 0))
        preds = self.model.classify_sentence(s)
        assert preds[0].entries == preds[2].entries

    def test_topk_non_increasing(self):
        for p in self.model.classify_sentence(self.sentence):
            assert all(a >= b for a, b in zip(p.probs, p.probs[1:]))

    def test_permutation_equivariance(self):
        perm = [4, 2, 0, 5, 1, 3]
        base = self.model.classify_sentence(self.sentence)
        shuffled = sk.InkSentence(
            tuple(self.sentence.glyphs[i] for i in perm),
            tuple(self.sentence.targets[i] for i in perm))
        permuted = self.model.classify_sentence(shuffled)
        for j, i in enumerate(perm):
            assert permuted[j].entries == base[i].entries

    def test_overfit_separable_alphabet(self):
        # 40 cleanly separable classes: an 8x5 grid of line positions
        vocab = 40
        glyphs = []
        for c in range(vocab):
            x = (c % 8) / 7.0
            y = (c // 8) / 4.0
            strokes = (sk.Stroke.from_xy([(x, 0.0), (x, 1.0)]),
                       sk.Stroke.from_xy([(0.0, y), (1.0, y)]))
            glyphs.append(sk.Glyph(c, strokes))
        model = SbdcnnModel(small_cfg(vocab), seed=3, dtype=np.float32)
        maps = np.stack([model.glyph_maps(g) for g in glyphs])
        labels = list(range(vocab))
        opt = nn.Adam(model.store, lr=3e-3)
        for _ in range(200):
            with nn.GradTape() as tape:
                loss = model.loss_glyph_batch(maps, labels)
            tape.backward(loss)
            opt.step()
        hits = sum(int(model.classify(g).top1 == g.symbol) for g in glyphs)
        assert hits / vocab >= 0.99


class TestVcn:
    @pytest.mark.parametrize("variant", list(VcnVariant))
    def test_causality_bitwise(self, variant):
        model = VcnModel(toy_config(), variant=variant, seed=4, dtype=np.float64)
        rng = np.random.default_rng(5)
        vecs = rng.standard_normal((6, 8))
        base = model.forward_vecs(nn.Tensor(vecs)).data
        for i in range(5):
            v2 = vecs.copy()
            v2[i + 1:] += rng.standard_normal((5 - i, 8))
            out = model.forward_vecs(nn.Tensor(v2)).data
            assert np.array_equal(base[: i + 1], out[: i + 1]), (variant, i)

    @pytest.mark.parametrize("variant", list(VcnVariant))
    def test_single_position_is_context_free(self, variant):
        model = VcnModel(toy_config(), variant=variant, seed=6, dtype=np.float64)
        rng = np.random.default_rng(7)
        v = rng.standard_normal((1, 8))
        longer = np.concatenate([v, rng.standard_normal((3, 8))])
        a = model.forward_vecs(nn.Tensor(v)).data[0]
        b = model.forward_vecs(nn.Tensor(longer)).data[0]
        # lengths differ, so BLAS kernel selection may flip last-ulp bits
        assert np.allclose(a, b, atol=1e-12)

    @pytest.mark.parametrize("variant", list(VcnVariant))
    def test_init_loss_near_log_vocab(self, variant):
        for seed in range(5):
            model = VcnModel(toy_config(), variant=variant, seed=seed, dtype=np.float64)
            rng = np.random.default_rng(300 + seed)
            batch = [random_sentence(rng, 7, 12) for _ in range(6)]
            loss = float(model.loss(batch).data)
            assert abs(loss - math.log(7)) / math.log(7) < 0.10, (variant, seed, loss)

    def test_duplication_invariance(self):
        model = VcnModel(toy_config(), seed=8, dtype=np.float64)
        rng = np.random.default_rng(9)
        a = random_sentence(rng, 7, 5)
        b = random_sentence(rng, 7, 8)
        assert abs(float(model.loss([a, b]).data) -
                   float(model.loss([a, b, b, a]).data)) < 1e-12

    @pytest.mark.parametrize("variant,hidden,lr", [
        (VcnVariant.RECURRENT, 16, 4e-3),
        (VcnVariant.DECODER, 8, 3e-3),
    ])
    def test_overfit_ten_sentences(self, variant, hidden, lr):
        cfg = toy_config(vocab=7, hidden=hidden, heads=2)
        model = VcnModel(cfg, variant=variant, seed=10, dtype=np.float32)
        rng = np.random.default_rng(11)
        batch = [random_sentence(rng, 7, 5) for _ in range(10)]
        opt = nn.Adam(model.store, lr=lr)
        initial = float(model.loss(batch).data)
        for _ in range(500):
            with nn.GradTape() as tape:
                loss = model.loss(batch)
            tape.backward(loss)
            opt.step()
            if float(loss.data) < 0.05 * initial:
                break
        final = float(model.loss(batch).data)
        assert final < 0.1 * initial, (initial, final)

    def test_lstm_gradients(self):
        model = VcnModel(toy_config(), variant=VcnVariant.RECURRENT, seed=12,
                         dtype=np.float64)
        rng = np.random.default_rng(13)
        vecs = nn.Tensor(rng.standard_normal((3, 8)), requires_grad=True)
        proj = rng.standard_normal((3, 7))

        def loss():
            return nn.sum_all(nn.mul(model.forward_vecs(vecs), nn.Tensor(proj)))

        layer = model._lstm[0]
        wrt = [vecs, layer.w_ih, layer.w_hh, layer.b]
        assert nn.check_gradients(loss, wrt, freeze_routing=True) <= 1e-4

    def test_pretraining_lowers_initial_glyph_loss(self):
        # strongly skewed unigrams: the pretrained softmax prior transfers
        # even though glyph projections replace the token embeddings
        vocab = 7
        succ = {0: 0, 1: 0, 2: 0, 3: 0, 4: 1, 5: 1, 6: 2}
        rng = np.random.default_rng(14)
        seqs = []
        for _ in range(30):
            seq = [int(rng.integers(0, vocab))]
            for _ in range(7):
                seq.append(succ[seq[-1]] if rng.random() < 0.85
                           else int(rng.integers(0, vocab)))
            seqs.append(seq)
        sentences = []
        for seq in seqs[:8]:
            s = random_sentence(np.random.default_rng(sum(seq)), vocab, len(seq))
            sentences.append(sk.InkSentence(
                tuple(sk.Glyph(t, g.strokes) for t, g in zip(seq, s.glyphs)),
                tuple(seq)))

        wins = 0
        for seed in range(5):
            lm = DstfnModel(toy_config(), seed=100 + seed, dtype=np.float32)
            opt = nn.Adam(lm.store, lr=3e-3)
            for _ in range(60):
                with nn.GradTape() as tape:
                    loss = lm.pretrain_loss(seqs)
                tape.backward(loss)
                opt.step()
            fresh = VcnModel(toy_config(), seed=200 + seed, dtype=np.float32)
            warm = VcnModel(toy_config(), seed=200 + seed, dtype=np.float32)
            warm.load_pretrained_stack(lm.store.as_arrays())
            l_fresh = float(fresh.loss(sentences).data)
            l_warm = float(warm.loss(sentences).data)
            wins += int(l_warm < l_fresh)
        assert wins >= 4, wins

    def test_pretrained_load_rejected_for_lstm(self):
        model = VcnModel(toy_config(), variant=VcnVariant.RECURRENT, seed=15)
        with pytest.raises(ValidationError):
            model.load_pretrained_stack({})


class TestSharedArchitecture:
    def test_encoder_configuration_identity(self):
        cfg = toy_config()
        dstfn = DstfnModel(cfg, seed=1)
        vcn = VcnModel(cfg, seed=1)
        sbd = SbdcnnModel(cfg, seed=1)
        glyph_names = [n for n in dstfn.store.names() if n.startswith("glyph.")]
        for other in (vcn, sbd):
            other_names = [n for n in other.store.names() if n.startswith("glyph.")]
            assert other_names == glyph_names
            for n in glyph_names:
                assert other.store[n].shape == dstfn.store[n].shape
