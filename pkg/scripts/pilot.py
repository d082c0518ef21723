"""Desk-scale pilot: forge -> pretrain -> train three models -> eval orderings."""

import sys
import time

import numpy as np

from inkline import evaluation as ev
from inkline import forge, nn, training
from inkline.config import preset_config


def main():
    t0 = time.time()
    vocab = 40
    cfg = preset_config("desk", vocab)
    alpha = forge.make_alphabet(vocab, seed=101)
    corpus = forge.make_corpus(vocab, seed=102)
    sizes = {"train": int(sys.argv[1]) if len(sys.argv) > 1 else 1500,
             "dev": 100, "test": 200}
    splits, stats = forge.make_splits(corpus, alpha, sizes, seed=103)
    print(f"[{time.time()-t0:6.1f}s] forged {stats.sizes}", flush=True)

    train = splits["train"]
    test = splits["test"][:150]
    token_seqs = [list(s.targets) for s in train]

    lm = training.build_model("dstfn", cfg, seed=1)
    rows, ppl = training.pretrain_lm(lm, token_seqs, epochs=int(sys.argv[2]) if len(sys.argv) > 2 else 4,
                                     batch_size=16, lr=1e-3, seed=2)
    print(f"[{time.time()-t0:6.1f}s] pretrain ppl={ppl:.2f} "
          f"first={rows[0].loss:.3f} last={rows[-1].loss:.3f}", flush=True)
    lm_arrays = lm.store.as_arrays()

    steps1 = int(sys.argv[3]) if len(sys.argv) > 3 else 300
    steps2 = int(sys.argv[4]) if len(sys.argv) > 4 else 300
    settings = training.TrainSettings(steps_period1=steps1, steps_period2=steps2,
                                      batch_size=12, lr=1e-3, seed=3,
                                      style_refresh=1000, log_every=50)

    models = {}
    # DSTFN: adopt the pretrained stack wholesale
    dstfn = training.build_model("dstfn", cfg, seed=4)
    dstfn.store.load_arrays(lm_arrays)
    logs = training.train_curriculum(dstfn, train, alpha, settings)
    print(f"[{time.time()-t0:6.1f}s] dstfn trained, last loss {logs[-1].loss:.3f}", flush=True)
    models["dstfn"] = dstfn

    vcn = training.build_model("vcn-decoder", cfg, seed=5)
    vcn.load_pretrained_stack(lm_arrays)
    logs = training.train_curriculum(vcn, train, alpha, settings)
    print(f"[{time.time()-t0:6.1f}s] vcn trained, last loss {logs[-1].loss:.3f}", flush=True)
    models["vcn"] = vcn

    sbd = training.build_model("sbdcnn", cfg, seed=6)
    logs = training.train_curriculum(sbd, train, alpha, settings)
    print(f"[{time.time()-t0:6.1f}s] sbdcnn trained, last loss {logs[-1].loss:.3f}", flush=True)
    models["sbdcnn"] = sbd

    for scenario in (ev.Scenario.FULL_STROKES, ev.Scenario.RETAIN70_ALL,
                     ev.Scenario.CONTINUOUS_REDUCTION):
        for name, model in models.items():
            rng = np.random.default_rng(777)
            rep = ev.run_scenario(model, test, scenario, rng, repeats=3,
                                  alphabet=alpha, model_name=name)
            e = rep.entries[0]
            per1 = [round(pk[0], 3) for pk in e.per_repeat]
            print(f"[{time.time()-t0:6.1f}s] {scenario.value:8s} {name:7s} "
                  f"P@1={e.mean[0]:.3f} P@5={e.mean[4]:.3f} per-seed P@1={per1}", flush=True)

    # zero-stroke at forced positions, gold history
    dstfn = models["dstfn"]
    hits = total = 0
    for s in test[:60]:
        forced = corpus.forced_positions(s.targets)
        if not forced:
            continue
        vecs = dstfn.encode_glyphs(s.glyphs).data
        for i in forced:
            v = vecs[: i + 1].copy()
            v[i] = dstfn.empty_glyph_vector()
            row = dstfn.position_logits(list(s.targets[:i]), nn.Tensor(v))
            hits += int(np.argmax(row) == s.targets[i])
            total += 1
    print(f"[{time.time()-t0:6.1f}s] zero-stroke forced P@1 = {hits}/{total} = {hits/max(1,total):.3f}", flush=True)
    print(f"total {time.time()-t0:.1f}s", flush=True)


if __name__ == "__main__":
    main()
