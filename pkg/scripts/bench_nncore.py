"""Microbenchmark: forward+backward cost of one ranking instance.

Sizes the training budget — the learnability run needs >= 20k instances
through several epochs within its time box, so per-instance cost must stay
in the low milliseconds.
"""

import argparse
import time

import numpy as np

from queryrec import nncore as nn


def one_instance(fwd, bwd, attn, fuse, head, xs, s0, meta, actions, dts):
    states = nn.bigru_encode(fwd, bwd, xs)
    h_base = nn.stack(states)
    hp = nn.modulate_sequence(h_base, actions, dts, attn)
    _, glimpse = nn.attend(attn, s0, hp, h_bases=h_base)
    s1 = nn.gru_step(fuse, nn.concat([s0, glimpse]), s0)
    feats = nn.concat([s1, nn.constant(meta)])
    probs = nn.dense_head_probs(head, feats)
    return nn.scale(nn.log(nn.pick(probs, 1)), -1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--input-dim", type=int, default=24)
    ap.add_argument("--seq-len", type=int, default=30)
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()

    r = np.random.default_rng(0)
    d, d_in, L = args.hidden, args.input_dim, args.seq_len
    width = 2 * d
    s0_dim = d
    fwd = nn.GruParams.create(r, d_in, d)
    bwd = nn.GruParams.create(r, d_in, d)
    attn = nn.AttentionParams.create(r, width, s0_dim, d)
    fuse = nn.GruParams.create(r, s0_dim + width, s0_dim)
    head = nn.DenseHead.create(r, s0_dim + 6, 64, 32)
    params = list({**fwd.named("f"), **bwd.named("b"), **attn.named("a"),
                   **fuse.named("u"), **head.named("h")}.values())

    xs = [nn.constant(r.normal(size=d_in)) for _ in range(L)]
    s0 = nn.constant(r.normal(size=s0_dim))
    meta = r.normal(size=6)
    actions = r.integers(1, 5, size=L)
    dts = np.maximum(r.exponential(10.0, size=L), 1e-3)

    # warmup
    for _ in range(5):
        nn.zero_grad(params)
        loss = one_instance(fwd, bwd, attn, fuse, head, xs, s0, meta, actions, dts)
        nn.backward(loss)

    t0 = time.perf_counter()
    for _ in range(args.reps):
        nn.zero_grad(params)
        loss = one_instance(fwd, bwd, attn, fuse, head, xs, s0, meta, actions, dts)
        nn.backward(loss)
    dt = (time.perf_counter() - t0) / args.reps

    t0 = time.perf_counter()
    with nn.no_grad():
        for _ in range(args.reps):
            one_instance(fwd, bwd, attn, fuse, head, xs, s0, meta, actions, dts)
    dt_fwd = (time.perf_counter() - t0) / args.reps

    print(f"hidden={d} input_dim={d_in} seq_len={L}")
    print(f"forward+backward: {dt * 1e3:.2f} ms/instance")
    print(f"forward only:     {dt_fwd * 1e3:.2f} ms/instance")
    print(f"throughput:       {1.0 / dt:,.0f} instances/s training")


if __name__ == "__main__":
    main()
