"""Command-line entry point.

Subcommands:
  verify     oracle-equivalence suites (loop oracles vs optimized paths)
  gradcheck  finite-difference gradient suite
  bench      MAC-scaling experiment, CSV ``model,T,S,dh,macs`` plus slopes
  train-toy  train one toy model on synthetic videos
  eval       view protocol + ensemble + metrics on synthetic videos
  synth      write a synthetic dataset to disk

All randomness derives from the ``--seed`` flag of each subcommand.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import attention, reference
from .bench import mac_scaling_experiment
from .config import HarnessConfig, ModelConfig, load_config, parse_config
from .gsf import GsfConfig, ToyBackboneConfig, gsf_forward, init_backbone_params, init_gsf_params, toy_backbone_forward
from .heads import init_head_params, multitask_heads, multitask_loss, write_score_file
from .metrics import evaluate_predictions
from .sampling import aggregate_views, generate_views
from .synth import SynthSpec, synth_videos
from .tensor import Tensor, grad_check, no_grad, save_checkpoint, save_tensor_txt
from .train import train_toy
from .vit import XViTConfig, init_xvit_params, xvit_forward


def _report(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True

    worst = 0.0
    for _ in range(20):
        a = rng.standard_normal((rng.integers(1, 7), rng.integers(1, 7)))
        b = rng.standard_normal((a.shape[1], rng.integers(1, 7)))
        from .tensor import matmul
        got = matmul(Tensor(a), Tensor(b)).data
        worst = max(worst, float(np.abs(got - reference.matmul_loops(a, b)).max()))
    ok &= _report("matmul vs triple-loop oracle", worst < 1e-12,
                  f"20 seeded cases, max abs err {worst:.2e}")

    worst = 0.0
    for _ in range(5):
        x = rng.standard_normal((2, 3, 4, 5))
        k = rng.standard_normal((2, 2, 3, 3, 3))
        b = rng.standard_normal(2)
        from .tensor import conv3d
        got = conv3d(Tensor(x), Tensor(k), Tensor(b)).data
        worst = max(worst, float(np.abs(got - reference.conv3d_loops(x, k, b)).max()))
    ok &= _report("conv3d vs nested-loop oracle", worst < 1e-12,
                  f"5 seeded cases, max abs err {worst:.2e}")

    from .tensor import layer_norm, softmax_lastdim
    x = rng.uniform(-1e4, 1e4, size=(50, 17))
    sums = softmax_lastdim(Tensor(x)).data.sum(axis=-1)
    err = float(np.abs(sums - 1.0).max())
    ok &= _report("softmax normalization", err < 1e-12,
                  f"magnitude 1e4 inputs, max |sum-1| {err:.2e}")

    y = layer_norm(Tensor(rng.standard_normal((40, 13)))).data
    mean_err = float(np.abs(y.mean(axis=-1)).max())
    var_err = float(np.abs(y.var(axis=-1) - 1.0).max())
    ok &= _report("layer_norm moments", mean_err < 1e-12 and var_err < 1e-6,
                  f"max |mean| {mean_err:.2e}, max |var-1| {var_err:.2e}")

    worst = 0.0
    cases = 0
    for s in (1, 4, 9):
        for t in (1, 2, 4, 8):
            for d_h in (4, 8, 64):
                for t_w in (0, 1, 2):
                    if d_h < 2 * t_w + 1:
                        continue
                    field = attention.TokenField(
                        q=rng.standard_normal((t, s, d_h)),
                        k=rng.standard_normal((t, s, d_h)),
                        v=rng.standard_normal((t, s, d_h)))
                    plan = attention.build_channel_plan(d_h, t_w)
                    with no_grad():
                        got = attention.stm_attention(field, plan).data
                    worst = max(worst, float(np.abs(got - attention.eq1_reference(field, plan)).max()))
                    cases += 1
    ok &= _report("space-time mixing attention vs loop reference", worst < 1e-12,
                  f"{cases} grid cases, max abs err {worst:.2e}")

    return 0 if ok else 1


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True

    plan = attention.build_channel_plan(6, 1)

    def attn_loss(q, k, v):
        return attention.stm_attention(attention.TokenField(q=q, k=k, v=v), plan).sum()

    shape = (3, 2, 6)
    err = grad_check(attn_loss, [Tensor(rng.standard_normal(shape)) for _ in range(3)])
    ok &= _report("grad stm_attention", err < 1e-4, f"max rel err {err:.2e}")

    for fusion in ("additive", "weighted"):
        cfg = GsfConfig(channels=4, fusion=fusion)
        params = init_gsf_params(cfg, rng)
        names = sorted(params)
        x = Tensor(rng.standard_normal((4, 3, 5, 5)))

        def gsf_loss(xx, *ps):
            return gsf_forward(xx, cfg, dict(zip(names, ps))).sum()

        err = grad_check(gsf_loss, [x] + [params[n] for n in names])
        ok &= _report(f"grad gsf_forward[{fusion}]", err < 1e-4, f"max rel err {err:.2e}")

    head_params = init_head_params(5, (3, 4, 6), rng)
    names = sorted(head_params)
    feat = Tensor(rng.standard_normal(5))

    def loss_fn(f, *ps):
        return multitask_loss(multitask_heads(f, dict(zip(names, ps))), (1, 2, 3))

    err = grad_check(loss_fn, [feat] + [head_params[n] for n in names])
    ok &= _report("grad multitask_loss", err < 1e-6, f"max rel err {err:.2e}")

    bb = ToyBackboneConfig(class_counts=(2, 2, 3), stage_channels=(4, 6))
    bb_params = init_backbone_params(bb, args.seed)
    names = sorted(bb_params)
    clip = Tensor(rng.standard_normal((2, 3, 8, 8)))

    def backbone_loss(*ps):
        return multitask_loss(toy_backbone_forward(clip, bb, dict(zip(names, ps))), (0, 1, 2))

    err = grad_check(backbone_loss, [bb_params[n] for n in names])
    ok &= _report("grad gsf toy backbone end-to-end", err < 1e-4, f"max rel err {err:.2e}")

    vcfg = XViTConfig.toy(class_counts=(2, 2, 3), layers=1, heads=2, embed_dim=8,
                          patch=4, frames=2, image_size=8)
    v_params = init_xvit_params(vcfg, args.seed)
    names = sorted(v_params)
    clip = Tensor(rng.standard_normal((2, 3, 8, 8)))

    def vit_loss(*ps):
        return multitask_loss(xvit_forward(clip, vcfg, dict(zip(names, ps))), (0, 1, 2))

    err = grad_check(vit_loss, [v_params[n] for n in names])
    ok &= _report("grad mixing-attention transformer end-to-end", err < 1e-4,
                  f"max rel err {err:.2e}")

    return 0 if ok else 1


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cmd_bench(args) -> int:
    t_list = [int(t) for t in args.frames.split(",")]
    lines = ["model,T,S,dh,macs"]
    slopes = {}
    for model in ("stm", "full"):
        result = mac_scaling_experiment(model, t_list, args.tokens, args.head_dim,
                                        seed=args.seed)
        lines.extend(result.csv_rows())
        slopes[model] = result.slope
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(csv_text, encoding="utf-8")
        print(f"wrote {args.out}")
    else:
        print(csv_text, end="")
    for model, slope in slopes.items():
        print(f"log-log slope[{model}] = {slope:.4f}")
    return 0


# ---------------------------------------------------------------------------
# train-toy
# ---------------------------------------------------------------------------

def _load_harness_config(args) -> HarnessConfig:
    if args.config:
        return load_config(args.config)
    return parse_config({})


def cmd_train_toy(args) -> int:
    cfg = _load_harness_config(args)
    model_cfg = ModelConfig.from_dict({"kind": args.model}) if args.model else cfg.model
    data = synth_videos(SynthSpec(samples_per_class=args.samples_per_class,
                                  frames=args.clip_frames, seed=args.seed))
    spec = cfg.train if cfg.train is not None else model_cfg.default_train_spec()
    if args.epochs is not None:
        spec = model_cfg.default_train_spec(epochs=args.epochs) if cfg.train is None else \
            type(spec)(base_lr=spec.base_lr, batch_size=spec.batch_size,
                       epochs=args.epochs, momentum=spec.momentum,
                       warmup_steps=spec.warmup_steps)
    model = model_cfg.build(data.vocab.class_counts)
    result = train_toy(model, data, spec, seed=args.seed)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history_lines = ["epoch,loss,lr,verb_top1,noun_top1,action_top1"]
    for h in result.history:
        history_lines.append(
            f"{h['epoch']},{h['loss']:.9g},{h['lr']:.9g},"
            f"{h['verb_top1']:.9g},{h['noun_top1']:.9g},{h['action_top1']:.9g}")
    (out_dir / "history.csv").write_text("\n".join(history_lines) + "\n", encoding="utf-8")
    save_checkpoint(result.params, out_dir / "checkpoint.txt")
    last = result.history[-1]
    print(f"trained {model_cfg.kind} for {spec.epochs} epochs: "
          f"loss {last['loss']:.4f}, action top-1 {last['action_top1']:.1f}%")
    print(f"wrote {out_dir / 'history.csv'} and {out_dir / 'checkpoint.txt'}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    cfg = _load_harness_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_data = synth_videos(SynthSpec(samples_per_class=args.samples_per_class,
                                        frames=args.clip_frames, seed=args.seed))
    eval_data = synth_videos(SynthSpec(samples_per_class=args.eval_samples_per_class,
                                       frames=args.video_length, seed=args.seed + 1))
    class_counts = train_data.vocab.class_counts

    member_video_scores = []
    for m_i, member_cfg in enumerate(cfg.ensemble):
        model = member_cfg.build(class_counts)
        spec = cfg.train if cfg.train is not None else member_cfg.default_train_spec()
        if args.epochs is not None:
            spec = type(spec)(base_lr=spec.base_lr, batch_size=spec.batch_size,
                              epochs=args.epochs, momentum=spec.momentum,
                              warmup_steps=spec.warmup_steps)
        result = train_toy(model, train_data, spec, seed=args.seed + m_i)
        video_scores = []
        with no_grad():
            for video in eval_data.videos:
                views = generate_views(video, cfg.views, cfg.sampling)
                scores = [model.forward(Tensor(view), result.params) for view in views]
                video_scores.append(aggregate_views(scores, cfg.views))
        member_video_scores.append(video_scores)
        seg_ids = [f"seg{i:05d}" for i in range(len(eval_data.videos))]
        score_path = out_dir / f"scores_{member_cfg.kind}_{m_i}.csv"
        write_score_file(score_path, seg_ids, video_scores)
        print(f"member {m_i} ({member_cfg.kind}): wrote {score_path}")

    from .heads import ensemble_average
    ensembled = [ensemble_average([ms[i] for ms in member_video_scores])
                 for i in range(len(eval_data.videos))]
    report = evaluate_predictions(ensembled, eval_data.labels)
    table = report.to_text_table(title="Ensemble")
    print(table)
    (out_dir / "metrics.csv").write_text(report.to_csv(), encoding="utf-8")
    (out_dir / "metrics.txt").write_text(table + "\n", encoding="utf-8")
    print(f"wrote {out_dir / 'metrics.csv'}")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    data = synth_videos(SynthSpec(samples_per_class=args.samples_per_class,
                                  frames=args.clip_frames, seed=args.seed))
    out_dir = Path(args.out_dir)
    (out_dir / "videos").mkdir(parents=True, exist_ok=True)
    rows = ["segment_id,verb_id,noun_id"]
    for i, (video, (verb, noun, _)) in enumerate(zip(data.videos, data.labels)):
        seg = f"seg{i:05d}"
        save_tensor_txt(Tensor(video), out_dir / "videos" / f"{seg}.txt")
        rows.append(f"{seg},{verb},{noun}")
    (out_dir / "annotations.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"wrote {len(data.videos)} videos and annotations to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master 64-bit seed")
    p.add_argument("--config", type=str, default=None, help="JSON harness config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stmix", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="oracle-equivalence suites")
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("bench", help="MAC scaling experiment")
    _add_common(p)
    p.add_argument("--frames", type=str, default="2,4,8,16",
                   help="comma-separated frame counts")
    p.add_argument("--tokens", type=int, default=49, help="spatial tokens S")
    p.add_argument("--head-dim", type=int, default=64, help="head channels d_h")
    p.add_argument("--out", type=str, default=None, help="CSV output path")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train-toy", help="train a toy model on synthetic videos")
    _add_common(p)
    p.add_argument("--model", choices=["gsf_toy", "xvit_toy"], default=None)
    p.add_argument("--samples-per-class", type=int, default=8)
    p.add_argument("--clip-frames", type=int, default=8)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out-dir", type=str, default="runs/train_toy")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("eval", help="view protocol + ensemble + metrics")
    _add_common(p)
    p.add_argument("--samples-per-class", type=int, default=8)
    p.add_argument("--eval-samples-per-class", type=int, default=3)
    p.add_argument("--clip-frames", type=int, default=8)
    p.add_argument("--video-length", type=int, default=32)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out-dir", type=str, default="runs/eval")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    _add_common(p)
    p.add_argument("--samples-per-class", type=int, default=8)
    p.add_argument("--clip-frames", type=int, default=8)
    p.add_argument("--out-dir", type=str, default="runs/synth")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
