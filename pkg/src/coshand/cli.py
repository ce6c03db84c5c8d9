"""Umbrella CLI: dataset generation, pipeline building, training, evaluation,
one-shot sampling, and the HTTP service."""

import json

import click

from .errors import CoshandError


@click.group()
def main():
    """Mask-conditioned interaction outcome prediction toolkit."""


def _fail(e: CoshandError):
    raise click.ClickException(f"[{e.code}] {e}")


@main.command("gen-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--n", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--split", default="train", show_default=True)
@click.option("--canvas", default=64, show_default=True)
def gen_data(out, n, seed, split, canvas):
    """Generate a toy-world frame-pair dataset."""
    from .toyworld import make_dataset

    try:
        manifest = make_dataset(n, seed=seed, split=split, out_root=out, canvas_size=canvas)
    except CoshandError as e:
        _fail(e)
    click.echo(f"wrote {manifest.count} samples to {out}/{split}")


@main.command("build-dataset")
@click.option("--videos", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--segmenter-url", required=True, help="HTTP segmenter endpoint")
@click.option("--split", default="train", show_default=True)
@click.option("--fps", default=12.0, show_default=True)
@click.option("--interval", default=3, show_default=True)
@click.option("--stride", default=None, type=int)
@click.option("--resolution", default=64, show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--timeout", default=10.0, show_default=True)
@click.option("--retries", default=2, show_default=True)
def build_dataset_cmd(videos, out, segmenter_url, split, fps, interval, stride, resolution, workers, timeout, retries):
    """Extract frame pairs + actor masks from a directory of videos."""
    from .data import HTTPSegmenterAdapter, build_dataset

    adapter = HTTPSegmenterAdapter(segmenter_url, timeout=timeout, retries=retries)
    try:
        manifest = build_dataset(
            videos, adapter, out, split=split, fps=fps, interval=interval,
            stride=stride, resolution=resolution, workers=workers,
        )
    except CoshandError as e:
        _fail(e)
    click.echo(f"wrote {manifest.count} samples ({manifest.source['skipped']} skipped)")


@main.command("pretrain-codec")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", default="train", show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--steps", default=3000, show_default=True)
@click.option("--width", default=64, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--lr", default=2e-3, show_default=True)
@click.option("--seed", default=0, show_default=True)
def pretrain_codec_cmd(data, split, out, steps, width, batch_size, lr, seed):
    """Pretrain the latent codec on a dataset's images, then freeze it."""
    from .codec import CodecConfig, pretrain_codec
    from .data import load_manifest

    manifest = load_manifest(data, split)
    config = CodecConfig(mode="learned", base_width=width, seed=seed)
    try:
        _, holdout_psnr = pretrain_codec(
            manifest, config, out, steps=steps, batch_size=batch_size, lr=lr, seed=seed,
            log_fn=click.echo,
        )
    except CoshandError as e:
        _fail(e)
    click.echo(f"codec saved to {out}; held-out PSNR {holdout_psnr:.2f} dB")


@main.command("train")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--set", "overrides", multiple=True, help="dotted config overrides, key=value")
@click.option("--resume-from", type=click.Path(exists=True))
def train_cmd(config_path, overrides, resume_from):
    """Train the denoiser per a YAML config."""
    from .config import load_train_config
    from .trainer import resume, train

    def echo(record):
        if record["step"] % 50 == 0 or record["step"] == 1:
            click.echo(json.dumps(record))

    try:
        if resume_from:
            import yaml

            tree = {}
            for item in overrides:
                key, raw = item.split("=", 1)
                tree[key] = yaml.safe_load(raw)
            path = resume(resume_from, tree, log_fn=echo)
        else:
            cfg = load_train_config(config_path, overrides)
            path = train(cfg, log_fn=echo)
    except CoshandError as e:
        _fail(e)
    click.echo(f"final checkpoint: {path}")


@main.command("eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", show_default=True)
@click.option("--scales", default=None, help="comma list; >1 scale runs a guidance sweep")
@click.option("--protocol", default="single_seeded", show_default=True,
              type=click.Choice(["single_seeded", "mean_of_k", "best_of_k_by_psnr"]))
@click.option("--k", default=4, show_default=True)
@click.option("--steps", default=50, show_default=True)
@click.option("--guidance", default=2.5, show_default=True)
@click.option("--sampler", default="deterministic", show_default=True)
@click.option("--limit", default=None, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default="report.json", show_default=True, type=click.Path())
@click.option("--csv", "csv_path", default=None, type=click.Path())
@click.option("--identity-lpips", is_flag=True, help="include lpips with the identity backend")
def eval_cmd(ckpt, data, split, scales, protocol, k, steps, guidance, sampler, limit, seed, out, csv_path, identity_lpips):
    """Evaluate a checkpoint on a dataset split; optionally sweep guidance scales."""
    from .diffusion import SampleConfig
    from .evaluate import evaluate, sweep_guidance, sweep_to_dict
    from .metrics import IdentityBackend

    cfg = SampleConfig(steps=steps, guidance_scale=guidance, seed=seed, sampler=sampler)
    backend = IdentityBackend() if identity_lpips else None
    try:
        if scales and "," in scales:
            table = sweep_guidance(
                ckpt, data, split, [float(s) for s in scales.split(",")], cfg,
                protocol=protocol, k=k, backend=backend, limit=limit, base_seed=seed,
                log_fn=click.echo,
            )
            with open(out, "w") as f:
                json.dump(sweep_to_dict(table), f, indent=2, sort_keys=True)
            for s, report in sorted(table.items()):
                agg = report.aggregates
                click.echo(f"s={s:<5} ssim {agg['ssim']['mean']:.4f}  psnr {agg['psnr']['mean']:.2f} dB")
        else:
            report = evaluate(
                ckpt, data, split, cfg, protocol=protocol, k=k, backend=backend,
                limit=limit, base_seed=seed, log_fn=click.echo,
            )
            report.save(out)
            if csv_path:
                report.save_csv(csv_path)
            agg = report.aggregates
            line = f"ssim {agg['ssim']['mean']:.4f}  psnr {agg['psnr']['mean']:.2f} dB"
            if "lpips" in agg:
                line += f"  lpips {agg['lpips']['mean']:.4f}"
            click.echo(line)
    except CoshandError as e:
        _fail(e)
    click.echo(f"report written to {out}")


@main.command("sample")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--image", required=True, type=click.Path(exists=True))
@click.option("--mask-current", required=True, type=click.Path(exists=True))
@click.option("--mask-query", required=True, type=click.Path(exists=True))
@click.option("--out-prefix", default="future", show_default=True)
@click.option("-k", "--num-samples", default=4, show_default=True)
@click.option("--guidance", default=2.5, show_default=True)
@click.option("--steps", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
def sample_cmd(ckpt, image, mask_current, mask_query, out_prefix, num_samples, guidance, steps, seed):
    """One-shot file-in/file-out prediction (the offline twin of /predict)."""
    from .bundle import load_bundle
    from .imageio import load_image_png, load_mask_png, save_image_png
    from .service import predict_images

    bundle = load_bundle(ckpt)
    img = load_image_png(image)
    mc = load_mask_png(mask_current)
    mq = load_mask_png(mask_query)
    try:
        imgs, seeds = predict_images(bundle, img, mc, mq, num_samples, guidance, seed, steps)
    except CoshandError as e:
        _fail(e)
    for j, (im, s) in enumerate(zip(imgs, seeds)):
        path = f"{out_prefix}_{j}_seed{s}.png"
        save_image_png(path, im)
        click.echo(path)


@main.command("serve")
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.option("--max-concurrent", default=None, type=int)
@click.option("--max-image-side", default=None, type=int)
@click.option("--segmenter-url", default=None)
def serve_cmd(ckpt, config_path, host, port, max_concurrent, max_image_side, segmenter_url):
    """Run the prediction HTTP service."""
    import dataclasses

    from .config import load_serve_config
    from .data import HTTPSegmenterAdapter
    from .service import serve

    cfg = load_serve_config(config_path)
    updates = {"checkpoint": ckpt}
    if host:
        updates["host"] = host
    if port:
        updates["port"] = port
    if max_concurrent:
        updates["max_concurrent"] = max_concurrent
    if max_image_side:
        updates["max_image_side"] = max_image_side
    cfg = dataclasses.replace(cfg, **updates)
    segmenter = HTTPSegmenterAdapter(segmenter_url) if segmenter_url else None
    serve(cfg, segmenter=segmenter)


@main.command("plot-sweep")
@click.option("--report", required=True, type=click.Path(exists=True))
@click.option("--out", default="sweep.png", show_default=True, type=click.Path())
def plot_sweep(report, out):
    """Render a guidance-sweep report as an image."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(report) as f:
        table = json.load(f)
    scales = sorted(float(s) for s in table)
    ssims = [table[str(s)]["aggregates"]["ssim"]["mean"] for s in scales]
    psnrs = [table[str(s)]["aggregates"]["psnr"]["mean"] for s in scales]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(scales, ssims, "o-", color="tab:blue", label="SSIM")
    ax1.set_xlabel("guidance scale")
    ax1.set_ylabel("SSIM", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(scales, psnrs, "s--", color="tab:red", label="PSNR")
    ax2.set_ylabel("PSNR (dB)", color="tab:red")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
