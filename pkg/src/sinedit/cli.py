"""Command-line entry points.

Exit codes: 0 success, 1 validation or runtime failure (message on stderr
as `error: <context>: <detail>`), 2 usage errors (unknown flags, missing
required options; click's default). Every command accepts --config with a
flat key=value file supplying defaults for its flags.
"""

from __future__ import annotations

import functools
import os
import sys

import click
import numpy as np

from . import __version__
from .config import load_config_file
from .editing import (
    EditRequest,
    ModelBundle,
    Rect,
    edit_fn_for_request,
    run_edit,
    tile_edit,
)
from .embedders import get_embedder
from .errors import SineditError
from .imaging import load_image, load_mask, save_image
from .metrics import score_images, write_report
from .prompts import ChatVariantClient, generate_variants
from .training import TrainConfig, Trainer

# keep fast; the denoiser is tiny and this is a local tool
_PROGRESS_EVERY = 200


def _config_option(fn):
    def apply_config(ctx, param, value):
        if value:
            parsed = load_config_file(value)
            defaults = {k.replace("-", "_"): v for k, v in parsed.items()}
            ctx.default_map = {**defaults, **(ctx.default_map or {})}
        return value

    return click.option(
        "--config",
        type=click.Path(exists=True, dir_okay=False),
        callback=apply_config,
        is_eager=True,
        expose_value=False,
        help="Flat key=value file with defaults for this command's flags.",
    )(fn)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SineditError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
        except FileNotFoundError as exc:
            click.echo(f"error: file not found: {exc.filename or exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(version=__version__)
def main():
    """Train a single-image diffusion model and edit the image with text or region prompts."""


@main.command()
@_config_option
@click.option("--image", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", "output", required=True, type=click.Path(dir_okay=False))
@click.option("--epochs", default=TrainConfig.epochs, show_default=True, type=int)
@click.option("--batch-size", default=TrainConfig.batch_size, show_default=True, type=int)
@click.option("--lr", default=TrainConfig.lr, show_default=True, type=float)
@click.option("--loss", default=TrainConfig.loss, show_default=True,
              type=click.Choice(["l1", "l2"]))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--channels", default=TrainConfig.channels, show_default=True, type=int)
@click.option("--blocks", default=TrainConfig.blocks, show_default=True, type=int)
@click.option("--embed-dim", default=TrainConfig.embed_dim, show_default=True, type=int)
@click.option("--t0", default=TrainConfig.t0, show_default=True, type=int)
@click.option("--ts", default=None, type=int, help="Entry step for scales above the coarsest.")
@click.option("--beta-min", default=TrainConfig.beta_min, show_default=True, type=float)
@click.option("--beta-max", default=TrainConfig.beta_max, show_default=True, type=float)
@click.option("--factor", default=TrainConfig.factor, show_default=True, type=float)
@click.option("--min-dim", default=TrainConfig.min_dim, show_default=True, type=int)
@click.option("--resume", type=click.Path(exists=True, dir_okay=False),
              help="Continue training from this checkpoint.")
@click.option("--quiet", is_flag=True)
@_handle_errors
def train(image, output, epochs, batch_size, lr, loss, seed, channels, blocks,
          embed_dim, t0, ts, beta_min, beta_max, factor, min_dim, resume, quiet):
    """Train on one image and write a checkpoint."""
    if resume:
        trainer = Trainer.from_checkpoint(resume)
        trainer.config.epochs = epochs
    else:
        source = load_image(image)
        cfg = TrainConfig(
            epochs=epochs, batch_size=batch_size, lr=lr, loss=loss, seed=seed,
            channels=channels, blocks=blocks, embed_dim=embed_dim, t0=t0, ts=ts,
            beta_min=beta_min, beta_max=beta_max, factor=factor, min_dim=min_dim,
        )
        trainer = Trainer.new(source, cfg)

    def progress(step, value):
        if not quiet and step % _PROGRESS_EVERY == 0:
            click.echo(f"step {step}/{trainer.config.epochs} loss {value:.4f}")

    trainer.run(progress=progress)
    digest = trainer.save(output)
    if not quiet:
        click.echo(f"checkpoint written: {output} (sha256 {digest[:12]}, step {trainer.step})")


@main.command()
@_config_option
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@_handle_errors
def sample(checkpoint, output, seed):
    """Draw an unconditional sample from a trained model."""
    bundle = ModelBundle.load(checkpoint)
    image = bundle.sampler.run(seed=seed)
    save_image(image, output)
    click.echo(f"sample written: {output}")


def _edit_options(fn=None, *, existing_checkpoint=True):
    if fn is None:
        return lambda f: _edit_options(f, existing_checkpoint=existing_checkpoint)
    ckpt_type = click.Path(exists=existing_checkpoint, dir_okay=False)
    for option in reversed([
        click.option("--checkpoint", required=True, type=ckpt_type),
        click.option("--mode", default="text-full", show_default=True,
                     type=click.Choice(["text-full", "text-roi", "roi-content"])),
        click.option("--prompt", default=None, type=str),
        click.option("--pe/--no-pe", "use_pe", default=False, show_default=True,
                     help="Ensemble several phrasings of the prompt."),
        click.option("--k", "variant_count", default=5, show_default=True, type=int,
                     help="Total phrasings when --pe is on (original included)."),
        click.option("--mask", "mask_path", default=None,
                     type=click.Path(exists=True, dir_okay=False)),
        click.option("--source-rect", default=None, type=str, metavar="X,Y,W,H"),
        click.option("--dest-rect", "dest_rects", multiple=True, type=str, metavar="X,Y,W,H"),
        click.option("--eta", default=0.3, show_default=True, type=float),
        click.option("--momentum", default=0.05, show_default=True, type=float),
        click.option("--seed", default=0, show_default=True, type=int),
        click.option("--scales", default=None, type=str,
                     help="Comma-separated guided scales; default all but the finest."),
        click.option("--sigma-mode", default="auto", show_default=True,
                     type=click.Choice(["auto", "deterministic", "ancestral"])),
        click.option("--embedder", "embedder_name", default="mock", show_default=True),
        click.option("--llm-base-url", default=None, type=str),
        click.option("--llm-model", default=None, type=str),
    ]):
        fn = option(fn)
    return fn


def _build_edit_request(checkpoint, mode, prompt, use_pe, variant_count, mask_path,
                        source_rect, dest_rects, eta, momentum, seed, scales,
                        sigma_mode, embedder_name) -> EditRequest:
    mask = load_mask(mask_path) if mask_path else None
    parsed_scales = None
    if scales:
        parsed_scales = [int(s) for s in scales.split(",") if s.strip()]
    return EditRequest(
        checkpoint=checkpoint,
        mode=mode,
        prompt=prompt,
        use_pe=use_pe,
        variant_count=variant_count,
        mask=mask,
        source_rect=Rect.parse(source_rect, "source_rect") if source_rect else None,
        dest_rects=[Rect.parse(r, "dest_rect") for r in dest_rects],
        eta=eta,
        momentum=momentum,
        seed=seed,
        scales=parsed_scales,
        sigma_mode=sigma_mode,
        embedder_name=embedder_name,
    ).validate()


def _llm_client(base_url, model):
    if base_url and model:
        return ChatVariantClient(base_url=base_url, model=model)
    return None


@main.command()
@_config_option
@_edit_options
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@_handle_errors
def edit(output, llm_base_url, llm_model, **kwargs):
    """Run a guided edit and write the result image."""
    request = _build_edit_request(**kwargs)
    image = run_edit(request, llm_client=_llm_client(llm_base_url, llm_model))
    save_image(image, output)
    click.echo(f"edited image written: {output}")


@main.command()
@_config_option
@click.option("--image", "images", required=True, multiple=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--prompt", required=True, type=str)
@click.option("--embedder", "embedder_name", default="mock", show_default=True)
@click.option("--report", default=None, type=click.Path(dir_okay=False),
              help="Write one JSON record per image to this file.")
@_handle_errors
def score(images, prompt, embedder_name, report):
    """Score images against a prompt; prints per-image scores and the mean."""
    embedder = get_embedder(embedder_name)
    loaded = [(path, load_image(path)) for path in images]
    result = score_images(loaded, prompt, embedder, embedder_id=embedder_name)
    for entry in result.entries:
        click.echo(f"{entry.path}\t{entry.score:.6f}")
    click.echo(f"mean\t{result.mean:.6f}")
    if report:
        write_report(report, result)


@main.command("tile-edit")
@_config_option
@_edit_options(existing_checkpoint=False)
@click.option("--image", required=True, type=click.Path(exists=True, dir_okay=False),
              help="The large scene to edit a tile of.")
@click.option("--rect", required=True, type=str, metavar="X,Y,W,H",
              help="Tile to crop, edit and stitch back.")
@click.option("--feather", default=8, show_default=True, type=int)
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--train-if-missing", is_flag=True,
              help="Train a model on the tile when the checkpoint path does not exist.")
@click.option("--train-epochs", default=2000, show_default=True, type=int)
@click.option("--train-channels", default=TrainConfig.channels, show_default=True, type=int)
@click.option("--train-t0", default=TrainConfig.t0, show_default=True, type=int)
@click.option("--train-min-dim", default=TrainConfig.min_dim, show_default=True, type=int)
@_handle_errors
def tile_edit_cmd(image, rect, feather, output, train_if_missing, train_epochs,
                  train_channels, train_t0, train_min_dim, llm_base_url, llm_model, **kwargs):
    """Crop a tile from a large scene, edit it, and blend it back."""
    scene = load_image(image)
    tile_rect = Rect.parse(rect, "rect")
    tile_rect.validate_within(scene.shape[0], scene.shape[1], "rect")

    checkpoint = kwargs["checkpoint"]
    if not os.path.exists(checkpoint):
        if not train_if_missing:
            click.echo(f"error: checkpoint: {checkpoint} does not exist "
                       "(pass --train-if-missing to train on the tile)", err=True)
            sys.exit(1)
        rows, cols = tile_rect.slices()
        tile = np.ascontiguousarray(scene[rows, cols])
        cfg = TrainConfig(epochs=train_epochs, seed=kwargs["seed"],
                          channels=train_channels, t0=train_t0, min_dim=train_min_dim)
        trainer = Trainer.new(tile, cfg)
        trainer.run()
        trainer.save(checkpoint)
        click.echo(f"trained tile checkpoint: {checkpoint}")

    request = _build_edit_request(**kwargs)
    bundle = ModelBundle.load(request.checkpoint)
    embedder = get_embedder(request.embedder_name)
    fn = edit_fn_for_request(request, bundle, embedder)
    result = tile_edit(scene, tile_rect, fn, feather=feather)
    save_image(result, output)
    click.echo(f"stitched image written: {output}")


@main.command()
@_config_option
@click.option("--prompt", required=True, type=str)
@click.option("--k", default=5, show_default=True, type=int)
@click.option("--llm-base-url", default=None, type=str)
@click.option("--llm-model", default=None, type=str)
@_handle_errors
def variants(prompt, k, llm_base_url, llm_model):
    """Print prompt phrasing variants, one per line."""
    for text in generate_variants(prompt, llm_client=_llm_client(llm_base_url, llm_model), k=k):
        click.echo(text)


@main.command()
@_config_option
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--data-dir", default="sinedit-data", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--frontend", default=None, type=click.Path(file_okay=False),
              help="Directory of built UI assets to serve under /ui.")
@_handle_errors
def serve(host, port, data_dir, frontend):
    """Run the local job service."""
    import uvicorn

    from .service.app import create_app

    app = create_app(data_dir, frontend_dir=frontend)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
