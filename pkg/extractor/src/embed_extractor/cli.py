"""Command-line entry point.

    embed-extractor extract --manifest poses.csv --images dir --out ds.bin
    embed-extractor embed-text --text "a red chair" --out query.bin
"""

from __future__ import annotations

import sys

import click

from .extract import embed_text as run_embed_text
from .extract import extract as run_extract
from .encoders import DEFAULT_ENCODER, EncoderLoadError, get_encoder, list_encoders
from .formats import FormatError
from .manifest import ManifestError, PoseManifest


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


encoder_opt = click.option(
    "--encoder", default=DEFAULT_ENCODER, show_default=True,
    help=f"Encoder id; one of: {', '.join(list_encoders())}.",
)


@click.group()
def main():
    """Image/text embedding extraction for the navigation stack."""


@main.command("extract")
@click.option("--manifest", required=True, type=click.Path(exists=True),
              help="Pose manifest CSV (image,tx,ty,tz,qw,qx,qy,qz,timestamp).")
@click.option("--images", required=True, type=click.Path(exists=True),
              help="Directory holding the manifest's image files.")
@encoder_opt
@click.option("--out", required=True, type=click.Path(), help="Output dataset file.")
def extract_cmd(manifest, images, encoder, out):
    """Embed manifest images into a pose/embedding dataset."""
    try:
        enc = get_encoder(encoder)
        m = PoseManifest.read(manifest)
        path = run_extract(m, images, enc, out)
    except (EncoderLoadError, ManifestError, FormatError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {path}")


@main.command("embed-text")
@click.option("--text", required=True, help="Query text.")
@encoder_opt
@click.option("--out", required=True, type=click.Path(), help="Output query file.")
def embed_text_cmd(text, encoder, out):
    """Embed a text query into a unit-vector query file."""
    try:
        enc = get_encoder(encoder)
        path = run_embed_text(text, enc, out)
    except (EncoderLoadError, FormatError, ValueError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
