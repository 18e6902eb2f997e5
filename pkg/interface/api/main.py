#!/usr/bin/env python3
"""
FastAPI HTTP API for UCapsNet colourisation
Serves the trained network for plain inference on legacy photos
"""
import sys
import base64
import binascii
import logging
import threading
from pathlib import Path

# Add the project root to Python path
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from typing import Optional
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from domain.model.errors import ColorizationError, DecodeError
from application.service.colorizer import Colorizer
from infrastructure.config.config import Config
from infrastructure.service.imaging.image_io import decode_bytes, encode_png_bytes

# Initialize logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="UCapsNet Colourisation API",
    description="Automatic colourisation of greyscale photographs",
    version="1.0.0",
    docs_url="/docs",
    redoc_url="/redoc"
)

# Loaded on first request
_colorizer: Optional[Colorizer] = None
_load_lock = threading.Lock()


def get_colorizer() -> Colorizer:
    """Get or load the colourizer from UCAPS_API_CHECKPOINT"""
    global _colorizer
    with _load_lock:
        if _colorizer is None:
            if not Config.API_CHECKPOINT:
                raise HTTPException(status_code=503, detail="No checkpoint configured (set UCAPS_API_CHECKPOINT)")
            try:
                _colorizer = Colorizer.from_checkpoint(Config.API_CHECKPOINT)
            except (ColorizationError, OSError) as e:
                logger.error(f"✗ Failed to load checkpoint {Config.API_CHECKPOINT}: {e}")
                raise HTTPException(status_code=500, detail=f"Failed to load checkpoint: {str(e)}")
    return _colorizer


# Request models
class ColorizeRequest(BaseModel):
    """Base64-encoded image in any Pillow-readable format"""
    image_base64: str


class ColorizeResponse(BaseModel):
    """Base64-encoded PNG"""
    image_base64: str
    width: int
    height: int


class CodebookResponse(BaseModel):
    Q: int
    grid_size: float
    fingerprint: str


@app.get("/health")
async def health():
    """Liveness plus whether a checkpoint is loaded"""
    return {"status": "ok", "checkpoint_loaded": _colorizer is not None}


@app.get("/codebook", response_model=CodebookResponse)
def codebook():
    """Summary of the codebook the served network predicts over"""
    cb = get_colorizer().codebook
    return CodebookResponse(Q=cb.Q, grid_size=cb.grid_size, fingerprint=cb.fingerprint())


@app.post("/colorize", response_model=ColorizeResponse)
def colorize(request: ColorizeRequest):
    """
    Colourise one image

    Colour inputs keep only their lightness; the output has the input's size.
    """
    colorizer = get_colorizer()
    try:
        raw = base64.b64decode(request.image_base64, validate=True)
        image = decode_bytes(raw)
    except (binascii.Error, ValueError, DecodeError) as e:
        raise HTTPException(status_code=400, detail=f"Undecodable image: {str(e)}")

    result = colorizer.colorize_rgb(image)
    return ColorizeResponse(
        image_base64=base64.b64encode(encode_png_bytes(result)).decode('ascii'),
        width=result.width,
        height=result.height,
    )


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8001)
