"""Encoder backends.

Two families, each with a real pretrained path and a toy stand-in:

* diffusion: VQ-encode the image, add schedule noise at a timestep, run
  the UNet encoder under prompt conditioning, and capture the output of
  its last self-attention block at the lowest spatial resolution.
* vit: run a plain vision transformer and keep the final-layer patch
  tokens (class token dropped).

The toy backends (`toy-unet`, `toy-vit`) reproduce the exact geometry and
capture semantics with small fixed weight matrices, so every downstream
contract is exercisable without checkpoints. Real checkpoints load lazily
and only from the local cache; any load failure surfaces as
WeightsUnavailable rather than a stack trace from the model library.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .errors import WeightsUnavailable

CAPTURE_POINTS = ("attn-post-residual", "attn-pre-residual", "block-post-mlp")
DOWNSAMPLE = 32  # pixel-to-patch ratio shared by both families

REAL_DIFFUSION = {
    "ssd-1b": "segmind/SSD-1B",
    "sdxl": "stabilityai/stable-diffusion-xl-base-1.0",
}
REAL_VIT = {
    "dinov2-b": "facebook/dinov2-base",
    "clip-vit-b": "openai/clip-vit-base-patch16",
    "mae-b": "facebook/vit-mae-base",
}


def encoder_family(encoder_id: str) -> str:
    if encoder_id in ("toy-unet", *REAL_DIFFUSION):
        return "diffusion"
    if encoder_id in ("toy-vit", *REAL_VIT):
        return "vit"
    known = ", ".join(sorted(("toy-unet", "toy-vit", *REAL_DIFFUSION, *REAL_VIT)))
    raise ValueError(f"unknown encoder {encoder_id!r} (known: {known})")


# ---------------------------------------------------------------------------
# deterministic weight soup for the toy models: every matrix is a fixed
# function of this constant, never of user input, mirroring how pretrained
# weights are a property of the model and not of the run


def _weights(tag: str, shape: tuple[int, ...]) -> np.ndarray:
    digest = hashlib.sha256(tag.encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(seed).normal(size=shape) / np.sqrt(shape[-1])


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _attention_block(tokens: np.ndarray, tag: str, capture: str) -> np.ndarray:
    """Single-head self-attention with a residual and an MLP tail.

    capture picks which tensor leaves the block: the attention output
    itself, the post-residual sum (default downstream), or the value
    after the feed-forward sublayer.
    """
    dim = tokens.shape[-1]
    q = tokens @ _weights(f"{tag}.q", (dim, dim))
    k = tokens @ _weights(f"{tag}.k", (dim, dim))
    v = tokens @ _weights(f"{tag}.v", (dim, dim))
    attn = _softmax(q @ k.T / np.sqrt(dim)) @ v @ _weights(f"{tag}.o", (dim, dim))
    if capture == "attn-pre-residual":
        return attn
    post = tokens + attn
    if capture == "attn-post-residual":
        return post
    hidden = np.tanh(post @ _weights(f"{tag}.m1", (dim, 2 * dim)))
    return post + hidden @ _weights(f"{tag}.m2", (2 * dim, dim))


def _pool2x(grid: np.ndarray) -> np.ndarray:
    h, w, c = grid.shape
    return grid.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))


# ---------------------------------------------------------------------------
# toy diffusion path


# cumulative signal fraction of the standard linear noise schedule
_BETAS = np.linspace(1e-4, 0.02, 1000)
_ALPHA_BAR = np.cumprod(1.0 - _BETAS)


def add_schedule_noise(latents: np.ndarray, timestep: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Blend in gaussian noise at the schedule's signal/noise mix.

    timestep 0 is the clean image; 1000 is almost pure noise.
    """
    if not 0 <= timestep <= 1000:
        raise ValueError(f"timestep must be in [0, 1000], got {timestep}")
    if timestep == 0:
        return latents
    a = _ALPHA_BAR[timestep - 1]
    eps = rng.normal(size=latents.shape)
    return np.sqrt(a) * latents + np.sqrt(1.0 - a) * eps


def _prompt_embedding(prompt: str, dim: int) -> np.ndarray:
    """Empty prompt is the canonical zero conditioning; anything else is a
    fixed direction derived from the text."""
    if prompt == "":
        return np.zeros(dim)
    digest = hashlib.sha256(prompt.encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    return 0.1 * np.random.default_rng(seed).normal(size=dim)


def toy_unet_features(image: np.ndarray, timestep: int, prompt: str,
                      noise_rng: np.random.Generator,
                      capture: str = "attn-post-residual") -> np.ndarray:
    """VQ-encode, noise, run the encoder, capture the last attention block.

    image is square RGB in [0, 1] with side divisible by 32. The grid that
    comes back is side/32 on each edge, 32 channels.
    """
    side = image.shape[0]
    # VQ encoder stand-in: 8x pooling plus a fixed channel lift
    latents = image.reshape(side // 8, 8, side // 8, 8, 3).mean(axis=(1, 3))
    latents = np.tanh(latents @ _weights("vq.proj", (3, 8)))
    latents = add_schedule_noise(latents, timestep, noise_rng)

    # two downsampling stages to the attention resolution (32x total)
    grid = latents
    for stage in (0, 1):
        grid = _pool2x(grid)
        c = grid.shape[-1]
        grid = np.tanh(grid @ _weights(f"unet.down{stage}", (c, 2 * c)))

    g = grid.shape[0]
    tokens = grid.reshape(g * g, grid.shape[-1])
    tokens = tokens + _prompt_embedding(prompt, tokens.shape[-1])
    out = _attention_block(tokens, "unet.attn", capture)
    return out.reshape(g, g, out.shape[-1]).astype(np.float32)


# ---------------------------------------------------------------------------
# toy vit path


def toy_vit_features(image: np.ndarray,
                     capture: str = "attn-post-residual") -> np.ndarray:
    """Patchify, run two attention blocks with a class token, drop it."""
    side = image.shape[0]
    g = side // DOWNSAMPLE
    patches = image.reshape(g, DOWNSAMPLE, g, DOWNSAMPLE, 3)
    patches = patches.transpose(0, 2, 1, 3, 4).reshape(g * g, DOWNSAMPLE * DOWNSAMPLE * 3)
    tokens = patches @ _weights("vit.embed", (patches.shape[-1], 48))
    cls = _weights("vit.cls", (1, 48))
    tokens = np.concatenate([cls, tokens], axis=0)
    tokens = _attention_block(tokens, "vit.block0", "block-post-mlp")
    tokens = _attention_block(tokens, "vit.block1", capture)
    return tokens[1:].reshape(g, g, tokens.shape[-1]).astype(np.float32)


# ---------------------------------------------------------------------------
# real checkpoints (local cache only; every failure becomes one error type)


def _load_diffusion_features(repo: str, image: np.ndarray, timestep: int,
                             prompt: str, noise_rng: np.random.Generator,
                             capture: str) -> np.ndarray:
    try:
        import torch
        from diffusers import AutoencoderKL, UNet2DConditionModel
        from transformers import AutoTokenizer, CLIPTextModel
    except ImportError as exc:
        raise WeightsUnavailable(f"{repo}: model libraries not installed ({exc})") from exc
    try:
        vae = AutoencoderKL.from_pretrained(repo, subfolder="vae", local_files_only=True)
        unet = UNet2DConditionModel.from_pretrained(repo, subfolder="unet",
                                                    local_files_only=True)
        tokenizer = AutoTokenizer.from_pretrained(repo, subfolder="tokenizer",
                                                  local_files_only=True)
        text_encoder = CLIPTextModel.from_pretrained(repo, subfolder="text_encoder",
                                                     local_files_only=True)
    except Exception as exc:  # noqa: BLE001 - any load problem means no weights
        raise WeightsUnavailable(f"{repo}: checkpoint not in the local cache "
                                 f"({exc})") from exc

    class _CaptureDone(Exception):
        pass

    captured: list = []

    def hook(module, args, output):
        captured.append(output)
        raise _CaptureDone  # the encoder is done; skip mid/up blocks

    with torch.no_grad():
        x = torch.from_numpy(image.transpose(2, 0, 1)[None]).float() * 2.0 - 1.0
        latents = vae.encode(x).latent_dist.mode() * vae.config.scaling_factor
        if timestep > 0:
            eps = torch.from_numpy(
                noise_rng.normal(size=tuple(latents.shape))).float()
            a = float(_ALPHA_BAR[timestep - 1])
            latents = np.sqrt(a) * latents + np.sqrt(1.0 - a) * eps
        ids = tokenizer(prompt, padding="max_length",
                        max_length=tokenizer.model_max_length,
                        return_tensors="pt").input_ids
        cond = text_encoder(ids).last_hidden_state
        block = unet.down_blocks[-1].attentions[-1]
        handle = block.register_forward_hook(hook)
        try:
            unet(latents, torch.tensor([max(timestep, 1)]), encoder_hidden_states=cond)
        except _CaptureDone:
            pass
        finally:
            handle.remove()
    out = captured[0]
    if not torch.is_tensor(out):
        out = out[0]
    _, c, h, w = out.shape
    return out[0].permute(1, 2, 0).reshape(h, w, c).numpy().astype(np.float32)


def _load_vit_features(repo: str, image: np.ndarray) -> np.ndarray:
    try:
        import torch
        from transformers import AutoImageProcessor, AutoModel
    except ImportError as exc:
        raise WeightsUnavailable(f"{repo}: model libraries not installed ({exc})") from exc
    try:
        processor = AutoImageProcessor.from_pretrained(repo, local_files_only=True)
        model = AutoModel.from_pretrained(repo, local_files_only=True)
    except Exception as exc:  # noqa: BLE001
        raise WeightsUnavailable(f"{repo}: checkpoint not in the local cache "
                                 f"({exc})") from exc
    with torch.no_grad():
        inputs = processor(images=(image * 255).astype(np.uint8), return_tensors="pt")
        tokens = model(**inputs).last_hidden_state[0].numpy()
    special = tokens.shape[0] - int(np.sqrt(tokens.shape[0] - 1)) ** 2
    patch = tokens[special:]  # class (and register) tokens lead the sequence
    g = int(np.sqrt(patch.shape[0]))
    return patch.reshape(g, g, -1).astype(np.float32)
