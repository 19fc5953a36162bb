from .camera import Camera, look_at
from .decoder import DecoderMLP, encoding_dim, positional_encode
from .fitting import (FitConfig, PER_OBJECT_LAMBDAS, SHARED_MODE_LAMBDAS,
                      TriplaneParams, fit_shared, fit_triplane, fitting_loss,
                      foreground_psnr)
from .volume import (PosedView, RayBatch, intersect_aabb, sample_rays,
                     volume_render)

__all__ = [
    "Camera", "look_at", "DecoderMLP", "encoding_dim", "positional_encode",
    "FitConfig", "PER_OBJECT_LAMBDAS", "SHARED_MODE_LAMBDAS", "TriplaneParams",
    "fit_shared", "fit_triplane", "fitting_loss", "foreground_psnr",
    "PosedView", "RayBatch", "intersect_aabb", "sample_rays", "volume_render",
]
