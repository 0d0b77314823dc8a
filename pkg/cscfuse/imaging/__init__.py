"""Image I/O, color conversion and the classical filters used by the fusion pipelines."""

from cscfuse.imaging.color import rgb_to_ycbcr, ycbcr_to_rgb
from cscfuse.imaging.filters import (
    base_detail_split,
    fast_guided_filter,
    guided_filter,
    percentile_stretch,
    resample,
    saliency_map,
    sobel_gradients,
)
from cscfuse.imaging.planes import ColorSpace, ImagePlane, ImageStack
from cscfuse.imaging.reader_factory import get_reader, load_image, read_all_images, save_image

__all__ = [
    "ColorSpace", "ImagePlane", "ImageStack", "base_detail_split", "fast_guided_filter",
    "get_reader", "guided_filter", "load_image", "percentile_stretch", "read_all_images",
    "resample", "rgb_to_ycbcr", "saliency_map", "save_image", "sobel_gradients", "ycbcr_to_rgb",
]
