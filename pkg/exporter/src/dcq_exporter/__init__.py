"""Neural input exporter for the dcq toolkit: DCQF features, DCQA attention."""

from .cam import CAM_METHODS, compute_cams
from .export import ExportManifest, export_attention, export_features
from .formats import load_dcqi, load_image_stack, write_dcqa, write_dcqf
from .models import last_conv_layer, load_model, preprocess, resolve_layer

__version__ = "0.1.0"
