"""Dataset color quantization toolkit.

Clusters images by chromatic similarity, learns one shared palette per
cluster (optionally guided by attention maps), refines palettes against a
Sobel edge-distribution loss, and stores the quantized dataset in a compact
bit-packed container with exact compression accounting.
"""

from .baselines import median_cut, octree_quantize, per_image_kmeans
from .clustering import (
    ClusterModel,
    FormatError,
    cluster_dataset,
    color_histogram_features,
    kmeans,
    load_features,
    write_features,
)
from .color import lab_to_srgb, nearest_palette_index, sobel_magnitude, srgb_to_lab
from .evaluate import (
    DatasetReport,
    ImageMetrics,
    evaluate_dataset,
    image_metrics,
    write_report_csv,
)
from .palette import (
    ClusterPalettes,
    build_all_palettes,
    build_cluster_palette,
    load_attention,
    select_attention_pixels,
    write_attention,
)
from .pipeline import PipelineConfig, StageError, baseline_dataset, run_quantize
from .refine import (
    RefineConfig,
    edge_loss,
    edge_loss_gradient,
    quantize_hard,
    refine_palette,
)
from .store import (
    QuantizedDataset,
    QuantizedRecord,
    compression_ratio,
    decode,
    distinct_color_count,
    encode,
    encoded_size,
    load_dataset,
    load_images,
    prune_tier_label,
    reconstruct,
    write_dataset,
    write_images,
)

__version__ = "0.1.0"
