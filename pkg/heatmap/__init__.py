from heatmap.encoding import (
    HeatmapStack,
    encode_landmarks,
    decode_heatmaps,
    stack_input,
    image_input,
    scaled_sigma,
)
from heatmap.io import save_heatmaps, load_heatmaps
