from geometry.rasterize import rasterize_polygon
from geometry.spline import eyebrow_stroke, catmull_rom_chain, polygon_area
from geometry.masks import landmarks_to_mask, component_polygons, fold_seven_classes
from geometry.normalize import normalize_face, jitter_sample, fit_width, face_box, resample
from geometry.augment import occlusion_augment, draw_occluder
from geometry.io import (
    parse_pts,
    parse_pts_text,
    write_pts,
    save_mask_png,
    load_mask_png,
    save_image_png,
    load_image_png,
)
