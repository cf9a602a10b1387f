from noise.model import (
    NoiseModel,
    fit_noise_model,
    perturb,
    save_noise_model,
    load_noise_model,
)
