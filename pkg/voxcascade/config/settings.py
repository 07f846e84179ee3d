# VoxCascade

# FILE FORMATS
VOLUME_MAGIC = b"VOL1"
CHECKPOINT_MAGIC = b"CKPT1"
VOLUME_DTYPE = "f32"
# Little-endian 32-bit floats on disk, whatever the in-memory precision is.
DISK_FLOAT = "<f4"

# VOL1 JSON HEADER FIELDS
FIELD_SHAPE = "shape"
FIELD_SPACING = "spacing"
FIELD_DTYPE = "dtype"

# CKPT1 JSON FIELDS
FIELD_SCALE = "scale"
FIELD_SEED = "seed"
FIELD_NETWORKS = "networks"
FIELD_NAME = "name"
FIELD_FAMILY = "family"
FIELD_CONFIG = "config"
FIELD_PARAMETERS = "parameters"
FIELD_EPOCH = "epoch"

# NETWORK CLASS INSTANCES:
NETWORKS = {
    "lr_unet": ("voxcascade.network_handler.lr_unet", "LRUNetGenerator"),
    "hr_resnet": ("voxcascade.network_handler.hr_resnet", "HRResNetGenerator"),
    "discriminator": ("voxcascade.network_handler.discriminator", "PatchDiscriminator"),
    "identity": ("voxcascade.network_handler.identity", "IdentityGenerator"),
}

# MEMORY MODEL ARCHITECTURES:
ARCHITECTURES = {
    "dcgan3d": ("voxcascade.architecture_handler.dcgan3d", "DCGAN3D"),
    "pix2pix3d": ("voxcascade.architecture_handler.pix2pix3d", "Pix2Pix3D"),
    "pggan3d": ("voxcascade.architecture_handler.pggan3d", "PGGAN3D"),
    "lr64": ("voxcascade.architecture_handler.cascade", "LowResolution64"),
    "hr32": ("voxcascade.architecture_handler.cascade", "HighResolution32"),
}
BASELINE_ARCHITECTURES = ("dcgan3d", "pix2pix3d", "pggan3d")

# SCALE PLAN
# Side of the whole-volume image produced at scale 0.
DEFAULT_LR_SIDE = 64
# Side of every patch generated at the scales above 0.
DEFAULT_PATCH_SIDE = 32
# Border of a generated patch that is thrown away before pasting.
DEFAULT_VALID_MARGIN = 4

# INTENSITY NORMALIZATION
DEFAULT_LOW_PERCENTILE = 0.005
DEFAULT_HIGH_PERCENTILE = 0.995

# SKETCH (CANNY) CONFIG:
# Standard deviation, in voxels, of the smoothing applied before differentiation.
DEFAULT_CANNY_SIGMA = 1.0
# Hysteresis thresholds, as percentiles of the nonzero gradient magnitudes.
DEFAULT_CANNY_LOW = 0.70
DEFAULT_CANNY_HIGH = 0.90
# Gaussian kernels are truncated at this many standard deviations.
GAUSSIAN_TRUNCATE = 3.0
# Edge voxels live in (0, EDGE_CEILING]; label voxels are exactly LABEL_VALUE.
EDGE_CEILING = 0.9
LABEL_VALUE = 1.0
# Magnitudes are compared at this relative resolution, so that rounding noise
# cannot flip a non-maximum suppression tie.
MAGNITUDE_RESOLUTION = 1e-10
# Neighbour components smaller than tan(22.5 deg) of the dominant one are dropped
# when the gradient direction is snapped to the 26-neighbourhood.
DIRECTION_SNAP = 0.41421356
# Label transforms, applied about the mask centroid.
LABEL_TRANSFORMS = ("identity", "mirror-y", "scale-0.85", "scale-1.15")

# NETWORKS
LR_BASE_CHANNELS = 16
LR_LEVELS = 4
LR_DROPOUT = 0.5
HR_CHANNELS = 32
HR_RES_BLOCKS = 6
D_BASE_CHANNELS = 16
D_LAYERS = 4
LEAKY_SLOPE = 0.2
INSTANCE_NORM_EPS = 1e-5
INIT_STD = 0.02
# Calibration constant: the share of a residual-block convolution's padding counted
# into the HR generator's valid margin, set so the default generator gives margin 4.
RESIDUAL_PADDING_WEIGHT = 0.25

# TRAINING CONFIG:
DEFAULT_EPOCHS = 10
DEFAULT_PATCHES_PER_VOLUME = 8
ADAM_LR = 2e-4
ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
LAMBDA_L1 = 100.0
# Scores are clamped to [SCORE_EPS, 1 - SCORE_EPS] before the log.
SCORE_EPS = 1e-7

# AUGMENTATION CONFIG:
BLUR_PROBABILITY = 0.30
HALVE_PROBABILITY = 0.20
NOISE_STD = 0.05
BLUR_SIGMA_RANGE = (0.5, 1.0)
# Share of sampled patches forced to intersect the label mask, when there is one.
LABEL_PATCH_SHARE = 0.5

# METRICS
SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0

# PHANTOM CONFIG:
PHANTOM_BACKGROUND = 0.05
PHANTOM_INTENSITY_RANGE = (0.35, 0.85)
PHANTOM_SHELL_SCALE = 0.55
PHANTOM_LESION_VALUE = 1.0
SMOOTH_SIGMA = 1.0
SPECKLE_STD = 0.15
SHARPEN_AMOUNT = 2.0

# MEMORY MODEL
BYTES_PER_SCALAR = 4
# Forward activation and its gradient are both alive during the backward pass.
ACTIVATION_COPIES = 2
# Adam keeps two moments per parameter.
OPTIMIZER_COPIES = 2

# CSV COLUMNS
LOSS_COLUMNS = ("step", "loss_D", "loss_G_adv", "loss_G_L1")
MEMORY_COLUMNS = ("arch", "side", "activations_G", "activations_D", "params", "grads", "optimizer",
                  "images", "total_bytes")
METRIC_COLUMNS = ("ssim", "mae", "mse", "psnr")

# FILE NAMES
MANIFEST_NAME = "manifest.json"
LOSS_LOG_NAME = "losses_scale{scale}.csv"
CHECKPOINT_NAME = "scale{scale}.ckpt"
EPOCH_CHECKPOINT_NAME = "scale{scale}_epoch{epoch}.ckpt"
SCALE_OUTPUT_NAME = "scale{scale}.vol"

# BASELINE ARCHITECTURES (memory model only)
# Channels of every DCGAN and Pix2Pix layer.
BASELINE_CHANNELS = 16
# Feature maps of every PGGAN stage up to 256^3.
PGGAN_FEATURE_MAPS = 64
LATENT_SIZE = 32

# DATASET AND OUTPUT FILES
VOLUME_EXTENSIONS = (".vol",)
# A volume's label mask sits next to it as <stem>.mask.vol
MASK_SUFFIX = ".mask.vol"
PHANTOM_NAME = "phantom_{seed:04d}_{domain}"
SKETCH_OUTPUT_NAME = "sketch_scale{scale}.vol"
LR_ONLY_OUTPUT_NAME = "lr_only.vol"
DEFAULT_MEMORY_SIDES = (32, 64, 128)
