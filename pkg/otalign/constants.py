from enum import Enum


class Variant(Enum):
    VANILLA = 0
    ONE_TO_K = 1
    RELAXED_ONE_TO_K = 2
    EXACT_K = 3


class Metric(Enum):
    COSINE_DISTANCE = 0
    NEGATIVE_COSINE = 1
    EUCLIDEAN = 2
    DOT_NEGATIVE = 3


class PointKind(Enum):
    ORIGINAL = 0
    REPLICA = 1
    DUMMY = 2


# Synonyms for each variant
# The first synonym will be used as detailed name in the documentation
SYN_VARIANTS = {
    Variant.VANILLA: [
        "Vanilla optimal transport",
        "vanilla",
        "ot",
        "plain",
        "none",
    ],
    Variant.ONE_TO_K: [
        "One-to-k assignment",
        "onetok",
        "1tok",
        "1k",
        "k",
        "onetokassignment",
    ],
    Variant.RELAXED_ONE_TO_K: [
        "Relaxed one-to-k assignment",
        "relaxedonetok",
        "relaxed1tok",
        "relaxed1k",
        "r1k",
        "relaxed",
    ],
    Variant.EXACT_K: [
        "Exact-k assignment",
        "exactk",
        "exact",
        "kexact",
        "exactkassignment",
    ],
}

# Names used in JSON documents
VARIANT_KEYWORDS = {
    Variant.VANILLA: "vanilla",
    Variant.ONE_TO_K: "one_to_k",
    Variant.RELAXED_ONE_TO_K: "relaxed_one_to_k",
    Variant.EXACT_K: "exact_k",
}

SYN_METRICS = {
    Metric.COSINE_DISTANCE: [
        "Cosine distance (1 - cos)",
        "cosinedistance",
        "cosine",
        "cos",
        "cosdist",
    ],
    Metric.NEGATIVE_COSINE: [
        "Negative cosine similarity (-cos)",
        "negativecosine",
        "negcos",
        "negativecosinesimilarity",
    ],
    Metric.EUCLIDEAN: [
        "Euclidean distance",
        "euclidean",
        "l2",
        "euclid",
    ],
    Metric.DOT_NEGATIVE: [
        "Negative dot product",
        "dotnegative",
        "negativedot",
        "negdot",
        "dot",
    ],
}

METRIC_KEYWORDS = {
    Metric.COSINE_DISTANCE: "cosine_distance",
    Metric.NEGATIVE_COSINE: "negative_cosine",
    Metric.EUCLIDEAN: "euclidean",
    Metric.DOT_NEGATIVE: "dot_negative",
}

# Cost function paired with each variant by the command line
DEFAULT_METRICS = {
    Variant.VANILLA: Metric.COSINE_DISTANCE,
    Variant.ONE_TO_K: Metric.COSINE_DISTANCE,
    Variant.RELAXED_ONE_TO_K: Metric.NEGATIVE_COSINE,
    Variant.EXACT_K: Metric.COSINE_DISTANCE,
}

MARGINAL_TOL = 1e-9
DEFAULT_FEASIBILITY_TOL = 1e-6

# Sinkhorn defaults
DEFAULT_EPSILON_FINAL = 1e-4
DEFAULT_EPSILON_START = 1.0
DEFAULT_SCALING_FACTOR = 0.5
DEFAULT_MAX_ITERATIONS = 500
DEFAULT_CONVERGENCE_TOL = 1e-6
CONVERGENCE_CHECK_PERIOD = 10

# Fraction of the plan mass an assignment must capture to count as a rounding
MIN_CAPTURED_MASS = 0.9

# Active alignment threshold is LAMBDA_FACTOR / (n * m)
LAMBDA_FACTOR = 0.01

# Exact-k needs strictly positive costs; the command line shifts onto this floor
EXACT_K_COST_FLOOR = 1e-3

# Enumeration caps of the brute-force oracles
MAX_ASSIGNMENT_SIZE = 9
MAX_PERTURBATION_SIZE = 7
MAX_ORACLE_ROWS = 4
MAX_ORACLE_COLS = 9

UNIQUENESS_MARGIN = 1e-12

# Rationales
CROSS_ENTROPY_CLIP = 1e-7
DEFAULT_ALPHA = 0.2
DEFAULT_DELTA_GRID_SIZE = 20
DELTA_GRID_FACTOR = 1e-4

# Synthetic cost matrices
SYNTH_BAND_HIGH = 0.1
SYNTH_BACKGROUND_LOW = 0.2
SYNTH_RELAXED_OFFSET = 0.15

THREADS_ENV_VAR = "SPARSE_ALIGN_THREADS"

# Lowercased tokens after which a period does not end a sentence
ABBREVIATIONS = {
    "mr.",
    "mrs.",
    "ms.",
    "dr.",
    "prof.",
    "sr.",
    "jr.",
    "st.",
    "vs.",
    "etc.",
    "e.g.",
    "i.e.",
    "cf.",
    "u.s.",
    "u.k.",
    "no.",
    "fig.",
    "inc.",
    "ltd.",
    "co.",
    "jan.",
    "feb.",
    "mar.",
    "apr.",
    "jun.",
    "jul.",
    "aug.",
    "sep.",
    "sept.",
    "oct.",
    "nov.",
    "dec.",
}

# Command line
COMMANDS = {
    "align": "Align the sentences of two documents",
    "rank": "Rank candidate documents for each query of a manifest",
    "rationale": "Extract binary rationales from an alignment and score them",
    "synth": "Solve every variant on a synthetic cost matrix",
    "verify": "Run the randomized property suite",
}

# Number of positional inputs expected by each command
COMMAND_INPUTS = {
    "align": 2,
    "rank": 1,
    "rationale": 1,
    "synth": 0,
    "verify": 0,
}

HEATMAP_FORMATS = ["text", "svg", "none"]

DEFAULT_VARIANT = Variant.EXACT_K
DEFAULT_K = 2
DEFAULT_SYNTH_K = 4
DEFAULT_SYNTH_ROWS = 30
DEFAULT_SYNTH_COLS = 20
DEFAULT_TRIALS = 1000

# Property suite
VERIFY_MAX_SIZE = 8
VERIFY_MAX_SQUARE = 7
VERIFY_MAX_PERTURBED = 6
VERIFY_MAX_BIRKHOFF = 6
VERIFY_MAX_TERMS = 4
VERIFY_COST_TOL = 1e-3
VERIFY_RECONSTRUCTION_TOL = 1e-8
VERIFY_OPTIMALITY_TOL = 1e-9
VERIFY_PERTURBATION_EPSILONS = (1e-2, 1e-3)
VERIFY_MAX_NON_UNIQUE_RATE = 1e-3
